// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "sim/topology.hpp"
#include "transport/endpoint.hpp"

namespace consrv::sim {

enum class NodeState { Off, Booting, Up, Hung, Paniced };
std::string_view node_state_name(NodeState s);

inline constexpr std::string_view kPanicLine = "Kernel panic - not syncing: Attempted to kill init!";

struct NodeOptions {
    Duration bios_delay = 2s;
    std::optional<Duration> heartbeat;
    std::vector<TranscriptLine> transcript;
    // Random console noise while Up, in bytes per second (0 = off).
    double traffic_rate = 0;
    Duration traffic_period = 100ms;
    std::uint64_t seed = 1;
    // Hang this long after every completed boot.
    std::optional<Duration> hang_after_boot;
};

// A worker node behind a console line. All behaviour is scheduled on the
// clock, so a run is a pure function of topology, seed and injected events.
class SimNode {
public:
    using OutputObserver = std::function<void(std::span<const std::uint8_t>)>;

    SimNode(std::string host, transport::EndpointPtr console, Clock& clock, NodeOptions options);
    ~SimNode();

    SimNode(const SimNode&) = delete;
    SimNode& operator=(const SimNode&) = delete;

    const std::string& host() const { return host_; }
    NodeState state() const;
    std::uint64_t boots() const;
    std::uint64_t bytes_emitted() const;

    void power_on();
    void power_off();
    // Reset line pressed for `width`; the node reboots once it is released.
    void reset_pulse(Duration width);
    void inject_hang();
    void inject_panic();
    void set_hang_after_boot(std::optional<Duration> d);

    // Handles console input (ENQ answerback, echo).
    void poll();

    void set_output_observer(OutputObserver obs);
    const std::vector<TranscriptLine>& transcript() const { return options_.transcript; }

private:
    void start_boot(TimePoint at);
    void emit(std::span<const std::uint8_t> bytes);
    void emit(std::string_view s) {
        emit(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    void schedule(TimePoint at, std::function<void()> fn);
    void came_up();
    void heartbeat_tick(std::uint64_t gen);
    void traffic_tick(std::uint64_t gen);

    std::string host_;
    transport::EndpointPtr console_;
    Clock& clock_;
    NodeOptions options_;

    mutable std::recursive_mutex mu_;
    NodeState state_ = NodeState::Off;
    std::uint64_t gen_ = 0;
    std::uint64_t boots_ = 0;
    std::uint64_t heartbeat_n_ = 0;
    std::uint64_t emitted_ = 0;
    std::mt19937_64 rng_;
    std::vector<TimerId> timers_;
    OutputObserver observer_;
};

} // namespace consrv::sim
