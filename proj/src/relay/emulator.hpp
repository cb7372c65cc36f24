// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "common/clock.hpp"
#include "relay/frame.hpp"
#include "transport/endpoint.hpp"

namespace consrv::relay {

struct PulseRecord {
    RelayAddress address;
    TimePoint closed_at;
    std::optional<TimePoint> opened_at;
    std::uint8_t duration_tenths = 0;
};

// Software model of up to eight cascaded 8-relay boxes on one serial line.
// Box numbers are fixed by chain position. Pulse contacts reopen on the
// clock, so pulse widths are exact in simulated time.
class ChainEmulator {
public:
    using Sink = std::function<void(RelayAddress, Duration)>;

    ChainEmulator(int boxes, Clock& clock);

    int boxes() const { return boxes_; }

    // Consumes raw line bytes (partial frames are buffered) and returns the
    // reply bytes the chain puts on the line.
    Bytes feed(std::span<const std::uint8_t> raw);

    void set_sink(RelayAddress addr, Sink sink);

    // Reads from the chain's end of the serial line and writes replies back.
    void attach(transport::EndpointPtr line) { line_ = std::move(line); }
    void detach() { line_.reset(); }
    void poll();

    bool contact_closed(RelayAddress addr) const;
    std::vector<PulseRecord> pulses() const;
    std::size_t pulse_count() const;

private:
    void act(const RelayFrame& frame);

    int boxes_;
    Clock& clock_;
    transport::EndpointPtr line_;
    FrameScanner scanner_;
    mutable std::mutex mu_;
    std::array<bool, 64> closed_{};
    std::array<TimerId, 64> release_timer_{};
    std::array<Sink, 64> sinks_{};
    std::vector<PulseRecord> pulses_;
    std::array<std::optional<std::size_t>, 64> open_record_{};
};

} // namespace consrv::relay
