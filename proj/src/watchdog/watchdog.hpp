// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "registry/registry.hpp"
#include "reset/audit.hpp"

namespace consrv::watchdog {

struct WatchdogPolicy {
    Duration silence_threshold = 120s;
    int probe_retries = 3;
    int max_restarts = 3;
    Duration window = 3600s;
    Duration boot_grace = 180s;
    Duration tick = 5s;
    Duration probe_timeout = 2s;

    // Throws InvalidArgument unless every knob is positive.
    void validate() const;
};

inline constexpr std::string_view kWatchdogPrincipal = "watchdog";
inline constexpr std::string_view kWatchdogReason = "watchdog: unresponsive";

enum class Phase { Healthy, Suspect, Booting, Alarmed };
std::string_view phase_name(Phase p);

enum class ActionKind { None, Probe, Reset, Alarm };
std::string_view action_name(ActionKind k);

struct WatchdogAction {
    ActionKind kind = ActionKind::None;
    std::string detail; // reset reason or alarm cause
};

struct HostStatus {
    std::string host;
    Phase phase = Phase::Healthy;
    TimePoint last_output_at{};
    std::vector<TimePoint> restarts;
    int probes_sent = 0;
    std::string alarm_cause;
};

// Per-host liveness state machine with no I/O; the caller performs actions.
class WatchdogMachine {
public:
    explicit WatchdogMachine(WatchdogPolicy policy);

    const WatchdogPolicy& policy() const { return policy_; }

    // Starts tracking with last output = now. Tracking twice is a no-op.
    void track(const std::string& host, TimePoint now);
    void untrack(const std::string& host);
    bool tracked(const std::string& host) const { return hosts_.count(host) != 0; }

    void record_output(const std::string& host, TimePoint at);
    WatchdogAction evaluate(const std::string& host, TimePoint now);

    // The reset could not be carried out; the restart is not counted.
    void reset_failed(const std::string& host, const std::string& cause);
    // Returns whether the host was Alarmed.
    bool clear(const std::string& host, TimePoint now);

    // When a Suspect host's current probe times out.
    std::optional<TimePoint> probe_deadline(const std::string& host) const;

    HostStatus status(const std::string& host) const;
    std::vector<HostStatus> all() const;

private:
    struct State {
        Phase phase = Phase::Healthy;
        TimePoint last_output_at{};
        std::vector<TimePoint> restarts;
        int probes_sent = 0;
        TimePoint probe_deadline{};
        TimePoint booting_until{};
        std::string alarm_cause;
    };

    void prune(State& s, TimePoint now) const;
    HostStatus to_status(const std::string& host, const State& s) const;

    WatchdogPolicy policy_;
    std::map<std::string, State> hosts_;
};

struct ActionRecord {
    TimePoint at{};
    std::string host;
    ActionKind kind = ActionKind::None;
    std::string detail;
};

// Drives a WatchdogMachine off the clock and carries out its actions.
class Watchdog {
public:
    struct Hooks {
        std::function<std::vector<std::string>()> hosts;        // hosts to supervise
        std::function<void(const std::string&)> send_probe;     // single-port ENQ
        std::function<reset::AuditEvent(const std::string&)> reset;
        std::function<void(const std::string&, const std::string&)> raise_alarm;
    };

    Watchdog(WatchdogPolicy policy, Clock& clock, registry::RegistryStore& store, reset::AuditLog& audit, Hooks hooks);
    ~Watchdog();

    void start();
    void stop();

    // Console output or an answerback from host.
    void on_output(const std::string& host, TimePoint at);

    // Evaluates every supervised host now.
    void tick();

    // Admin only; audited whether or not the host was alarmed.
    reset::AuditEvent clear_alarm(const std::string& principal, const std::string& host);

    std::vector<HostStatus> status() const;
    std::vector<HostStatus> alarms() const;
    std::vector<ActionRecord> actions() const;
    const WatchdogPolicy& policy() const { return policy_; }

private:
    void evaluate_hosts(const std::vector<std::string>& hosts);
    void run_pending();
    void perform(const std::string& host, const WatchdogAction& action);

    WatchdogPolicy policy_;
    Clock& clock_;
    registry::RegistryStore& store_;
    reset::AuditLog& audit_;
    Hooks hooks_;

    mutable std::mutex mu_;
    WatchdogMachine machine_;
    std::vector<ActionRecord> actions_;
    std::map<std::string, TimerId> deadline_timers_;

    // Evaluations requested while one is running (a reset waits on the
    // clock, which may fire further timers) are queued and run afterwards.
    std::mutex run_mu_;
    bool running_ = false;
    bool pending_all_ = false;
    std::set<std::string> pending_hosts_;

    std::unique_ptr<Ticker> ticker_;
};

} // namespace consrv::watchdog
