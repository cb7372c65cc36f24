// SPDX-License-Identifier: Apache-2.0
#include "watchdog/watchdog.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace consrv::watchdog {

void WatchdogPolicy::validate() const {
    if (silence_threshold <= Duration::zero() || probe_retries <= 0 || max_restarts <= 0 ||
        window <= Duration::zero() || boot_grace <= Duration::zero() || tick <= Duration::zero() ||
        probe_timeout <= Duration::zero()) {
        throw InvalidArgument("watchdog policy values must be positive");
    }
}

std::string_view phase_name(Phase p) {
    switch (p) {
    case Phase::Healthy:
        return "Healthy";
    case Phase::Suspect:
        return "Suspect";
    case Phase::Booting:
        return "Booting";
    case Phase::Alarmed:
        return "Alarmed";
    }
    return "?";
}

std::string_view action_name(ActionKind k) {
    switch (k) {
    case ActionKind::None:
        return "none";
    case ActionKind::Probe:
        return "probe";
    case ActionKind::Reset:
        return "reset";
    case ActionKind::Alarm:
        return "alarm";
    }
    return "?";
}

WatchdogMachine::WatchdogMachine(WatchdogPolicy policy) : policy_(policy) { policy_.validate(); }

void WatchdogMachine::track(const std::string& host, TimePoint now) {
    if (hosts_.count(host)) return;
    State s;
    s.last_output_at = now;
    hosts_.emplace(host, std::move(s));
}

void WatchdogMachine::untrack(const std::string& host) { hosts_.erase(host); }

void WatchdogMachine::record_output(const std::string& host, TimePoint at) {
    auto it = hosts_.find(host);
    if (it == hosts_.end()) return;
    auto& s = it->second;
    s.last_output_at = std::max(s.last_output_at, at);
    if (s.phase == Phase::Suspect) {
        s.phase = Phase::Healthy;
        s.probes_sent = 0;
    }
}

void WatchdogMachine::prune(State& s, TimePoint now) const {
    std::erase_if(s.restarts, [&](TimePoint t) { return t <= now - policy_.window; });
}

WatchdogAction WatchdogMachine::evaluate(const std::string& host, TimePoint now) {
    auto it = hosts_.find(host);
    if (it == hosts_.end()) return {};
    auto& s = it->second;
    prune(s, now);
    switch (s.phase) {
    case Phase::Alarmed:
        return {};
    case Phase::Booting:
        // the whole grace period is honoured even if the node comes up early
        if (now < s.booting_until) return {};
        s.phase = Phase::Healthy;
        s.last_output_at = std::max(s.last_output_at, s.booting_until - policy_.boot_grace);
        [[fallthrough]];
    case Phase::Healthy:
        if (now - s.last_output_at > policy_.silence_threshold) {
            s.phase = Phase::Suspect;
            s.probes_sent = 1;
            s.probe_deadline = now + policy_.probe_timeout;
            return {ActionKind::Probe, {}};
        }
        return {};
    case Phase::Suspect:
        if (now < s.probe_deadline) return {};
        if (s.probes_sent < policy_.probe_retries) {
            ++s.probes_sent;
            s.probe_deadline = now + policy_.probe_timeout;
            return {ActionKind::Probe, {}};
        }
        s.probes_sent = 0;
        if (static_cast<int>(s.restarts.size()) < policy_.max_restarts) {
            s.restarts.push_back(now);
            s.phase = Phase::Booting;
            s.booting_until = now + policy_.boot_grace;
            return {ActionKind::Reset, std::string(kWatchdogReason)};
        }
        s.phase = Phase::Alarmed;
        s.alarm_cause = "restart limit reached: " + std::to_string(policy_.max_restarts) + " resets within window";
        return {ActionKind::Alarm, s.alarm_cause};
    }
    return {};
}

void WatchdogMachine::reset_failed(const std::string& host, const std::string& cause) {
    auto it = hosts_.find(host);
    if (it == hosts_.end()) return;
    auto& s = it->second;
    if (!s.restarts.empty()) s.restarts.pop_back();
    s.phase = Phase::Alarmed;
    s.alarm_cause = cause;
}

bool WatchdogMachine::clear(const std::string& host, TimePoint now) {
    auto it = hosts_.find(host);
    if (it == hosts_.end()) return false;
    auto& s = it->second;
    const bool was = s.phase == Phase::Alarmed;
    if (was) {
        s.phase = Phase::Healthy;
        s.restarts.clear();
        s.probes_sent = 0;
        s.alarm_cause.clear();
        s.last_output_at = now;
    }
    return was;
}

std::optional<TimePoint> WatchdogMachine::probe_deadline(const std::string& host) const {
    auto it = hosts_.find(host);
    if (it == hosts_.end() || it->second.phase != Phase::Suspect) return std::nullopt;
    return it->second.probe_deadline;
}

HostStatus WatchdogMachine::to_status(const std::string& host, const State& s) const {
    return HostStatus{host, s.phase, s.last_output_at, s.restarts, s.probes_sent, s.alarm_cause};
}

HostStatus WatchdogMachine::status(const std::string& host) const {
    auto it = hosts_.find(host);
    if (it == hosts_.end()) throw UnknownHost(host);
    return to_status(host, it->second);
}

std::vector<HostStatus> WatchdogMachine::all() const {
    std::vector<HostStatus> out;
    out.reserve(hosts_.size());
    for (const auto& [h, s] : hosts_) out.push_back(to_status(h, s));
    return out;
}

Watchdog::Watchdog(WatchdogPolicy policy, Clock& clock, registry::RegistryStore& store, reset::AuditLog& audit,
                   Hooks hooks)
    : policy_(policy), clock_(clock), store_(store), audit_(audit), hooks_(std::move(hooks)), machine_(policy) {}

Watchdog::~Watchdog() { stop(); }

void Watchdog::start() {
    if (ticker_) return;
    ticker_ = std::make_unique<Ticker>(clock_, policy_.tick, [this] { tick(); });
}

void Watchdog::stop() {
    ticker_.reset();
    std::lock_guard lk(mu_);
    for (auto& [h, id] : deadline_timers_) clock_.cancel(id);
    deadline_timers_.clear();
}

void Watchdog::on_output(const std::string& host, TimePoint at) {
    std::lock_guard lk(mu_);
    machine_.record_output(host, at);
}

void Watchdog::tick() {
    {
        std::lock_guard lk(run_mu_);
        pending_all_ = true;
    }
    run_pending();
}

void Watchdog::run_pending() {
    {
        std::lock_guard lk(run_mu_);
        if (running_) return;
        running_ = true;
    }
    for (;;) {
        bool all = false;
        std::set<std::string> some;
        {
            std::lock_guard lk(run_mu_);
            if (!pending_all_ && pending_hosts_.empty()) {
                running_ = false;
                return;
            }
            all = pending_all_;
            pending_all_ = false;
            some.swap(pending_hosts_);
        }
        std::vector<std::string> hosts;
        if (all) {
            hosts = hooks_.hosts ? hooks_.hosts() : std::vector<std::string>{};
            std::lock_guard lk(mu_);
            const auto now = clock_.now();
            std::set<std::string> wanted(hosts.begin(), hosts.end());
            for (const auto& st : machine_.all()) {
                if (!wanted.count(st.host)) machine_.untrack(st.host);
            }
            for (const auto& h : hosts) machine_.track(h, now);
        } else {
            hosts.assign(some.begin(), some.end());
        }
        evaluate_hosts(hosts);
    }
}

void Watchdog::evaluate_hosts(const std::vector<std::string>& hosts) {
    for (const auto& host : hosts) {
        WatchdogAction action;
        {
            std::lock_guard lk(mu_);
            const auto now = clock_.now();
            action = machine_.evaluate(host, now);
            if (action.kind == ActionKind::None) continue;
            actions_.push_back(ActionRecord{now, host, action.kind, action.detail});
            if (action.kind == ActionKind::Probe) {
                if (auto it = deadline_timers_.find(host); it != deadline_timers_.end()) clock_.cancel(it->second);
                const auto deadline = *machine_.probe_deadline(host);
                deadline_timers_[host] = clock_.schedule_at(deadline, [this, host] {
                    {
                        std::lock_guard lk2(mu_);
                        deadline_timers_.erase(host);
                    }
                    {
                        std::lock_guard lk2(run_mu_);
                        pending_hosts_.insert(host);
                    }
                    run_pending();
                });
            }
        }
        perform(host, action);
    }
}

void Watchdog::perform(const std::string& host, const WatchdogAction& action) {
    switch (action.kind) {
    case ActionKind::None:
        return;
    case ActionKind::Probe:
        try {
            if (hooks_.send_probe) hooks_.send_probe(host);
        } catch (const Error&) {
            // an unanswered probe is the failure signal itself
        }
        return;
    case ActionKind::Reset: {
        std::string failure;
        try {
            if (!hooks_.reset) {
                failure = "no reset path configured";
            } else {
                const auto ev = hooks_.reset(host);
                if (ev.outcome == reset::ResetOutcome::NoWiring) failure = "no reset wiring";
                if (ev.outcome == reset::ResetOutcome::Denied) failure = "reset denied for watchdog principal";
            }
        } catch (const Error& e) {
            failure = std::string("reset failed: ") + e.what();
        }
        if (failure.empty()) return;
        {
            std::lock_guard lk(mu_);
            machine_.reset_failed(host, failure);
            actions_.push_back(ActionRecord{clock_.now(), host, ActionKind::Alarm, failure});
        }
        if (hooks_.raise_alarm) hooks_.raise_alarm(host, failure);
        return;
    }
    case ActionKind::Alarm:
        if (hooks_.raise_alarm) hooks_.raise_alarm(host, action.detail);
        return;
    }
}

reset::AuditEvent Watchdog::clear_alarm(const std::string& principal, const std::string& host) {
    const auto reg = store_.get();
    reset::AuditEvent ev;
    ev.kind = reset::AuditKind::ClearAlarm;
    ev.principal = principal;
    ev.host = host;
    if (const auto* rec = reg->find(host); rec && rec->reset) ev.address = rec->reset->address;

    bool known = false;
    {
        std::lock_guard lk(mu_);
        known = machine_.tracked(host);
    }
    if (!known) {
        const auto hosts = hooks_.hosts ? hooks_.hosts() : std::vector<std::string>{};
        if (std::find(hosts.begin(), hosts.end(), host) == hosts.end()) throw UnknownHost(host);
    }

    if (!reg->is_admin(principal)) {
        ev.outcome = reset::ResetOutcome::Denied;
        ev.reason = "clear alarm";
        ev.timestamp = clock_.now();
        audit_.append(ev);
        throw Denied("clearing an alarm requires admin");
    }
    {
        std::lock_guard lk(mu_);
        const auto now = clock_.now();
        machine_.track(host, now);
        const bool was = machine_.clear(host, now);
        ev.reason = was ? "alarm cleared" : "clear requested, host not alarmed";
        ev.timestamp = now;
    }
    ev.outcome = reset::ResetOutcome::Ok;
    audit_.append(ev);
    return ev;
}

std::vector<HostStatus> Watchdog::status() const {
    std::lock_guard lk(mu_);
    return machine_.all();
}

std::vector<HostStatus> Watchdog::alarms() const {
    auto all = status();
    std::erase_if(all, [](const HostStatus& s) { return s.phase != Phase::Alarmed; });
    return all;
}

std::vector<ActionRecord> Watchdog::actions() const {
    std::lock_guard lk(mu_);
    return actions_;
}

} // namespace consrv::watchdog
