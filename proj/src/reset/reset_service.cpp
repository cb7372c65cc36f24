// SPDX-License-Identifier: Apache-2.0
#include "reset/reset_service.hpp"

#include <algorithm>

namespace consrv::reset {

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; });
}

ResetOutcome from_pulse(relay::PulseOutcome p) {
    switch (p) {
    case relay::PulseOutcome::Ack:
        return ResetOutcome::Ok;
    case relay::PulseOutcome::Nak:
        return ResetOutcome::Nak;
    case relay::PulseOutcome::AckTimeout:
        return ResetOutcome::Timeout;
    }
    return ResetOutcome::Timeout;
}

} // namespace

ResetService::ResetService(registry::RegistryStore& store, ResetExecutor& executor, AuditLog& audit, Clock& clock,
                           Duration min_interval)
    : store_(store), executor_(executor), audit_(audit), clock_(clock), min_interval_(min_interval) {}

AuditEvent ResetService::submit(const ResetRequest& req) {
    if (blank(req.reason)) {
        throw InvalidArgument("a reset request needs a reason");
    }
    const auto reg = store_.get();
    AuditEvent ev;
    ev.kind = AuditKind::Reset;
    ev.principal = req.principal;
    ev.host = req.host;
    ev.reason = req.reason;

    bool wired = false;
    try {
        ev.address = reg->lookup_reset(req.host).address;
        wired = true;
    } catch (const Error&) {
    }

    auto finish = [&](ResetOutcome outcome) {
        ev.outcome = outcome;
        ev.timestamp = clock_.now();
        audit_.append(ev);
        return ev;
    };

    if (!reg->authorize(req.principal, registry::Action::Reset, req.host)) {
        return finish(ResetOutcome::Denied);
    }
    if (!wired) {
        return finish(ResetOutcome::NoWiring);
    }

    {
        std::unique_lock lk(mu_);
        auto& slot = slots_[req.host];
        cv_.wait(lk, [&] { return !slot.in_flight; });
        if (slot.last_ok && clock_.now() - *slot.last_ok < min_interval_) {
            lk.unlock();
            return finish(ResetOutcome::RateLimited);
        }
        slot.in_flight = true;
    }

    ResetOutcome outcome = ResetOutcome::Timeout;
    try {
        outcome = from_pulse(executor_.execute_reset(req.host));
    } catch (const Error& e) {
        outcome = e.code() == Errc::NotFound ? ResetOutcome::NoWiring : ResetOutcome::Timeout;
    }

    {
        std::lock_guard lk(mu_);
        auto& slot = slots_[req.host];
        slot.in_flight = false;
        if (outcome == ResetOutcome::Ok) {
            slot.last_ok = clock_.now();
        }
    }
    cv_.notify_all();
    return finish(outcome);
}

} // namespace consrv::reset
