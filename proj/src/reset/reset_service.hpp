// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <map>
#include <mutex>
#include <string>

#include "registry/registry.hpp"
#include "relay/driver.hpp"
#include "reset/audit.hpp"

namespace consrv::reset {

struct ResetRequest {
    std::string principal;
    std::string host;
    std::string reason;
    TimePoint requested_at{};
};

// Whatever actually drives the reset line for a host.
class ResetExecutor {
public:
    virtual ~ResetExecutor() = default;
    virtual relay::PulseOutcome execute_reset(const std::string& host) = 0;
};

// Authorize, rate-limit, pulse, audit. Every request that passes validation
// produces exactly one audit event, whatever the outcome.
class ResetService {
public:
    ResetService(registry::RegistryStore& store, ResetExecutor& executor, AuditLog& audit, Clock& clock,
                 Duration min_interval = 30s);

    // Throws InvalidArgument for an empty reason, before anything else happens.
    AuditEvent submit(const ResetRequest& req);

    Duration min_interval() const { return min_interval_; }

private:
    struct HostSlot {
        bool in_flight = false;
        std::optional<TimePoint> last_ok;
    };

    registry::RegistryStore& store_;
    ResetExecutor& executor_;
    AuditLog& audit_;
    Clock& clock_;
    Duration min_interval_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::string, HostSlot> slots_;
};

} // namespace consrv::reset
