// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "relay/frame.hpp"

namespace consrv::reset {

enum class ResetOutcome { Ok, Denied, NoWiring, Nak, Timeout, RateLimited };

std::string_view outcome_code(ResetOutcome o);
std::optional<ResetOutcome> parse_outcome(std::string_view code);

enum class AuditKind { Reset, ClearAlarm };

struct AuditEvent {
    TimePoint timestamp{};
    AuditKind kind = AuditKind::Reset;
    std::string principal;
    std::string host;
    std::optional<relay::RelayAddress> address;
    std::string reason;
    ResetOutcome outcome = ResetOutcome::Ok;

    bool operator==(const AuditEvent&) const = default;
};

// <ts> RESET principal=<p> host=<h> addr=<box>/<relay> outcome=<code> reason="<escaped>"
// Clear-alarm events use CLEAR in place of RESET; a missing address is "-".
std::string format_audit(const AuditEvent& e);
std::optional<AuditEvent> parse_audit(std::string_view line);

struct AuditFilter {
    std::optional<std::string> host;
    std::optional<std::string> principal;
    std::optional<TimePoint> from; // inclusive
    std::optional<TimePoint> to;   // exclusive
};

// Append-only trail, one event per line. Existing lines in the file are read
// back on open so queries cover earlier runs.
class AuditLog {
public:
    explicit AuditLog(std::optional<std::filesystem::path> file = std::nullopt);
    ~AuditLog();

    AuditLog(const AuditLog&) = delete;
    AuditLog& operator=(const AuditLog&) = delete;

    void append(const AuditEvent& e);
    std::vector<AuditEvent> query(const AuditFilter& filter) const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::vector<AuditEvent> events_;
    std::FILE* file_ = nullptr;
};

} // namespace consrv::reset
