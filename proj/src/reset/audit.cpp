// SPDX-License-Identifier: Apache-2.0
#include "reset/audit.hpp"

#include <unistd.h>

#include <algorithm>
#include <array>
#include <fstream>

#include "common/error.hpp"
#include "common/text.hpp"

namespace consrv::reset {

namespace {

constexpr std::array<std::pair<ResetOutcome, std::string_view>, 6> kCodes{{
    {ResetOutcome::Ok, "Ok"},
    {ResetOutcome::Denied, "Denied"},
    {ResetOutcome::NoWiring, "NoWiring"},
    {ResetOutcome::Nak, "Nak"},
    {ResetOutcome::Timeout, "Timeout"},
    {ResetOutcome::RateLimited, "RateLimited"},
}};

std::optional<std::string_view> take_field(std::string_view& rest, std::string_view key) {
    if (rest.substr(0, key.size()) != key) return std::nullopt;
    rest.remove_prefix(key.size());
    const auto sp = rest.find(' ');
    auto value = rest.substr(0, sp);
    rest.remove_prefix(sp == std::string_view::npos ? rest.size() : sp + 1);
    return value;
}

} // namespace

std::string_view outcome_code(ResetOutcome o) {
    for (const auto& [k, v] : kCodes) {
        if (k == o) return v;
    }
    return "Timeout";
}

std::optional<ResetOutcome> parse_outcome(std::string_view code) {
    for (const auto& [k, v] : kCodes) {
        if (v == code) return k;
    }
    return std::nullopt;
}

std::string format_audit(const AuditEvent& e) {
    std::string out = format_rfc3339(e.timestamp);
    out += e.kind == AuditKind::Reset ? " RESET" : " CLEAR";
    out += " principal=" + e.principal;
    out += " host=" + e.host;
    out += " addr=" + (e.address ? e.address->str() : std::string("-"));
    out += " outcome=" + std::string(outcome_code(e.outcome));
    out += " reason=\"" + escape_quoted(e.reason) + "\"";
    return out;
}

std::optional<AuditEvent> parse_audit(std::string_view line) {
    AuditEvent e;
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos) return std::nullopt;
    auto ts = parse_rfc3339(line.substr(0, sp));
    if (!ts) return std::nullopt;
    e.timestamp = *ts;
    std::string_view rest = line.substr(sp + 1);
    if (rest.substr(0, 6) == "RESET ") {
        e.kind = AuditKind::Reset;
    } else if (rest.substr(0, 6) == "CLEAR ") {
        e.kind = AuditKind::ClearAlarm;
    } else {
        return std::nullopt;
    }
    rest.remove_prefix(6);
    auto principal = take_field(rest, "principal=");
    auto host = take_field(rest, "host=");
    auto addr = take_field(rest, "addr=");
    auto outcome = take_field(rest, "outcome=");
    if (!principal || !host || !addr || !outcome) return std::nullopt;
    e.principal = *principal;
    e.host = *host;
    if (*addr != "-") {
        auto parts = split_char(*addr, '/');
        if (parts.size() != 2) return std::nullopt;
        auto box = parse_int(parts[0]), rel = parse_int(parts[1]);
        if (!box || !rel || *box < 0 || *box > 7 || *rel < 0 || *rel > 7) return std::nullopt;
        e.address = relay::RelayAddress::make(static_cast<int>(*box), static_cast<int>(*rel));
    }
    auto oc = parse_outcome(*outcome);
    if (!oc) return std::nullopt;
    e.outcome = *oc;
    if (rest.substr(0, 8) != "reason=\"" || rest.size() < 9 || rest.back() != '"') return std::nullopt;
    auto reason = unescape_quoted(rest.substr(8, rest.size() - 9));
    if (!reason) return std::nullopt;
    e.reason = *reason;
    return e;
}

AuditLog::AuditLog(std::optional<std::filesystem::path> file) {
    if (!file) return;
    {
        std::ifstream in(*file);
        std::string line;
        while (std::getline(in, line)) {
            if (auto e = parse_audit(line)) events_.push_back(std::move(*e));
        }
    }
    if (!file->parent_path().empty()) std::filesystem::create_directories(file->parent_path());
    file_ = std::fopen(file->c_str(), "a");
    if (!file_) {
        throw Error(Errc::Internal, "io", "cannot open audit file " + file->string());
    }
}

AuditLog::~AuditLog() {
    if (file_) std::fclose(file_);
}

void AuditLog::append(const AuditEvent& e) {
    std::lock_guard lk(mu_);
    if (file_) {
        const auto line = format_audit(e) + "\n";
        std::fwrite(line.data(), 1, line.size(), file_);
        std::fflush(file_);
        ::fsync(::fileno(file_));
    }
    events_.push_back(e);
}

std::vector<AuditEvent> AuditLog::query(const AuditFilter& f) const {
    std::vector<AuditEvent> out;
    {
        std::lock_guard lk(mu_);
        for (const auto& e : events_) {
            if (f.host && e.host != *f.host) continue;
            if (f.principal && e.principal != *f.principal) continue;
            if (f.from && e.timestamp < *f.from) continue;
            if (f.to && e.timestamp >= *f.to) continue;
            out.push_back(e);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
}

std::size_t AuditLog::size() const {
    std::lock_guard lk(mu_);
    return events_.size();
}

} // namespace consrv::reset
