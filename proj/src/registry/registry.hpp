// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "common/clock.hpp"
#include "common/error.hpp"
#include "relay/frame.hpp"

namespace consrv::registry {

// Ordered by strength; see Registry::authorize for the implication rules.
enum class Action { ConsoleReadOnly, Console, Reset, Admin };

std::string_view action_token(Action a);
std::optional<Action> parse_action(std::string_view token);

struct ConsoleEndpoint {
    std::string server_id;
    int port = 0;
    auto operator<=>(const ConsoleEndpoint&) const = default;
};

struct ResetWiring {
    std::string server_id;
    std::string device;
    relay::RelayAddress address;
    auto operator<=>(const ResetWiring&) const = default;
};

// A host normally has a console entry; reset wiring is optional and is never
// touched by detection.
struct InterconnectionRecord {
    std::string host;
    std::optional<ConsoleEndpoint> console;
    std::optional<ResetWiring> reset;
    bool operator==(const InterconnectionRecord&) const = default;
};

struct Grant {
    std::string principal;
    Action action = Action::ConsoleReadOnly;
    std::string host_pattern;
    auto operator<=>(const Grant&) const = default;
};

struct PrincipalKey {
    std::string principal;
    std::string public_key; // base64
    std::string key_id;     // fingerprint of the decoded key
    bool operator==(const PrincipalKey&) const = default;
};

struct DetectionEntry {
    int port = 0;
    std::optional<std::string> host; // nullopt = nothing answered
    bool operator==(const DetectionEntry&) const = default;
};

struct DetectionReport {
    std::string server_id;
    std::vector<DetectionEntry> entries;
    TimePoint generated_at{};
    bool operator==(const DetectionReport&) const = default;
};

// Report file: "detected <server> <rfc3339>" then "port <n> <host|unknown>".
std::string format_report(const DetectionReport& report);
DetectionReport parse_report(std::string_view text);

struct MergeConflict {
    enum class Kind {
        PortMismatch, // port is mapped to `was`, node answered `saw`
        HostElsewhere // port unmapped, but `saw` is already mapped to another port
    };
    Kind kind = Kind::PortMismatch;
    std::string server_id;
    int port = 0;
    std::string was;
    std::string saw;
    bool operator==(const MergeConflict&) const = default;
};

class Registry;

struct MergeResult;

struct ConfigBundle {
    std::string server_id;
    std::string interconnections;
    std::string grants;
    std::string keys;

    // Atomic per-file rewrite into dir (created if missing).
    void write_to(const std::filesystem::path& dir) const;
};

struct ParseError : Error {
    ParseError(const std::string& file, int line, const std::string& reason)
        : Error(Errc::Invalid, "parse-error", file + ":" + std::to_string(line) + ": " + reason) {}
};

struct ConflictError : Error {
    explicit ConflictError(const std::string& msg) : Error(Errc::Conflict, "conflict", msg) {}
};

inline constexpr std::string_view kInterconnectionsFile = "interconnections.conf";
inline constexpr std::string_view kGrantsFile = "grants.conf";
inline constexpr std::string_view kKeysFile = "keys.conf";

// Immutable snapshot of the information store. Mutators return new
// snapshots; persistence is an atomic whole-file rewrite.
class Registry {
public:
    Registry() = default;

    static Registry load(const std::filesystem::path& dir);
    static Registry parse(std::string_view interconnections, std::string_view grants, std::string_view keys);

    const std::vector<InterconnectionRecord>& records() const { return records_; }
    const std::vector<Grant>& grants() const { return grants_; }
    const std::vector<PrincipalKey>& keys() const { return keys_; }

    const InterconnectionRecord* find(std::string_view host) const;
    ConsoleEndpoint lookup_console(std::string_view host) const;
    ResetWiring lookup_reset(std::string_view host) const;
    std::optional<std::string> host_at(std::string_view server_id, int port) const;
    std::vector<std::string> console_hosts(std::string_view server_id) const;
    bool knows_server(std::string_view server_id) const;
    const PrincipalKey* find_key(std::string_view principal) const;

    bool authorize(std::string_view principal, Action action, std::string_view host) const;
    bool is_admin(std::string_view principal) const;

    ConfigBundle bundle_for_server(std::string_view server_id) const;

    MergeResult merge_detection(const DetectionReport& report) const;
    // Explicitly applies acknowledged detection conflicts. A batch is checked
    // as a whole against this registry, so a swap of two ports can be
    // acknowledged in one go.
    Registry apply_conflict(const MergeConflict& conflict) const;
    Registry apply_conflicts(const std::vector<MergeConflict>& conflicts) const;

    Registry with_grant(const Grant& g) const;
    Registry without_grant(const Grant& g) const;
    Registry with_key(const PrincipalKey& k) const;

    std::string interconnections_text() const;
    std::string grants_text() const;
    std::string keys_text() const;

    void save(const std::filesystem::path& dir) const;

    bool operator==(const Registry&) const = default;

private:
    friend class RegistryBuilder;

    std::vector<InterconnectionRecord> records_; // sorted by host
    std::vector<Grant> grants_;                  // sorted
    std::vector<PrincipalKey> keys_;             // sorted by principal
};

struct MergeResult {
    Registry registry;
    std::vector<MergeConflict> conflicts;
    std::vector<InterconnectionRecord> added;
};

bool glob_valid(std::string_view pattern);
bool glob_match(std::string_view pattern, std::string_view text);

// Key fingerprint used as key_id: hex of the first 6 bytes of SHA-256.
std::string key_fingerprint(std::span<const std::uint8_t> public_key);

// Writes path atomically (temp file in the same directory, fsync, rename).
void atomic_write(const std::filesystem::path& path, std::string_view content);

// Thread-safe holder of the current snapshot. Readers take a shared_ptr and
// keep a consistent view; writers swap in a new snapshot (and persist it when
// a directory is configured).
class RegistryStore {
public:
    explicit RegistryStore(Registry initial, std::optional<std::filesystem::path> dir = std::nullopt);

    std::shared_ptr<const Registry> get() const;
    void replace(Registry next);
    // Read-modify-write under the writer lock; returns the new snapshot.
    std::shared_ptr<const Registry> update(const std::function<Registry(const Registry&)>& fn);

    const std::optional<std::filesystem::path>& directory() const { return dir_; }

private:
    void install(Registry next);

    std::mutex write_mu_;
    mutable std::mutex mu_;
    std::shared_ptr<const Registry> current_;
    std::optional<std::filesystem::path> dir_;
};

} // namespace consrv::registry
