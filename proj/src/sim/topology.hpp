// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "common/error.hpp"
#include "relay/frame.hpp"

namespace consrv::sim {

struct TopologyError : Error {
    explicit TopologyError(const std::string& msg) : Error(Errc::Invalid, "topology-error", "topology: " + msg) {}
};

// One line of a boot transcript: wait `delay`, then print text + CR LF.
struct TranscriptLine {
    Duration delay{};
    std::string text;
};

// Transcript file: "<delay-ms> <text>" per line; the first line is the
// first thing the boot loader prints.
std::vector<TranscriptLine> parse_transcript(std::string_view text);
std::vector<TranscriptLine> default_transcript(const std::string& host);
// The exact bytes a transcript puts on the console.
Bytes transcript_bytes(const std::vector<TranscriptLine>& lines);

struct TopologyEntry {
    std::string host;
    int port = 0;
    std::optional<relay::RelayAddress> reset;
    std::optional<Duration> heartbeat;
    std::vector<TranscriptLine> transcript;
};

// node <host> console <port> [reset <box> <relay>] [heartbeat <seconds>] [transcript <file>]
class Topology {
public:
    static Topology parse(std::string_view text, const std::filesystem::path& base_dir = {});
    static Topology load(const std::filesystem::path& path);
    // n nodes named <prefix>NNNN on ports 0..n-1, relays in flat order.
    static Topology farm(int n, const std::string& prefix = "lxb", bool wired = true);

    void add(TopologyEntry e);
    const std::vector<TopologyEntry>& entries() const { return entries_; }
    const TopologyEntry* find(std::string_view host) const;

    // interconnections.conf lines matching this topology.
    std::string interconnections(const std::string& server_id, const std::string& device) const;

private:
    std::vector<TopologyEntry> entries_;
};

} // namespace consrv::sim
