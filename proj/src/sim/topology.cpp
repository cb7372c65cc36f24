// SPDX-License-Identifier: Apache-2.0
#include "sim/topology.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "common/text.hpp"

namespace consrv::sim {

std::vector<TranscriptLine> parse_transcript(std::string_view text) {
    std::vector<TranscriptLine> out;
    int lineno = 0;
    for (const auto& raw : split_char(text, '\n')) {
        ++lineno;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        auto ms = parse_int(line.substr(0, sp));
        if (!ms || *ms < 0) throw TopologyError("transcript line " + std::to_string(lineno) + ": bad delay");
        out.push_back({Duration{*ms}, sp == std::string_view::npos ? std::string() : std::string(line.substr(sp + 1))});
    }
    if (out.empty()) throw TopologyError("empty transcript");
    return out;
}

std::vector<TranscriptLine> default_transcript(const std::string& host) {
    return {
        {0ms, "GRUB loading stage2..."},
        {400ms, "Booting 'Scientific Linux (2.6.9-55.EL)'"},
        {300ms, "Linux version 2.6.9-55.EL (root@" + host + ") (gcc version 3.4.6)"},
        {200ms, "BIOS-provided physical RAM map:"},
        {100ms, "Kernel command line: ro root=LABEL=/ console=ttyS0,9600n8"},
        {900ms, "Freeing unused kernel memory: 176k freed"},
        {1200ms, "INIT: version 2.85 booting"},
        {1800ms, "Starting sshd: [  OK  ]"},
        {400ms, host + " login:"},
    };
}

Bytes transcript_bytes(const std::vector<TranscriptLine>& lines) {
    Bytes out;
    for (const auto& l : lines) {
        out.insert(out.end(), l.text.begin(), l.text.end());
        out.push_back('\r');
        out.push_back('\n');
    }
    return out;
}

Topology Topology::parse(std::string_view text, const std::filesystem::path& base_dir) {
    Topology t;
    int lineno = 0;
    for (const auto& line : split_char(text, '\n')) {
        ++lineno;
        const auto f = split_fields(line);
        if (f.empty()) continue;
        auto fail = [&](const std::string& why) {
            throw TopologyError("line " + std::to_string(lineno) + ": " + why);
        };
        if (f[0] != "node" || f.size() < 4 || f[2] != "console") fail("expected: node <host> console <port> ...");
        TopologyEntry e;
        e.host = f[1];
        auto port = parse_int(f[3]);
        if (!port || *port < 0 || *port > 4095) fail("bad port index");
        e.port = static_cast<int>(*port);
        for (std::size_t i = 4; i < f.size();) {
            if (f[i] == "reset" && i + 2 < f.size()) {
                auto box = parse_int(f[i + 1]), rel = parse_int(f[i + 2]);
                if (!box || !rel || *box < 0 || *box > 7 || *rel < 0 || *rel > 7) fail("bad relay address");
                e.reset = relay::RelayAddress::make(static_cast<int>(*box), static_cast<int>(*rel));
                i += 3;
            } else if (f[i] == "heartbeat" && i + 1 < f.size()) {
                auto s = parse_int(f[i + 1]);
                if (!s || *s <= 0) fail("bad heartbeat period");
                e.heartbeat = Duration{*s * 1000};
                i += 2;
            } else if (f[i] == "transcript" && i + 1 < f.size()) {
                std::filesystem::path p = f[i + 1];
                if (p.is_relative()) p = base_dir / p;
                std::ifstream in(p, std::ios::binary);
                if (!in) fail("cannot read transcript " + p.string());
                std::stringstream ss;
                ss << in.rdbuf();
                e.transcript = parse_transcript(ss.str());
                i += 2;
            } else {
                fail("unexpected '" + f[i] + "'");
            }
        }
        try {
            t.add(std::move(e));
        } catch (const TopologyError& err) {
            fail(err.what());
        }
    }
    return t;
}

Topology Topology::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TopologyError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.parent_path());
}

Topology Topology::farm(int n, const std::string& prefix, bool wired) {
    if (n < 0 || (wired && n > 64)) throw TopologyError("farm size out of range");
    Topology t;
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04d", i + 1);
        TopologyEntry e;
        e.host = prefix + name;
        e.port = i;
        if (wired) e.reset = relay::RelayAddress::from_flat(i);
        t.add(std::move(e));
    }
    return t;
}

void Topology::add(TopologyEntry e) {
    for (const auto& x : entries_) {
        if (x.host == e.host) throw TopologyError("duplicate host " + e.host);
        if (x.port == e.port) throw TopologyError("duplicate console port " + std::to_string(e.port));
        if (x.reset && e.reset && *x.reset == *e.reset) throw TopologyError("duplicate relay " + e.reset->str());
    }
    if (e.transcript.empty()) e.transcript = default_transcript(e.host);
    entries_.push_back(std::move(e));
}

const TopologyEntry* Topology::find(std::string_view host) const {
    for (const auto& e : entries_) {
        if (e.host == host) return &e;
    }
    return nullptr;
}

std::string Topology::interconnections(const std::string& server_id, const std::string& device) const {
    std::string out;
    for (const auto& e : entries_) {
        out += "console " + e.host + " " + server_id + " " + std::to_string(e.port) + "\n";
        if (e.reset) {
            out += "reset " + e.host + " " + server_id + " " + device + " " + std::to_string(e.reset->box) + " " +
                   std::to_string(e.reset->relay) + "\n";
        }
    }
    return out;
}

} // namespace consrv::sim
