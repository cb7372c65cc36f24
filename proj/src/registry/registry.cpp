// SPDX-License-Identifier: Apache-2.0
#include "registry/registry.hpp"

#include <fcntl.h>
#include <fnmatch.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "common/codec.hpp"
#include "common/text.hpp"

namespace consrv::registry {

namespace {

constexpr std::string_view kUnknownToken = "unknown";

bool valid_name(std::string_view s) {
    if (s.empty() || s.size() > 255) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
               c == '.' || c == '@';
    });
}

std::string read_file_or_empty(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        return {};
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Source {
    std::string file;
    int line = 0;
    std::string str() const { return line > 0 ? file + ":" + std::to_string(line) : file; }
};

} // namespace

std::string_view action_token(Action a) {
    switch (a) {
    case Action::ConsoleReadOnly:
        return "console-ro";
    case Action::Console:
        return "console";
    case Action::Reset:
        return "reset";
    case Action::Admin:
        return "admin";
    }
    return "console-ro";
}

std::optional<Action> parse_action(std::string_view token) {
    if (token == "console-ro") return Action::ConsoleReadOnly;
    if (token == "console") return Action::Console;
    if (token == "reset") return Action::Reset;
    if (token == "admin") return Action::Admin;
    return std::nullopt;
}

bool glob_valid(std::string_view pattern) {
    if (pattern.empty()) return false;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const char c = pattern[i];
        if (c == ' ' || c == '\t' || c == '#' || static_cast<unsigned char>(c) < 0x20) return false;
        if (c == '\\') {
            if (i + 1 >= pattern.size()) return false;
            ++i;
            continue;
        }
        if (c == '[') {
            std::size_t j = i + 1;
            if (j < pattern.size() && (pattern[j] == '!' || pattern[j] == '^')) ++j;
            if (j < pattern.size() && pattern[j] == ']') ++j;
            while (j < pattern.size() && pattern[j] != ']') ++j;
            if (j >= pattern.size()) return false;
            i = j;
        }
    }
    return true;
}

bool glob_match(std::string_view pattern, std::string_view text) {
    const std::string p(pattern), t(text);
    return ::fnmatch(p.c_str(), t.c_str(), 0) == 0;
}

std::string key_fingerprint(std::span<const std::uint8_t> public_key) {
    const auto digest = sha256(public_key);
    return hex(std::span<const std::uint8_t>(digest.data(), 6));
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
    const auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
    std::filesystem::create_directories(dir);
    const auto tmp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw Error(Errc::Internal, "io", "cannot write " + tmp.string());
    }
    std::size_t done = 0;
    while (done < content.size()) {
        const ssize_t n = ::write(fd, content.data() + done, content.size() - done);
        if (n <= 0) {
            ::close(fd);
            ::unlink(tmp.c_str());
            throw Error(Errc::Internal, "io", "short write to " + tmp.string());
        }
        done += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        ::unlink(tmp.c_str());
        throw Error(Errc::Internal, "io", "cannot rename onto " + path.string());
    }
}

// Accumulates records while enforcing every uniqueness rule; errors name the
// offending line and the earlier line it collides with.
class RegistryBuilder {
public:
    void add_console(const std::string& host, ConsoleEndpoint ep, const Source& src) {
        auto& rec = by_host_[host];
        rec.host = host;
        if (rec.console) {
            throw ConflictError(src.str() + ": host " + host + " already has a console entry at " +
                                console_src_[host].str());
        }
        auto key = std::make_pair(ep.server_id, ep.port);
        if (auto it = console_owner_.find(key); it != console_owner_.end()) {
            throw ConflictError(src.str() + ": console " + ep.server_id + " port " + std::to_string(ep.port) +
                                " claimed by " + host + " but already assigned to " + it->second + " at " +
                                console_src_[it->second].str());
        }
        console_owner_.emplace(key, host);
        console_src_[host] = src;
        rec.console = std::move(ep);
    }

    void add_reset(const std::string& host, ResetWiring w, const Source& src) {
        auto& rec = by_host_[host];
        rec.host = host;
        if (rec.reset) {
            throw ConflictError(src.str() + ": host " + host + " already has a reset entry at " +
                                reset_src_[host].str());
        }
        auto key = std::make_tuple(w.server_id, w.device, w.address.flat());
        if (auto it = reset_owner_.find(key); it != reset_owner_.end()) {
            throw ConflictError(src.str() + ": reset " + w.server_id + " " + w.device + " " + w.address.str() +
                                " claimed by " + host + " but already wired to " + it->second + " at " +
                                reset_src_[it->second].str());
        }
        reset_owner_.emplace(key, host);
        reset_src_[host] = src;
        rec.reset = std::move(w);
    }

    void add_grant(const Grant& g, const Source& src) {
        if (auto it = grant_src_.find(g); it != grant_src_.end()) {
            throw ConflictError(src.str() + ": duplicate grant, first at " + it->second.str());
        }
        grant_src_.emplace(g, src);
    }

    void add_key(const PrincipalKey& k, const Source& src) {
        if (auto it = keys_.find(k.principal); it != keys_.end()) {
            throw ConflictError(src.str() + ": principal " + k.principal + " already has an active key at " +
                                key_src_[k.principal].str());
        }
        keys_.emplace(k.principal, k);
        key_src_[k.principal] = src;
    }

    void add_record(const InterconnectionRecord& rec, const Source& src) {
        if (rec.console) add_console(rec.host, *rec.console, src);
        if (rec.reset) add_reset(rec.host, *rec.reset, src);
        if (!rec.console && !rec.reset) by_host_[rec.host].host = rec.host;
    }

    void add_all(const Registry& r, const Source& src) {
        for (const auto& rec : r.records_) add_record(rec, src);
        for (const auto& g : r.grants_) add_grant(g, src);
        for (const auto& k : r.keys_) add_key(k, src);
    }

    Registry build() const {
        Registry r;
        for (const auto& [host, rec] : by_host_) {
            if (rec.console || rec.reset) r.records_.push_back(rec);
        }
        for (const auto& [g, src] : grant_src_) r.grants_.push_back(g);
        for (const auto& [p, k] : keys_) r.keys_.push_back(k);
        return r;
    }

private:
    std::map<std::string, InterconnectionRecord> by_host_;
    std::map<std::string, Source> console_src_, reset_src_, key_src_;
    std::map<std::pair<std::string, int>, std::string> console_owner_;
    std::map<std::tuple<std::string, std::string, int>, std::string> reset_owner_;
    std::map<Grant, Source> grant_src_;
    std::map<std::string, PrincipalKey> keys_;
};

namespace {

int parse_port(const std::string& tok, const Source& src) {
    auto v = parse_int(tok);
    if (!v || *v < 0 || *v > 65535) {
        throw ParseError(src.file, src.line, "bad port index '" + tok + "'");
    }
    return static_cast<int>(*v);
}

void require_name(const std::string& tok, const char* what, const Source& src) {
    if (!valid_name(tok)) {
        throw ParseError(src.file, src.line, std::string("bad ") + what + " '" + tok + "'");
    }
}

template <typename Fn>
void for_each_line(std::string_view text, const std::string& file, Fn&& fn) {
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        ++line_no;
        auto fields = split_fields(line);
        if (!fields.empty()) {
            fn(fields, Source{file, line_no});
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
}

} // namespace

Registry Registry::parse(std::string_view interconnections, std::string_view grants, std::string_view keys) {
    RegistryBuilder b;
    for_each_line(interconnections, std::string(kInterconnectionsFile), [&](const auto& f, const Source& src) {
        if (f[0] == "console") {
            if (f.size() != 4) throw ParseError(src.file, src.line, "expected: console <host> <server> <port>");
            require_name(f[1], "host", src);
            require_name(f[2], "server", src);
            if (f[1] == kUnknownToken) throw ParseError(src.file, src.line, "'unknown' is a reserved host name");
            b.add_console(f[1], ConsoleEndpoint{f[2], parse_port(f[3], src)}, src);
        } else if (f[0] == "reset") {
            if (f.size() != 6)
                throw ParseError(src.file, src.line, "expected: reset <host> <server> <device> <box> <relay>");
            require_name(f[1], "host", src);
            require_name(f[2], "server", src);
            const auto box = parse_int(f[4]);
            const auto rel = parse_int(f[5]);
            if (!box || !rel || *box < 0 || *box > 7 || *rel < 0 || *rel > 7) {
                throw ParseError(src.file, src.line, "relay address must be <box 0..7> <relay 0..7>");
            }
            if (f[3].empty()) throw ParseError(src.file, src.line, "empty device");
            b.add_reset(f[1],
                        ResetWiring{f[2], f[3], relay::RelayAddress::make(static_cast<int>(*box),
                                                                           static_cast<int>(*rel))},
                        src);
        } else {
            throw ParseError(src.file, src.line, "unknown record kind '" + f[0] + "'");
        }
    });
    for_each_line(grants, std::string(kGrantsFile), [&](const auto& f, const Source& src) {
        if (f[0] != "grant") throw ParseError(src.file, src.line, "unknown record kind '" + f[0] + "'");
        if (f.size() != 4) throw ParseError(src.file, src.line, "expected: grant <principal> <action> <pattern>");
        require_name(f[1], "principal", src);
        const auto action = parse_action(f[2]);
        if (!action) throw ParseError(src.file, src.line, "unknown action '" + f[2] + "'");
        if (!glob_valid(f[3])) throw ParseError(src.file, src.line, "invalid host pattern '" + f[3] + "'");
        b.add_grant(Grant{f[1], *action, f[3]}, src);
    });
    for_each_line(keys, std::string(kKeysFile), [&](const auto& f, const Source& src) {
        if (f[0] != "key") throw ParseError(src.file, src.line, "unknown record kind '" + f[0] + "'");
        if (f.size() != 4) throw ParseError(src.file, src.line, "expected: key <principal> <key-id> <base64>");
        require_name(f[1], "principal", src);
        const auto raw = base64_decode(f[3]);
        if (!raw || raw->empty()) throw ParseError(src.file, src.line, "public key is not valid base64");
        if (key_fingerprint(*raw) != f[2]) {
            throw ParseError(src.file, src.line, "key id '" + f[2] + "' does not match the key fingerprint");
        }
        b.add_key(PrincipalKey{f[1], f[3], f[2]}, src);
    });
    return b.build();
}

Registry Registry::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(Errc::NotFound, "not-found", "registry directory not found: " + dir.string());
    }
    return parse(read_file_or_empty(dir / kInterconnectionsFile), read_file_or_empty(dir / kGrantsFile),
                 read_file_or_empty(dir / kKeysFile));
}

const InterconnectionRecord* Registry::find(std::string_view host) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), host,
                               [](const InterconnectionRecord& r, std::string_view h) { return r.host < h; });
    if (it == records_.end() || it->host != host) return nullptr;
    return &*it;
}

ConsoleEndpoint Registry::lookup_console(std::string_view host) const {
    const auto* rec = find(host);
    if (!rec || !rec->console) throw UnknownHost(std::string(host));
    return *rec->console;
}

ResetWiring Registry::lookup_reset(std::string_view host) const {
    const auto* rec = find(host);
    if (!rec) throw UnknownHost(std::string(host));
    if (!rec->reset) throw NoResetWiring(std::string(host));
    return *rec->reset;
}

std::optional<std::string> Registry::host_at(std::string_view server_id, int port) const {
    for (const auto& rec : records_) {
        if (rec.console && rec.console->server_id == server_id && rec.console->port == port) return rec.host;
    }
    return std::nullopt;
}

std::vector<std::string> Registry::console_hosts(std::string_view server_id) const {
    std::vector<std::string> out;
    for (const auto& rec : records_) {
        if (rec.console && rec.console->server_id == server_id) out.push_back(rec.host);
    }
    return out;
}

bool Registry::knows_server(std::string_view server_id) const {
    return std::any_of(records_.begin(), records_.end(), [&](const InterconnectionRecord& r) {
        return (r.console && r.console->server_id == server_id) || (r.reset && r.reset->server_id == server_id);
    });
}

const PrincipalKey* Registry::find_key(std::string_view principal) const {
    for (const auto& k : keys_) {
        if (k.principal == principal) return &k;
    }
    return nullptr;
}

bool Registry::is_admin(std::string_view principal) const {
    return std::any_of(grants_.begin(), grants_.end(),
                       [&](const Grant& g) { return g.principal == principal && g.action == Action::Admin; });
}

// Admin covers every action on every host. Console covers ConsoleReadOnly.
// Reset and Console do not imply each other.
bool Registry::authorize(std::string_view principal, Action action, std::string_view host) const {
    for (const auto& g : grants_) {
        if (g.principal != principal) continue;
        if (g.action == Action::Admin) return true;
        const bool covers = g.action == action || (g.action == Action::Console && action == Action::ConsoleReadOnly);
        if (covers && glob_match(g.host_pattern, host)) return true;
    }
    return false;
}

std::string Registry::interconnections_text() const {
    std::string out;
    for (const auto& rec : records_) {
        if (rec.console) {
            out += "console " + rec.host + " " + rec.console->server_id + " " + std::to_string(rec.console->port) + "\n";
        }
        if (rec.reset) {
            out += "reset " + rec.host + " " + rec.reset->server_id + " " + rec.reset->device + " " +
                   std::to_string(rec.reset->address.box) + " " + std::to_string(rec.reset->address.relay) + "\n";
        }
    }
    return out;
}

std::string Registry::grants_text() const {
    std::string out;
    for (const auto& g : grants_) {
        out += "grant " + g.principal + " " + std::string(action_token(g.action)) + " " + g.host_pattern + "\n";
    }
    return out;
}

std::string Registry::keys_text() const {
    std::string out;
    for (const auto& k : keys_) {
        out += "key " + k.principal + " " + k.key_id + " " + k.public_key + "\n";
    }
    return out;
}

void Registry::save(const std::filesystem::path& dir) const {
    atomic_write(dir / kInterconnectionsFile, interconnections_text());
    atomic_write(dir / kGrantsFile, grants_text());
    atomic_write(dir / kKeysFile, keys_text());
}

void ConfigBundle::write_to(const std::filesystem::path& dir) const {
    atomic_write(dir / kInterconnectionsFile, interconnections);
    atomic_write(dir / kGrantsFile, grants);
    atomic_write(dir / kKeysFile, keys);
}

ConfigBundle Registry::bundle_for_server(std::string_view server_id) const {
    if (!knows_server(server_id)) throw UnknownServer(std::string(server_id));
    RegistryBuilder b;
    std::vector<std::string> hosts;
    for (const auto& rec : records_) {
        const bool relevant = (rec.console && rec.console->server_id == server_id) ||
                              (rec.reset && rec.reset->server_id == server_id);
        if (relevant) {
            b.add_record(rec, Source{"bundle"});
            hosts.push_back(rec.host);
        }
    }
    std::set<std::string> principals;
    for (const auto& g : grants_) {
        const bool relevant = g.action == Action::Admin || std::any_of(hosts.begin(), hosts.end(), [&](const auto& h) {
                                  return glob_match(g.host_pattern, h);
                              });
        if (relevant) {
            b.add_grant(g, Source{"bundle"});
            principals.insert(g.principal);
        }
    }
    for (const auto& k : keys_) {
        if (principals.count(k.principal)) b.add_key(k, Source{"bundle"});
    }
    const Registry sub = b.build();
    const std::string header = "# bundle for " + std::string(server_id) + "\n";
    return ConfigBundle{std::string(server_id), header + sub.interconnections_text(), header + sub.grants_text(),
                        header + sub.keys_text()};
}

MergeResult Registry::merge_detection(const DetectionReport& report) const {
    if (!knows_server(report.server_id)) throw UnknownServer(report.server_id);
    std::map<std::string, InterconnectionRecord> next;
    for (const auto& rec : records_) next.emplace(rec.host, rec);

    MergeResult result;
    auto entries = report.entries;
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.port < b.port; });
    for (const auto& e : entries) {
        if (!e.host) continue; // unknown never deletes anything
        const std::string& saw = *e.host;
        std::optional<std::string> was;
        for (const auto& [host, rec] : next) {
            if (rec.console && rec.console->server_id == report.server_id && rec.console->port == e.port) {
                was = host;
                break;
            }
        }
        if (was) {
            if (*was != saw) {
                result.conflicts.push_back(
                    MergeConflict{MergeConflict::Kind::PortMismatch, report.server_id, e.port, *was, saw});
            }
            continue;
        }
        auto it = next.find(saw);
        if (it != next.end() && it->second.console) {
            result.conflicts.push_back(MergeConflict{MergeConflict::Kind::HostElsewhere, report.server_id, e.port,
                                                     std::string{}, saw});
            continue;
        }
        auto& rec = next[saw];
        rec.host = saw;
        rec.console = ConsoleEndpoint{report.server_id, e.port};
        result.added.push_back(rec);
    }
    RegistryBuilder b;
    for (const auto& [host, rec] : next) b.add_record(rec, Source{"merge"});
    for (const auto& g : grants_) b.add_grant(g, Source{"merge"});
    for (const auto& k : keys_) b.add_key(k, Source{"merge"});
    result.registry = b.build();
    return result;
}

Registry Registry::apply_conflict(const MergeConflict& c) const { return apply_conflicts({c}); }

Registry Registry::apply_conflicts(const std::vector<MergeConflict>& conflicts) const {
    std::set<std::pair<std::string, int>> ports;
    std::set<std::string> claimed;
    for (const auto& c : conflicts) {
        if (!knows_server(c.server_id)) throw UnknownServer(c.server_id);
        const auto current = host_at(c.server_id, c.port);
        if (c.kind == MergeConflict::Kind::PortMismatch ? current != c.was : current.has_value()) {
            throw ConflictError("conflict on port " + std::to_string(c.port) + " no longer matches the registry");
        }
        if (!ports.emplace(c.server_id, c.port).second) {
            throw ConflictError("port " + std::to_string(c.port) + " acknowledged twice");
        }
        if (!claimed.insert(c.saw).second) throw ConflictError(c.saw + " answered on more than one port");
    }
    std::map<std::string, InterconnectionRecord> next;
    for (const auto& rec : records_) next.emplace(rec.host, rec);
    for (const auto& c : conflicts) {
        if (c.kind == MergeConflict::Kind::PortMismatch) next[c.was].console.reset();
    }
    for (const auto& c : conflicts) {
        auto& rec = next[c.saw];
        rec.host = c.saw;
        rec.console = ConsoleEndpoint{c.server_id, c.port};
    }

    RegistryBuilder b;
    for (const auto& [host, r] : next) b.add_record(r, Source{"apply"});
    for (const auto& g : grants_) b.add_grant(g, Source{"apply"});
    for (const auto& k : keys_) b.add_key(k, Source{"apply"});
    return b.build();
}

Registry Registry::with_grant(const Grant& g) const {
    if (!valid_name(g.principal)) throw InvalidArgument("bad principal '" + g.principal + "'");
    if (!glob_valid(g.host_pattern)) throw InvalidArgument("invalid host pattern '" + g.host_pattern + "'");
    // granting what is already granted is a no-op
    if (std::find(grants_.begin(), grants_.end(), g) != grants_.end()) return *this;
    RegistryBuilder b;
    b.add_all(*this, Source{"registry"});
    b.add_grant(g, Source{"request"});
    return b.build();
}

Registry Registry::without_grant(const Grant& g) const {
    Registry r = *this;
    auto it = std::find(r.grants_.begin(), r.grants_.end(), g);
    if (it == r.grants_.end()) throw Error(Errc::NotFound, "not-found", "no such grant");
    r.grants_.erase(it);
    return r;
}

Registry Registry::with_key(const PrincipalKey& k) const {
    Registry r = *this;
    std::erase_if(r.keys_, [&](const PrincipalKey& x) { return x.principal == k.principal; });
    RegistryBuilder b;
    b.add_all(r, Source{"registry"});
    b.add_key(k, Source{"request"});
    return b.build();
}

std::string format_report(const DetectionReport& report) {
    std::string out = "detected " + report.server_id + " " + format_rfc3339(report.generated_at) + "\n";
    auto entries = report.entries;
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.port < b.port; });
    for (const auto& e : entries) {
        out += "port " + std::to_string(e.port) + " " + e.host.value_or(std::string(kUnknownToken)) + "\n";
    }
    return out;
}

DetectionReport parse_report(std::string_view text) {
    DetectionReport report;
    bool have_header = false;
    std::set<int> ports;
    for_each_line(text, "report", [&](const auto& f, const Source& src) {
        if (!have_header) {
            if (f[0] != "detected" || f.size() != 3) {
                throw ParseError(src.file, src.line, "expected: detected <server> <timestamp>");
            }
            auto ts = parse_rfc3339(f[2]);
            if (!ts) throw ParseError(src.file, src.line, "bad timestamp '" + f[2] + "'");
            report.server_id = f[1];
            report.generated_at = *ts;
            have_header = true;
            return;
        }
        if (f[0] != "port" || f.size() != 3) throw ParseError(src.file, src.line, "expected: port <index> <host>");
        const int port = parse_port(f[1], src);
        if (!ports.insert(port).second) throw ParseError(src.file, src.line, "duplicate port " + f[1]);
        DetectionEntry e{port, std::nullopt};
        if (f[2] != kUnknownToken) {
            require_name(f[2], "host", src);
            e.host = f[2];
        }
        report.entries.push_back(std::move(e));
    });
    if (!have_header) throw ParseError("report", 1, "missing header");
    return report;
}

RegistryStore::RegistryStore(Registry initial, std::optional<std::filesystem::path> dir)
    : current_(std::make_shared<const Registry>(std::move(initial))), dir_(std::move(dir)) {}

std::shared_ptr<const Registry> RegistryStore::get() const {
    std::lock_guard lk(mu_);
    return current_;
}

void RegistryStore::install(Registry next) {
    if (dir_) next.save(*dir_);
    auto ptr = std::make_shared<const Registry>(std::move(next));
    std::lock_guard lk(mu_);
    current_ = std::move(ptr);
}

void RegistryStore::replace(Registry next) {
    std::lock_guard wl(write_mu_);
    install(std::move(next));
}

std::shared_ptr<const Registry> RegistryStore::update(const std::function<Registry(const Registry&)>& fn) {
    std::lock_guard wl(write_mu_);
    install(fn(*get()));
    return get();
}

} // namespace consrv::registry
