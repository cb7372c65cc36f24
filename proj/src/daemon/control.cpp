// SPDX-License-Identifier: Apache-2.0
#include "daemon/control.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "common/codec.hpp"
#include "common/error.hpp"
#include "daemon/daemon.hpp"

namespace consrv::daemon {

namespace {

std::string clean(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return out;
}

void row(std::string& out, const std::vector<std::string>& fields) {
    out += "R ";
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += '\t';
        out += clean(fields[i]);
    }
    out += '\n';
}

void ok(std::string& out, std::string_view text = {}) {
    out += "OK";
    if (!text.empty()) {
        out += ' ';
        out += clean(text);
    }
    out += '\n';
}

void err(std::string& out, Errc code, std::string_view msg) {
    out += "ERR ";
    out += errc_word(code);
    out += ' ';
    out += clean(msg);
    out += '\n';
}

std::vector<std::string> words_of(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        const auto start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) out.emplace_back(line.substr(start, i - start));
    }
    return out;
}

// Text after the first n words, leading blanks trimmed.
std::string rest_after(std::string_view line, std::size_t n) {
    std::size_t i = 0;
    for (std::size_t w = 0; w < n; ++w) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    }
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    return std::string(line.substr(i));
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    return s;
}

TimePoint time_arg(const std::string& s) {
    auto t = parse_rfc3339(s);
    if (!t) throw InvalidArgument("bad timestamp: " + s);
    return *t;
}

Errc outcome_errc(reset::ResetOutcome o) {
    switch (o) {
    case reset::ResetOutcome::Ok:
        return Errc::Internal;
    case reset::ResetOutcome::Denied:
        return Errc::Denied;
    case reset::ResetOutcome::NoWiring:
        return Errc::NotFound;
    case reset::ResetOutcome::Nak:
    case reset::ResetOutcome::Timeout:
        return Errc::Transport;
    case reset::ResetOutcome::RateLimited:
        return Errc::RateLimited;
    }
    return Errc::Internal;
}

void require_admin(const registry::Registry& reg, const std::string& principal) {
    if (!reg.is_admin(principal)) throw Denied(principal + " is not an admin");
}

} // namespace

ControlConnection::ControlConnection(Daemon& daemon) : daemon_(daemon) {}

ControlConnection::~ControlConnection() { shutdown(); }

std::string ControlConnection::greeting() {
    challenge_ = daemon_.authenticator().issue_challenge();
    return auth::format_challenge(*challenge_) + "\n";
}

void ControlConnection::shutdown() {
    if (session_) {
        session_->detach();
        session_.reset();
    }
    if (subscription_) {
        subscription_->cancel();
        subscription_.reset();
    }
}

std::string ControlConnection::on_input(std::string_view bytes) {
    std::string out;
    inbuf_.append(bytes);
    while (!closed_) {
        if (data_pending_) {
            if (inbuf_.size() < *data_pending_) break;
            const std::string data = inbuf_.substr(0, *data_pending_);
            inbuf_.erase(0, *data_pending_);
            data_pending_.reset();
            if (mode_ == Mode::Attached && session_) {
                try {
                    session_->send(data);
                } catch (const Error& e) {
                    err(out, e.code(), e.what());
                }
            }
            drain(out);
            continue;
        }
        const auto nl = inbuf_.find('\n');
        if (nl == std::string::npos) {
            if (inbuf_.size() > 65536) {
                err(out, Errc::Invalid, "line too long");
                closed_ = true;
            }
            break;
        }
        std::string line = inbuf_.substr(0, nl);
        inbuf_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        handle_line(line, out);
    }
    return out;
}

std::string ControlConnection::poll() {
    std::string out;
    drain(out);
    return out;
}

void ControlConnection::drain(std::string& out) {
    if (mode_ == Mode::Attached && session_) {
        const Bytes data = session_->take_output();
        if (!data.empty()) {
            out += "D " + std::to_string(data.size()) + "\n";
            out.append(data.begin(), data.end());
        }
        if (!session_->active()) {
            session_.reset();
            mode_ = Mode::Command;
            out += "END\n";
        }
    } else if (mode_ == Mode::Streaming && subscription_) {
        for (const auto& ev : subscription_->take()) {
            if (stream_is_log_) {
                out += "L " + ev.line + "\n";
            } else {
                out += "E " + format_rfc3339(ev.timestamp) + "\t" + ev.line + "\n";
            }
        }
    }
}

void ControlConnection::end_stream(std::string& out) {
    drain(out);
    if (session_) {
        session_->detach();
        session_.reset();
    }
    if (subscription_) {
        subscription_->cancel();
        subscription_.reset();
    }
    mode_ = Mode::Command;
    out += "END\n";
}

void ControlConnection::handle_line(const std::string& line, std::string& out) {
    switch (mode_) {
    case Mode::Handshake: {
        auto cred = auth::parse_auth(line);
        if (!cred || !challenge_) {
            err(out, Errc::Denied, "expected AUTH <principal> <signature>");
            closed_ = true;
            return;
        }
        try {
            const auto reg = daemon_.registry().get();
            principal_ = daemon_.authenticator().authenticate(*challenge_, *cred, *reg);
            mode_ = Mode::Command;
            ok(out, *principal_);
        } catch (const Error& e) {
            err(out, e.code(), e.what());
            closed_ = true;
        }
        challenge_.reset();
        return;
    }
    case Mode::Attached: {
        const auto w = words_of(line);
        if (w.size() == 2 && w[0] == "D") {
            auto n = parse_int(w[1]);
            if (!n || *n < 0 || *n > (1 << 20)) {
                err(out, Errc::Invalid, "bad data frame length");
                closed_ = true;
                return;
            }
            data_pending_ = static_cast<std::size_t>(*n);
        } else if (!w.empty() && (upper(w[0]) == "DETACH" || upper(w[0]) == "STOP")) {
            end_stream(out);
        } else {
            err(out, Errc::Invalid, "attached: expected D <len> or DETACH");
        }
        return;
    }
    case Mode::Streaming: {
        const auto w = words_of(line);
        if (!w.empty() && (upper(w[0]) == "STOP" || upper(w[0]) == "DETACH")) {
            end_stream(out);
        } else if (!w.empty() && upper(w[0]) == "QUIT") {
            end_stream(out);
            closed_ = true;
        } else {
            err(out, Errc::Invalid, "streaming: expected STOP");
        }
        return;
    }
    case Mode::Command:
        break;
    }
    const auto w = words_of(line);
    if (w.empty()) return;
    try {
        handle_command(w, line, out);
    } catch (const Error& e) {
        err(out, e.code(), e.what());
    } catch (const std::exception& e) {
        err(out, Errc::Internal, e.what());
    }
}

void ControlConnection::handle_command(const std::vector<std::string>& w, const std::string& line, std::string& out) {
    const std::string verb = upper(w[0]);
    const std::string& me = *principal_;
    auto& console = daemon_.console();
    auto need = [&](std::size_t min, std::size_t max, const char* usage) {
        if (w.size() < min || w.size() > max) throw InvalidArgument(std::string("usage: ") + usage);
    };

    if (verb == "QUIT") {
        ok(out, "bye");
        closed_ = true;
    } else if (verb == "ATTACH") {
        need(2, 3, "ATTACH <host> [rw|ro]");
        const std::string m = w.size() == 3 ? w[2] : "rw";
        if (m != "rw" && m != "ro") throw InvalidArgument("mode must be rw or ro");
        session_ = console.attach(me, w[1], m == "rw" ? SessionMode::ReadWrite : SessionMode::ReadOnly);
        mode_ = Mode::Attached;
        ok(out, "attached " + std::to_string(session_->id()) + " " + m);
        drain(out);
    } else if (verb == "SUBSCRIBE") {
        need(3, SIZE_MAX, "SUBSCRIBE <host> <pattern>");
        subscription_ = console.subscribe_pattern(me, w[1], rest_after(line, 2));
        stream_is_log_ = false;
        mode_ = Mode::Streaming;
        ok(out, "subscribed " + std::to_string(subscription_->id()));
    } else if (verb == "LOG") {
        need(2, 5, "LOG <host> [SINCE <ts>] [FOLLOW]");
        std::optional<TimePoint> since;
        bool follow = false;
        for (std::size_t i = 2; i < w.size(); ++i) {
            const auto k = upper(w[i]);
            if (k == "SINCE" && i + 1 < w.size()) {
                since = time_arg(w[++i]);
            } else if (k == "FOLLOW") {
                follow = true;
            } else {
                throw InvalidArgument("usage: LOG <host> [SINCE <ts>] [FOLLOW]");
            }
        }
        std::vector<std::string> backlog;
        if (follow) {
            subscription_ = console.follow_log(me, w[1], since, backlog);
        } else {
            backlog = console.log_history(me, w[1], since);
        }
        for (const auto& l : backlog) out += "L " + l + "\n";
        if (follow) {
            stream_is_log_ = true;
            mode_ = Mode::Streaming;
            ok(out, "following");
        } else {
            ok(out);
        }
    } else if (verb == "RESET") {
        need(2, SIZE_MAX, "RESET <host> <reason...>");
        const auto ev = daemon_.resets().submit({me, w[1], rest_after(line, 2), daemon_.clock().now()});
        row(out, {reset::format_audit(ev)});
        if (ev.outcome == reset::ResetOutcome::Ok) {
            ok(out);
        } else {
            err(out, outcome_errc(ev.outcome),
                "reset " + std::string(reset::outcome_code(ev.outcome)) + " for " + w[1]);
        }
    } else if (verb == "DETECT") {
        need(2, SIZE_MAX, "DETECT <server> [APPLY [ACK <port>...]]");
        if (w[1] != daemon_.server_id()) throw UnknownServer(w[1]);
        bool apply = false;
        std::set<int> acked;
        for (std::size_t i = 2; i < w.size(); ++i) {
            const auto k = upper(w[i]);
            if (k == "APPLY") {
                apply = true;
            } else if (k == "ACK") {
                for (++i; i < w.size(); ++i) {
                    auto p = parse_int(w[i]);
                    if (!p) throw InvalidArgument("ACK expects port numbers");
                    acked.insert(static_cast<int>(*p));
                }
            } else {
                throw InvalidArgument("usage: DETECT <server> [APPLY [ACK <port>...]]");
            }
        }
        if (!acked.empty() && !apply) throw InvalidArgument("ACK requires APPLY");
        const auto report = console.run_detection(me);
        for (const auto& e : report.entries) {
            row(out, {"port", std::to_string(e.port), e.host.value_or("unknown")});
        }
        if (!apply) {
            ok(out, "detected " + report.server_id + " " + format_rfc3339(report.generated_at));
            return;
        }
        std::vector<registry::MergeConflict> open;
        std::vector<registry::InterconnectionRecord> added;
        daemon_.registry().update([&](const registry::Registry& cur) {
            auto mr = cur.merge_detection(report);
            open.clear();
            added = mr.added;
            std::vector<registry::MergeConflict> take;
            for (const auto& c : mr.conflicts) (acked.count(c.port) ? take : open).push_back(c);
            return take.empty() ? std::move(mr.registry) : mr.registry.apply_conflicts(take);
        });
        for (const auto& a : added) {
            row(out, {"added", a.host, a.console ? std::to_string(a.console->port) : "-"});
        }
        for (const auto& c : open) {
            row(out, {"conflict", std::to_string(c.port),
                      c.kind == registry::MergeConflict::Kind::PortMismatch ? "port-mismatch" : "host-elsewhere",
                      c.was, c.saw});
        }
        if (open.empty()) {
            ok(out, "applied");
        } else {
            err(out, Errc::Conflict, std::to_string(open.size()) + " unresolved conflict(s); acknowledge each port");
        }
    } else if (verb == "GRANT" || verb == "REVOKE") {
        need(4, 4, "GRANT|REVOKE <principal> <action> <pattern>");
        const auto reg = daemon_.registry().get();
        require_admin(*reg, me);
        auto action = registry::parse_action(w[2]);
        if (!action) throw InvalidArgument("unknown action " + w[2]);
        if (!registry::glob_valid(w[3])) throw InvalidArgument("bad host pattern " + w[3]);
        const registry::Grant g{w[1], *action, w[3]};
        daemon_.registry().update([&](const registry::Registry& cur) {
            if (verb == "GRANT") return cur.with_grant(g);
            if (std::find(cur.grants().begin(), cur.grants().end(), g) == cur.grants().end()) {
                throw Error(Errc::NotFound, "not-found", "no such grant");
            }
            return cur.without_grant(g);
        });
        ok(out);
    } else if (verb == "KEY") {
        need(3, 3, "KEY <principal> <base64 public key>");
        const auto reg = daemon_.registry().get();
        require_admin(*reg, me);
        auto raw = base64_decode(w[2]);
        if (!raw || raw->size() != 32) throw InvalidArgument("public key must be 32 bytes of base64");
        const registry::PrincipalKey k{w[1], w[2], registry::key_fingerprint(*raw)};
        daemon_.registry().update([&](const registry::Registry& cur) { return cur.with_key(k); });
        ok(out, k.key_id);
    } else if (verb == "LIST") {
        need(2, 2, "LIST hosts|ports|sessions");
        const auto what = upper(w[1]);
        if (what == "HOSTS") {
            const auto reg = daemon_.registry().get();
            for (const auto& r : reg->records()) {
                row(out, {r.host, r.console ? r.console->server_id : "-",
                          r.console ? std::to_string(r.console->port) : "-",
                          r.reset ? r.reset->device + ":" + r.reset->address.str() : "-"});
            }
        } else if (what == "PORTS") {
            for (const auto& p : console.ports()) {
                row(out, {std::to_string(p.index), p.label, p.host, p.open ? "open" : "closed", p.writer.value_or("-"),
                          std::to_string(p.readers), std::to_string(p.bytes_in)});
            }
        } else if (what == "SESSIONS") {
            for (const auto& s : console.sessions()) {
                row(out, {std::to_string(s.session_id), s.principal, s.host,
                          s.mode == SessionMode::ReadWrite ? "rw" : "ro", std::to_string(s.delivered)});
            }
        } else {
            throw InvalidArgument("usage: LIST hosts|ports|sessions");
        }
        ok(out);
    } else if (verb == "WATCHDOG") {
        need(2, 3, "WATCHDOG STATUS | WATCHDOG CLEAR <host>");
        const auto sub = upper(w[1]);
        if (sub == "STATUS" && w.size() == 2) {
            for (const auto& h : daemon_.watchdog().status()) {
                row(out, {h.host, std::string(watchdog::phase_name(h.phase)), format_rfc3339(h.last_output_at),
                          std::to_string(h.restarts.size()), h.alarm_cause.empty() ? "-" : h.alarm_cause});
            }
            ok(out);
        } else if (sub == "CLEAR" && w.size() == 3) {
            const auto ev = daemon_.watchdog().clear_alarm(me, w[2]);
            row(out, {reset::format_audit(ev)});
            ok(out);
        } else {
            throw InvalidArgument("usage: WATCHDOG STATUS | WATCHDOG CLEAR <host>");
        }
    } else if (verb == "ALARMS") {
        need(1, 1, "ALARMS");
        for (const auto& a : daemon_.watchdog().alarms()) row(out, {"watchdog", a.host, a.alarm_cause});
        for (const auto& a : console.operational_alarms()) {
            row(out, {"operational", a.source, a.message, format_rfc3339(a.at)});
        }
        ok(out);
    } else if (verb == "AUDIT") {
        reset::AuditFilter f;
        for (std::size_t i = 1; i < w.size(); ++i) {
            const auto k = upper(w[i]);
            if (i + 1 >= w.size()) throw InvalidArgument("usage: AUDIT [HOST h] [PRINCIPAL p] [FROM ts] [TO ts]");
            const auto& v = w[++i];
            if (k == "HOST") {
                f.host = v;
            } else if (k == "PRINCIPAL") {
                f.principal = v;
            } else if (k == "FROM") {
                f.from = time_arg(v);
            } else if (k == "TO") {
                f.to = time_arg(v);
            } else {
                throw InvalidArgument("usage: AUDIT [HOST h] [PRINCIPAL p] [FROM ts] [TO ts]");
            }
        }
        // non-admins see their own requests only
        const auto reg = daemon_.registry().get();
        if (!reg->is_admin(me)) {
            if (f.principal && *f.principal != me) throw Denied("only admins may read other principals' events");
            f.principal = me;
        }
        for (const auto& ev : daemon_.audit().query(f)) row(out, {reset::format_audit(ev)});
        ok(out);
    } else {
        throw InvalidArgument("unknown command " + w[0]);
    }
}

} // namespace consrv::daemon
