// SPDX-License-Identifier: Apache-2.0
// consolectl: command-line client for the console/reset daemon.
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "consrv/consrv.h"

namespace {

struct Globals {
    std::string server = "127.0.0.1:7070";
    std::string principal;
    std::string key;
    bool tsv = false;
};

volatile std::sig_atomic_t g_interrupted = 0;

int diag(cs_status s, const std::string& what) {
    std::fprintf(stderr, "consolectl: %s: %s\n", cs_status_word(s), what.c_str());
    return static_cast<int>(s);
}

int diag(cs_status s) {
    const char* msg = cs_last_error();
    return diag(s, *msg ? msg : cs_status_word(s));
}

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

class Connection {
public:
    explicit Connection(const Globals& g) {
        status_ = cs_client_connect(g.server.c_str(), g.principal.c_str(), g.key.c_str(), &c_);
    }
    ~Connection() { cs_client_close(c_); }
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    cs_status status() const { return status_; }
    cs_client* get() const { return c_; }

private:
    cs_client* c_ = nullptr;
    cs_status status_ = CS_OK;
};

struct Printer {
    bool tsv = false;
    std::vector<std::string> held;
    bool hold = false;
};

void print_row(void* ctx, int is_log, int nfields, const char* const* fields) {
    auto* p = static_cast<Printer*>(ctx);
    std::string line;
    for (int i = 0; i < nfields; ++i) {
        if (i) line += p->tsv || is_log ? '\t' : ' ';
        line += fields[i];
    }
    if (p->hold) {
        p->held.push_back(line);
        return;
    }
    std::fputs(line.c_str(), stdout);
    std::fputc('\n', stdout);
}

void flush_rows(const Printer& p) {
    for (const auto& l : p.held) std::printf("%s\n", l.c_str());
}

// One request; rows to stdout on success, otherwise only the diagnostic.
int simple(const Globals& g, const std::string& request, bool print_ok_text = false) {
    Connection conn(g);
    if (conn.status() != CS_OK) return diag(conn.status());
    Printer p{g.tsv, {}, true};
    char* text = nullptr;
    const auto s = cs_client_request(conn.get(), request.c_str(), print_row, &p, &text);
    if (s != CS_OK) return diag(s);
    flush_rows(p);
    if (print_ok_text && text && *text) std::printf("%s\n", text);
    cs_free(text);
    cs_client_request(conn.get(), "QUIT", nullptr, nullptr, nullptr);
    return 0;
}

// Printable ASCII and the usual line controls pass through; everything else
// is shown as \xNN.
void render(const char* data, std::size_t len) {
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        const auto c = static_cast<unsigned char>(data[i]);
        if ((c >= 0x20 && c < 0x7f) || c == '\r' || c == '\n' || c == '\t' || c == '\b') {
            out += static_cast<char>(c);
        } else {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\x%02x", c);
            out += buf;
        }
    }
    std::string_view rest = out;
    while (!rest.empty()) {
        const auto n = ::write(STDOUT_FILENO, rest.data(), rest.size());
        if (n <= 0) return;
        rest.remove_prefix(static_cast<std::size_t>(n));
    }
}

class RawTerminal {
public:
    RawTerminal() {
        if (!::isatty(STDIN_FILENO) || ::tcgetattr(STDIN_FILENO, &saved_) != 0) return;
        termios raw = saved_;
        ::cfmakeraw(&raw);
        active_ = ::tcsetattr(STDIN_FILENO, TCSANOW, &raw) == 0;
    }
    ~RawTerminal() {
        if (active_) ::tcsetattr(STDIN_FILENO, TCSANOW, &saved_);
    }
    RawTerminal(const RawTerminal&) = delete;
    RawTerminal& operator=(const RawTerminal&) = delete;

private:
    termios saved_{};
    bool active_ = false;
};

int console(const Globals& g, const std::string& host, bool read_only) {
    Connection conn(g);
    if (conn.status() != CS_OK) return diag(conn.status());
    cs_client* c = conn.get();
    const std::string req = "ATTACH " + host + (read_only ? " ro" : " rw");
    if (auto s = cs_client_send_line(c, req.c_str()); s != CS_OK) return diag(s);

    cs_frame_kind kind = CS_FRAME_NONE;
    char* data = nullptr;
    std::size_t len = 0;
    cs_status err = CS_OK;
    do {
        if (auto s = cs_client_next(c, 10000, &kind, &data, &len, &err); s != CS_OK) return diag(s);
        if (kind == CS_FRAME_NONE) return diag(CS_ERR_TRANSPORT, "no reply from server");
    } while (kind != CS_FRAME_OK && kind != CS_FRAME_ERR && (cs_free(data), true));
    if (kind == CS_FRAME_ERR) {
        const std::string msg = data ? data : "";
        cs_free(data);
        return diag(err, msg);
    }
    cs_free(data);
    if (!g.tsv) std::fprintf(stderr, "[attached to %s%s; ~. detaches]\r\n", host.c_str(), read_only ? " read-only" : "");

    RawTerminal term;
    bool stdin_open = true;
    for (;;) {
        pollfd fds[2] = {{cs_client_fd(c), POLLIN, 0}, {STDIN_FILENO, POLLIN, 0}};
        ::poll(fds, stdin_open ? 2 : 1, 200);
        if (stdin_open && (fds[1].revents & (POLLIN | POLLHUP))) {
            char buf[1024];
            const auto n = ::read(STDIN_FILENO, buf, sizeof buf);
            if (n <= 0) {
                stdin_open = false;
                cs_client_send_line(c, "DETACH");
            } else if (!read_only) {
                if (auto s = cs_client_send_data(c, buf, static_cast<std::size_t>(n)); s != CS_OK) return diag(s);
            }
        }
        for (;;) {
            if (auto s = cs_client_next(c, 0, &kind, &data, &len, &err); s != CS_OK) return diag(s);
            if (kind == CS_FRAME_NONE) break;
            if (kind == CS_FRAME_DATA) {
                render(data, len);
            } else if (kind == CS_FRAME_ERR) {
                const std::string msg = data ? data : "";
                cs_free(data);
                if (err != CS_ERR_INVALID) return diag(err, msg);
                continue;
            } else if (kind == CS_FRAME_END) {
                cs_free(data);
                return 0;
            }
            cs_free(data);
        }
    }
}

// Streams L or E frames until END or Ctrl-C.
int stream(cs_client* c, bool tsv) {
    for (;;) {
        cs_frame_kind kind = CS_FRAME_NONE;
        char* data = nullptr;
        std::size_t len = 0;
        cs_status err = CS_OK;
        if (g_interrupted) {
            cs_client_send_line(c, "QUIT");
            return 0;
        }
        if (auto s = cs_client_next(c, 200, &kind, &data, &len, &err); s != CS_OK) {
            return g_interrupted ? 0 : diag(s);
        }
        if (kind == CS_FRAME_LINE) {
            std::printf("%s\n", data);
        } else if (kind == CS_FRAME_EVENT) {
            std::string line = data;
            if (!tsv) {
                const auto tab = line.find('\t');
                if (tab != std::string::npos) line[tab] = ' ';
            }
            std::printf("%s\n", line.c_str());
        } else if (kind == CS_FRAME_END) {
            cs_free(data);
            return 0;
        } else if (kind == CS_FRAME_ERR) {
            const std::string msg = data ? data : "";
            cs_free(data);
            return diag(err, msg);
        }
        if (kind != CS_FRAME_NONE) std::fflush(stdout);
        cs_free(data);
    }
}

int streaming_request(const Globals& g, const std::string& request, bool tsv) {
    Connection conn(g);
    if (conn.status() != CS_OK) return diag(conn.status());
    Printer p{tsv};
    if (auto s = cs_client_request(conn.get(), request.c_str(), print_row, &p, nullptr); s != CS_OK) return diag(s);
    std::fflush(stdout);
    return stream(conn.get(), tsv);
}

int detect(const Globals& g, const std::string& server, bool apply, const std::vector<int>& acks) {
    std::string req = "DETECT " + server;
    if (apply) req += " APPLY";
    if (!acks.empty()) {
        req += " ACK";
        for (int p : acks) req += " " + std::to_string(p);
    }
    Connection conn(g);
    if (conn.status() != CS_OK) return diag(conn.status());
    Printer p{g.tsv, {}, true};
    char* text = nullptr;
    const auto s = cs_client_request(conn.get(), req.c_str(), print_row, &p, &text);
    // human output of a plain detect reads like the daemon's report file
    if (!g.tsv && !apply && s == CS_OK && text) std::printf("%s\n", text);
    // conflicts are printed even though the exit status is nonzero
    if (s == CS_OK || s == CS_ERR_CONFLICT) flush_rows(p);
    cs_free(text);
    if (s != CS_OK) return diag(s);
    return 0;
}

int keygen(const std::string& path, const std::string& principal) {
    char* line = nullptr;
    if (auto s = cs_keygen(path.c_str(), principal.c_str(), &line); s != CS_OK) return diag(s);
    std::printf("%s\n", line);
    cs_free(line);
    return 0;
}

int bundle(const std::string& registry_dir, const std::string& server, const std::string& out_dir) {
    cs_registry* reg = nullptr;
    if (auto s = cs_registry_load(registry_dir.c_str(), &reg); s != CS_OK) return diag(s);
    const auto s = cs_registry_bundle(reg, server.c_str(), out_dir.c_str());
    cs_registry_free(reg);
    return s == CS_OK ? 0 : diag(s);
}

} // namespace

int main(int argc, char** argv) {
    Globals g;
    g.server = env_or("CONSRV_SERVER", g.server);
    g.principal = env_or("CONSRV_PRINCIPAL", env_or("USER", "nobody"));
    g.key = env_or("CONSRV_KEY", env_or("HOME", ".") + "/.consrv/id_ed25519");

    CLI::App app{"Console and reset server client"};
    app.require_subcommand(1);
    app.add_option("-s,--server", g.server, "daemon address host:port (env CONSRV_SERVER)");
    app.add_option("-p,--principal", g.principal, "principal name (env CONSRV_PRINCIPAL)");
    app.add_option("-k,--key", g.key, "private key file (env CONSRV_KEY)");
    app.add_flag("--tsv", g.tsv, "tab-separated output, one record per line");

    int rc = 0;
    std::string host, server, principal, action, pattern, what, reason, since, pubkey, path, out_dir, from, to;
    bool read_only = false, follow = false, apply = false;
    std::vector<int> acks;

    auto* con = app.add_subcommand("console", "attach to a console (~. detaches)");
    con->add_option("host", host)->required();
    con->add_flag("-r,--read-only", read_only);
    con->callback([&] { rc = console(g, host, read_only); });

    auto* log = app.add_subcommand("log", "print a console log");
    log->add_option("host", host)->required();
    log->add_flag("-f,--follow", follow);
    log->add_option("--since", since, "RFC 3339 timestamp");
    log->callback([&] {
        std::string req = "LOG " + host;
        if (!since.empty()) req += " SINCE " + since;
        if (follow) {
            rc = streaming_request(g, req + " FOLLOW", g.tsv);
        } else {
            rc = simple(g, req);
        }
    });

    auto* rst = app.add_subcommand("reset", "pulse a host's reset line");
    rst->add_option("host", host)->required();
    rst->add_option("--reason", reason)->required();
    rst->callback([&] {
        if (reason.find_first_not_of(" \t") == std::string::npos) {
            rc = diag(CS_ERR_INVALID, "a reason is required");
            return;
        }
        if (reason.find('\n') != std::string::npos) {
            rc = diag(CS_ERR_INVALID, "reason must be a single line");
            return;
        }
        rc = simple(g, "RESET " + host + " " + reason);
    });

    auto* det = app.add_subcommand("detect", "probe a server's ports for attached hosts");
    det->add_option("server", server)->required();
    det->add_flag("--apply", apply, "merge the report into the registry");
    det->add_option("--force-acknowledge", acks, "accept the detected mapping for this port")->needs("--apply");
    det->callback([&] { rc = detect(g, server, apply, acks); });

    for (const char* verb : {"grant", "revoke"}) {
        auto* sc = app.add_subcommand(verb, std::string(verb) + " a permission");
        sc->add_option("principal", principal)->required();
        sc->add_option("action", action, "console|console-ro|reset|admin")->required();
        sc->add_option("pattern", pattern, "host glob")->required();
        sc->callback([&, verb] {
            rc = simple(g, std::string(verb[0] == 'g' ? "GRANT " : "REVOKE ") + principal + " " + action + " " +
                               pattern);
        });
    }

    auto* key = app.add_subcommand("key", "register a principal's public key");
    key->add_option("principal", principal)->required();
    key->add_option("public-key", pubkey, "base64")->required();
    key->callback([&] { rc = simple(g, "KEY " + principal + " " + pubkey, true); });

    auto* list = app.add_subcommand("list", "list hosts, ports or sessions");
    list->add_option("what", what)->required()->check(CLI::IsMember({"hosts", "ports", "sessions"}));
    list->callback([&] { rc = simple(g, "LIST " + what); });

    auto* wd = app.add_subcommand("watchdog", "watchdog status or alarm clearing");
    wd->require_subcommand(1);
    wd->add_subcommand("status", "per-host watchdog state")->callback([&] { rc = simple(g, "WATCHDOG STATUS"); });
    auto* clr = wd->add_subcommand("clear", "clear a host's alarm");
    clr->add_option("host", host)->required();
    clr->callback([&] { rc = simple(g, "WATCHDOG CLEAR " + host); });

    auto* alarms = app.add_subcommand("alarms", "list raised alarms");
    alarms->callback([&] { rc = simple(g, "ALARMS"); });

    auto* aud = app.add_subcommand("audit", "query the reset audit trail");
    aud->add_option("--host", host);
    aud->add_option("--principal", principal);
    aud->add_option("--from", from, "inclusive RFC 3339 timestamp");
    aud->add_option("--to", to, "exclusive RFC 3339 timestamp");
    aud->callback([&] {
        std::string req = "AUDIT";
        if (!host.empty()) req += " HOST " + host;
        if (!principal.empty()) req += " PRINCIPAL " + principal;
        if (!from.empty()) req += " FROM " + from;
        if (!to.empty()) req += " TO " + to;
        rc = simple(g, req);
    });

    auto* sub = app.add_subcommand("subscribe", "stream console lines matching a pattern (re:<regex> or substring)");
    sub->add_option("host", host)->required();
    sub->add_option("pattern", pattern)->required();
    sub->callback([&] { rc = streaming_request(g, "SUBSCRIBE " + host + " " + pattern, g.tsv); });

    auto* kg = app.add_subcommand("keygen", "create a key pair locally and print its registry line");
    kg->add_option("path", path)->required();
    kg->callback([&] { rc = keygen(path, g.principal); });

    auto* bnd = app.add_subcommand("bundle", "write a server's configuration bundle from a registry directory");
    bnd->add_option("registry", path)->required();
    bnd->add_option("server", server)->required();
    bnd->add_option("out-dir", out_dir)->required();
    bnd->callback([&] { rc = bundle(path, server, out_dir); });

    std::signal(SIGINT, [](int) { g_interrupted = 1; });
    std::signal(SIGPIPE, SIG_IGN);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(CS_ERR_INVALID);
    }
    std::fflush(stdout);
    return rc;
}
