// SPDX-License-Identifier: Apache-2.0
#include "daemon/daemon.hpp"

#include <fstream>
#include <sstream>

#include "common/codec.hpp"
#include "common/error.hpp"
#include "sim/harness.hpp"

namespace consrv::daemon {

namespace {

Duration seconds_arg(const std::string& v, const std::string& key) {
    auto n = parse_int(v);
    if (!n || *n <= 0) throw InvalidArgument(key + ": expected a positive number of seconds");
    return Duration{*n * 1000};
}

long long int_arg(const std::string& v, const std::string& key) {
    auto n = parse_int(v);
    if (!n || *n < 0) throw InvalidArgument(key + ": expected a non-negative integer");
    return *n;
}

bool bool_arg(const std::string& v, const std::string& key) {
    if (v == "on" || v == "yes" || v == "true") return true;
    if (v == "off" || v == "no" || v == "false") return false;
    throw InvalidArgument(key + ": expected on or off");
}

} // namespace

DaemonConfig DaemonConfig::parse(std::string_view text) {
    DaemonConfig c;
    int lineno = 0;
    for (const auto& line : split_char(text, '\n')) {
        ++lineno;
        const auto f = split_fields(line);
        if (f.empty()) continue;
        const auto where = "config line " + std::to_string(lineno);
        auto need = [&](std::size_t n) {
            if (f.size() != n) throw InvalidArgument(where + ": wrong number of fields for '" + f[0] + "'");
        };
        const auto& k = f[0];
        if (k == "server") {
            need(2);
            c.server.server_id = f[1];
        } else if (k == "listen") {
            need(2);
            c.listen = f[1];
        } else if (k == "registry") {
            need(2);
            c.registry_dir = f[1];
        } else if (k == "log") {
            need(2);
            c.log_file = f[1];
        } else if (k == "syslog") {
            need(2);
            c.syslog = bool_arg(f[1], where);
        } else if (k == "audit") {
            need(2);
            c.audit_file = f[1];
        } else if (k == "reports") {
            need(2);
            c.server.report_dir = f[1];
        } else if (k == "port") {
            need(3);
            c.device_ports.emplace_back(static_cast<int>(int_arg(f[1], where)), f[2]);
        } else if (k == "chain") {
            need(3);
            c.device_chains.emplace_back(f[1], f[2]);
        } else if (k == "reset-interval") {
            need(2);
            c.reset_interval = seconds_arg(f[1], where);
        } else if (k == "pulse-tenths") {
            need(2);
            const auto t = int_arg(f[1], where);
            if (t < 1 || t > 255) throw InvalidArgument(where + ": pulse-tenths must be 1..255");
            c.server.pulse_width = Duration{t * 100};
        } else if (k == "ring-size") {
            need(2);
            c.server.ring_size = static_cast<std::size_t>(int_arg(f[1], where));
        } else if (k == "flush-bytes") {
            need(2);
            c.server.flush_bytes = static_cast<std::size_t>(int_arg(f[1], where));
        } else if (k == "flush-idle-ms") {
            need(2);
            c.server.flush_idle = Duration{int_arg(f[1], where)};
        } else if (k == "escape") {
            need(2);
            c.server.escape = f[1];
        } else if (k == "watchdog") {
            need(3);
            const auto& key = f[1];
            if (key == "enabled") {
                c.watchdog_enabled = bool_arg(f[2], where);
            } else if (key == "silence") {
                c.watchdog.silence_threshold = seconds_arg(f[2], where);
            } else if (key == "probe-retries") {
                c.watchdog.probe_retries = static_cast<int>(int_arg(f[2], where));
            } else if (key == "max-restarts") {
                c.watchdog.max_restarts = static_cast<int>(int_arg(f[2], where));
            } else if (key == "window") {
                c.watchdog.window = seconds_arg(f[2], where);
            } else if (key == "boot-grace") {
                c.watchdog.boot_grace = seconds_arg(f[2], where);
            } else if (key == "tick") {
                c.watchdog.tick = seconds_arg(f[2], where);
            } else if (key == "probe-timeout") {
                c.watchdog.probe_timeout = seconds_arg(f[2], where);
            } else {
                throw InvalidArgument(where + ": unknown watchdog key '" + key + "'");
            }
        } else {
            throw InvalidArgument(where + ": unknown key '" + k + "'");
        }
    }
    c.watchdog.validate();
    return c;
}

DaemonConfig DaemonConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::NotFound, "not-found", "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

Daemon::Daemon(DaemonConfig config, Clock& clock, std::optional<registry::Registry> initial)
    : config_(std::move(config)), clock_(clock) {
    registry::Registry reg;
    if (initial) {
        reg = std::move(*initial);
    } else if (config_.registry_dir) {
        reg = registry::Registry::load(*config_.registry_dir);
    }
    store_ = std::make_unique<registry::RegistryStore>(std::move(reg), config_.registry_dir);
    audit_ = std::make_unique<reset::AuditLog>(config_.audit_file);
    console_ = std::make_unique<ConsoleServer>(config_.server, *store_, clock_);
    if (config_.log_file) console_->add_sink(std::make_shared<FileLogSink>(*config_.log_file));
    if (config_.syslog) console_->add_sink(std::make_shared<SyslogLogSink>("consoled"));
    resets_ = std::make_unique<reset::ResetService>(*store_, *console_, *audit_, clock_, config_.reset_interval);

    watchdog::Watchdog::Hooks hooks;
    hooks.hosts = [this] { return supervised_hosts(); };
    hooks.send_probe = [this](const std::string& h) { console_->send_probe(h); };
    hooks.reset = [this](const std::string& h) {
        return resets_->submit({std::string(watchdog::kWatchdogPrincipal), h, std::string(watchdog::kWatchdogReason),
                                clock_.now()});
    };
    hooks.raise_alarm = [this](const std::string& h, const std::string& cause) { console_->raise_alarm(h, cause); };
    watchdog_ = std::make_unique<watchdog::Watchdog>(config_.watchdog, clock_, *store_, *audit_, std::move(hooks));
    console_->set_output_observer([this](const std::string& h, TimePoint at) { watchdog_->on_output(h, at); });

    auth_ = std::make_unique<auth::Authenticator>(config_.server.server_id, clock_);
}

Daemon::~Daemon() { stop(); }

void Daemon::open_devices() {
    for (const auto& [index, path] : config_.device_ports) console_->add_port(index, transport::open_device(path));
    for (const auto& [name, path] : config_.device_chains) console_->add_chain(name, transport::open_device(path));
}

void Daemon::attach_harness(sim::Harness& harness) {
    for (const auto& [index, ep] : harness.console_endpoints()) console_->add_port(index, ep);
    console_->add_chain(harness.options().chain_device, harness.chain_endpoint());
}

void Daemon::start() {
    if (started_) return;
    started_ = true;
    console_->start();
    if (config_.watchdog_enabled) watchdog_->start();
}

void Daemon::stop() {
    if (!started_) return;
    started_ = false;
    watchdog_->stop();
    console_->stop();
}

std::vector<std::string> Daemon::supervised_hosts() const {
    std::vector<std::string> out;
    const auto reg = store_->get();
    for (const auto& p : console_->ports()) {
        if (reg->host_at(server_id(), p.index)) out.push_back(p.host);
    }
    return out;
}

std::string Daemon::state_digest() const {
    const auto reg = store_->get();
    std::string s = reg->interconnections_text() + "\x1e" + reg->grants_text() + "\x1e" + reg->keys_text() + "\x1e";
    for (const auto& r : console_->sessions(false)) {
        s += std::to_string(r.session_id) + (r.active ? "+" : "-") + r.host + ",";
    }
    s += "\x1e";
    for (const auto& h : watchdog_->status()) {
        s += h.host + ":" + std::string(watchdog::phase_name(h.phase)) + ":" + std::to_string(h.restarts.size()) + ",";
    }
    s += "\x1e" + std::to_string(watchdog_->actions().size());
    s += "\x1e" + std::to_string(audit_->size());
    s += "\x1e" + std::to_string(console_->operational_alarms().size());
    return hex(sha256(to_bytes(s)));
}

} // namespace consrv::daemon
