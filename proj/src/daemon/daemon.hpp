// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "auth/authenticator.hpp"
#include "daemon/console_server.hpp"
#include "registry/registry.hpp"
#include "reset/audit.hpp"
#include "reset/reset_service.hpp"
#include "watchdog/watchdog.hpp"

namespace consrv::sim {
class Harness;
}

namespace consrv::daemon {

struct DaemonConfig {
    ServerOptions server;
    std::string listen = "127.0.0.1:7070";
    std::optional<std::filesystem::path> registry_dir;
    std::optional<std::filesystem::path> log_file;
    std::optional<std::filesystem::path> audit_file;
    bool syslog = false;
    Duration reset_interval = 30s;
    bool watchdog_enabled = true;
    watchdog::WatchdogPolicy watchdog;
    std::vector<std::pair<int, std::string>> device_ports;
    std::vector<std::pair<std::string, std::string>> device_chains;

    // Line-oriented server config; see README for the keys.
    static DaemonConfig parse(std::string_view text);
    static DaemonConfig load(const std::filesystem::path& path);
};

// Composition root for one console/reset server.
class Daemon {
public:
    // With no initial registry the store is loaded from config.registry_dir
    // (or starts empty).
    Daemon(DaemonConfig config, Clock& clock, std::optional<registry::Registry> initial = std::nullopt);
    ~Daemon();

    Daemon(const Daemon&) = delete;
    Daemon& operator=(const Daemon&) = delete;

    // Opens the serial devices named in the config.
    void open_devices();
    // Wires a simulated farm's endpoints in as ports and relay chain.
    void attach_harness(sim::Harness& harness);

    void start();
    void stop();

    const DaemonConfig& config() const { return config_; }
    const std::string& server_id() const { return config_.server.server_id; }
    Clock& clock() { return clock_; }
    registry::RegistryStore& registry() { return *store_; }
    reset::AuditLog& audit() { return *audit_; }
    ConsoleServer& console() { return *console_; }
    reset::ResetService& resets() { return *resets_; }
    watchdog::Watchdog& watchdog() { return *watchdog_; }
    auth::Authenticator& authenticator() { return *auth_; }

    // Hash over all externally visible mutable state; equal before and after
    // any read-only request.
    std::string state_digest() const;

private:
    std::vector<std::string> supervised_hosts() const;

    DaemonConfig config_;
    Clock& clock_;
    std::unique_ptr<registry::RegistryStore> store_;
    std::unique_ptr<reset::AuditLog> audit_;
    std::unique_ptr<ConsoleServer> console_;
    std::unique_ptr<reset::ResetService> resets_;
    std::unique_ptr<watchdog::Watchdog> watchdog_;
    std::unique_ptr<auth::Authenticator> auth_;
    bool started_ = false;
};

} // namespace consrv::daemon
