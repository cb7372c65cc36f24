// SPDX-License-Identifier: Apache-2.0
// consoled: console and reset server daemon.
#include <csignal>
#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "consrv/consrv.h"

int main(int argc, char** argv) {
    CLI::App app{"Console and reset server daemon"};
    std::string config, listen, topology;
    std::uint64_t seed = 1;
    double speed = 1.0;
    app.add_option("-c,--config", config, "server configuration file");
    app.add_option("-l,--listen", listen, "control address host:port (overrides the config)");
    app.add_option("--simulate", topology, "run a simulated farm described by this topology file");
    app.add_option("--seed", seed, "simulation seed");
    app.add_option("--sim-speed", speed, "simulated seconds per wall-clock second")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    // block before any thread starts so only sigwait sees these
    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
    std::signal(SIGPIPE, SIG_IGN);

    cs_daemon* d = nullptr;
    auto s = cs_daemon_create(config.empty() ? nullptr : config.c_str(), listen.empty() ? nullptr : listen.c_str(),
                              topology.empty() ? nullptr : topology.c_str(), seed, speed, &d);
    if (s == CS_OK) s = cs_daemon_start(d);
    if (s != CS_OK) {
        std::fprintf(stderr, "consoled: %s: %s\n", cs_status_word(s), cs_last_error());
        cs_daemon_destroy(d);
        return static_cast<int>(s);
    }
    std::fprintf(stderr, "consoled: listening on port %d\n", cs_daemon_bound_port(d));

    int sig = 0;
    sigwait(&sigs, &sig);
    std::fprintf(stderr, "consoled: stopping on signal %d\n", sig);
    cs_daemon_destroy(d);
    return 0;
}
