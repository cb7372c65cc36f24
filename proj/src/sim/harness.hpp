// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "relay/emulator.hpp"
#include "sim/sim_node.hpp"
#include "sim/topology.hpp"

namespace consrv::sim {

struct HarnessOptions {
    std::string server_id = "consrv01";
    std::string chain_device = "chain0";
    std::uint64_t seed = 1;
    Duration bios_delay = 2s;
    Duration poll_period = 20ms;
    bool power_on = true;
    double traffic_rate = 0;
    Duration traffic_period = 100ms;
};

// A simulated farm wired up the way the real hardware is: one console line
// per node, one relay chain whose contacts press the nodes' reset lines.
class Harness {
public:
    static std::unique_ptr<Harness> spawn(const Topology& topology, Clock& clock, HarnessOptions options = {});
    ~Harness();

    Harness(const Harness&) = delete;
    Harness& operator=(const Harness&) = delete;

    const Topology& topology() const { return topology_; }
    const HarnessOptions& options() const { return options_; }
    std::vector<std::string> hosts() const;
    SimNode& node(const std::string& host);

    // Server-side ends, keyed by port index.
    const std::map<int, transport::EndpointPtr>& console_endpoints() const { return server_ends_; }
    transport::EndpointPtr chain_endpoint() const { return chain_server_end_; }
    relay::ChainEmulator& emulator() { return *emulator_; }

    // Registry interconnections for this farm.
    std::string interconnections() const;

    // The chain stops answering, as if its cable were pulled.
    void unplug_chain();
    void plug_chain();

    // Node input handling and relay chain processing; runs on a ticker.
    void poll();

private:
    Harness(Topology topology, Clock& clock, HarnessOptions options);

    Topology topology_;
    Clock& clock_;
    HarnessOptions options_;
    std::map<std::string, std::unique_ptr<SimNode>> nodes_;
    std::map<int, transport::EndpointPtr> server_ends_;
    transport::EndpointPtr chain_server_end_;
    transport::EndpointPtr chain_node_end_;
    std::unique_ptr<relay::ChainEmulator> emulator_;
    std::unique_ptr<Ticker> ticker_;
};

} // namespace consrv::sim
