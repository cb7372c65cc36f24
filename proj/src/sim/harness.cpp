// SPDX-License-Identifier: Apache-2.0
#include "sim/harness.hpp"

#include "common/error.hpp"

namespace consrv::sim {

namespace {

// FNV-1a, so per-node seeds do not depend on std::hash.
std::uint64_t mix(std::uint64_t seed, std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

Harness::Harness(Topology topology, Clock& clock, HarnessOptions options)
    : topology_(std::move(topology)), clock_(clock), options_(std::move(options)) {}

std::unique_ptr<Harness> Harness::spawn(const Topology& topology, Clock& clock, HarnessOptions options) {
    std::unique_ptr<Harness> h(new Harness(topology, clock, std::move(options)));
    h->emulator_ = std::make_unique<relay::ChainEmulator>(8, clock);
    auto [server_chain, node_chain] = transport::create_linked_pair(clock);
    h->chain_server_end_ = server_chain;
    h->chain_node_end_ = node_chain;
    h->emulator_->attach(node_chain);

    for (const auto& e : h->topology_.entries()) {
        auto [server_end, node_end] = transport::create_linked_pair(clock);
        NodeOptions no;
        no.bios_delay = h->options_.bios_delay;
        no.heartbeat = e.heartbeat;
        no.transcript = e.transcript;
        no.traffic_rate = h->options_.traffic_rate;
        no.traffic_period = h->options_.traffic_period;
        no.seed = mix(h->options_.seed, e.host);
        auto node = std::make_unique<SimNode>(e.host, node_end, clock, std::move(no));
        if (e.reset) {
            SimNode* raw = node.get();
            h->emulator_->set_sink(*e.reset, [raw](relay::RelayAddress, Duration width) { raw->reset_pulse(width); });
        }
        h->server_ends_[e.port] = server_end;
        h->nodes_.emplace(e.host, std::move(node));
    }
    h->ticker_ = std::make_unique<Ticker>(clock, h->options_.poll_period, [raw = h.get()] { raw->poll(); });
    if (h->options_.power_on) {
        for (auto& [name, node] : h->nodes_) node->power_on();
    }
    return h;
}

Harness::~Harness() { ticker_.reset(); }

std::vector<std::string> Harness::hosts() const {
    std::vector<std::string> out;
    for (const auto& e : topology_.entries()) out.push_back(e.host);
    return out;
}

SimNode& Harness::node(const std::string& host) {
    auto it = nodes_.find(host);
    if (it == nodes_.end()) throw UnknownHost(host);
    return *it->second;
}

std::string Harness::interconnections() const {
    return topology_.interconnections(options_.server_id, options_.chain_device);
}

void Harness::unplug_chain() { emulator_->detach(); }

void Harness::plug_chain() {
    // frames sent while unplugged were lost on the wire
    while (chain_node_end_->read_available(4096, Duration::zero())) {
    }
    emulator_->attach(chain_node_end_);
}

void Harness::poll() {
    emulator_->poll();
    for (auto& [name, node] : nodes_) node->poll();
}

} // namespace consrv::sim
