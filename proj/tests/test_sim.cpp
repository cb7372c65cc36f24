// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "sim/harness.hpp"
#include "sim/sim_node.hpp"
#include "sim/topology.hpp"
#include "test_support.hpp"

using namespace consrv;
using namespace consrv::sim;
using consrv::testing::Gen;

namespace {


struct Drain {
    Harness& h;
    Bytes read(int port) {
        Bytes out;
        auto ep = h.console_endpoints().at(port);
        while (auto got = ep->read_available(4096, Duration::zero())) out.insert(out.end(), got->begin(), got->end());
        return out;
    }
};

std::string run_farm(std::uint64_t seed, const std::vector<std::pair<Duration, std::string>>& hangs) {
    EventClock clock;
    HarnessOptions ho;
    ho.seed = seed;
    ho.traffic_rate = 500;
    auto h = Harness::spawn(Topology::farm(5), clock, ho);
    std::string timeline;
    for (const auto& host : h->hosts()) {
        h->node(host).set_output_observer([&, host](std::span<const std::uint8_t> b) {
            timeline += format_rfc3339(clock.now()) + " " + host + " " + escape_payload(b) + "\n";
        });
    }
    for (const auto& [t, host] : hangs) clock.schedule_at(clock.now() + t, [&h, host] { h->node(host).inject_hang(); });
    clock.advance(120s);
    return timeline;
}

} // namespace

TEST(Topology, GrammarAndTranscripts) {
    consrv::testing::TempDir dir;
    consrv::testing::spit(dir / "boot.txt", "0 LILO boot:\n250 Loading linux\n1000 ready\n");
    consrv::testing::spit(dir / "farm.topo", "# farm\n"
                                             "node lxb0001 console 0 reset 0 0 heartbeat 30\n"
                                             "node lxb0002 console 1 transcript boot.txt\n"
                                             "node lxb0003 console 2 reset 7 7\n");
    const auto t = Topology::load(dir / "farm.topo");
    ASSERT_EQ(t.entries().size(), 3u);
    EXPECT_EQ(t.find("lxb0001")->heartbeat, 30s);
    EXPECT_EQ(t.find("lxb0003")->reset->flat(), 63);
    EXPECT_FALSE(t.find("lxb0002")->reset);
    const auto& tr = t.find("lxb0002")->transcript;
    ASSERT_EQ(tr.size(), 3u);
    EXPECT_EQ(tr[1].delay, 250ms);
    EXPECT_EQ(tr[1].text, "Loading linux");
    EXPECT_EQ(to_string(transcript_bytes(tr)), "LILO boot:\r\nLoading linux\r\nready\r\n");
    EXPECT_EQ(t.interconnections("consrv01", "chain0"), "console lxb0001 consrv01 0\n"
                                                         "reset lxb0001 consrv01 chain0 0 0\n"
                                                         "console lxb0002 consrv01 1\n"
                                                         "console lxb0003 consrv01 2\n"
                                                         "reset lxb0003 consrv01 chain0 7 7\n");
}

TEST(Topology, Errors) {
    const char* bad[] = {
        "node a console 0 reset 0 0\nnode b console 1 reset 0 0\n", // duplicate relay
        "node a console 0\nnode b console 0\n",                     // duplicate port
        "node a console 0\nnode a console 1\n",                     // duplicate host
        "node a console x\n",
        "node a console 0 reset 8 0\n",
        "node a console 0 heartbeat 0\n",
        "node a console 0 transcript /nonexistent/file\n",
        "host a console 0\n",
        "node a console 0 colour blue\n",
    };
    for (const auto* text : bad) EXPECT_THROW(Topology::parse(text), TopologyError) << text;
    try {
        Topology::parse("node a console 0\n\nnode b console 0\n");
        FAIL();
    } catch (const TopologyError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_transcript("abc hello\n"), TopologyError);
    EXPECT_THROW(parse_transcript("\n"), TopologyError);
    EXPECT_THROW(Topology::farm(65), TopologyError);
    EXPECT_EQ(Topology::farm(200, "n", false).entries().size(), 200u);
}

TEST(Harness, ConstructionMatchesTopology) {
    EventClock clock;
    auto h = Harness::spawn(Topology::farm(50), clock);
    EXPECT_EQ(h->console_endpoints().size(), 50u);
    EXPECT_EQ(h->hosts().size(), 50u);
    EXPECT_TRUE(h->chain_endpoint());
    for (const auto& host : h->hosts()) EXPECT_EQ(h->node(host).state(), NodeState::Booting);
    clock.advance(30s);
    for (const auto& host : h->hosts()) EXPECT_EQ(h->node(host).state(), NodeState::Up);
    EXPECT_THROW(h->node("nope"), UnknownHost);
}

TEST(Harness, SameSeedSameTimeline) {
    const std::vector<std::pair<Duration, std::string>> hangs = {{40s, "lxb0002"}, {70s, "lxb0004"}};
    const auto a = run_farm(7, hangs);
    const auto b = run_farm(7, hangs);
    const auto c = run_farm(8, hangs);
    EXPECT_GT(a.size(), 10000u);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(SimNode, BootIsSilentThenTranscriptThenEnqAndEcho) {
    EventClock clock;
    auto h = Harness::spawn(Topology::farm(1), clock);
    Drain d{*h};
    auto& n = h->node("lxb0001");
    const auto expect = transcript_bytes(n.transcript());
    clock.advance(1900ms);
    EXPECT_TRUE(d.read(0).empty()); // BIOS delay: nothing yet
    // a probe while booting is ignored
    h->console_endpoints().at(0)->write("\x05");
    clock.advance(30s);
    EXPECT_EQ(d.read(0), expect);
    EXPECT_EQ(n.state(), NodeState::Up);
    h->console_endpoints().at(0)->write("ab\x05" "c");
    clock.advance(100ms);
    EXPECT_EQ(to_string(d.read(0)), "ab\x06ID:lxb0001\r\nc");
}

TEST(SimNode, ResetMidTranscriptRestartsFromTheTop) {
    EventClock clock;
    auto h = Harness::spawn(Topology::farm(1), clock);
    Drain d{*h};
    auto& n = h->node("lxb0001");
    clock.advance(3500ms);
    const auto partial = d.read(0);
    EXPECT_FALSE(partial.empty());
    n.reset_pulse(1s);
    clock.advance(2900ms); // 1 s held + 2 s BIOS
    EXPECT_TRUE(d.read(0).empty());
    clock.advance(30s);
    EXPECT_EQ(d.read(0), transcript_bytes(n.transcript()));
    EXPECT_EQ(n.boots(), 2u);
}

TEST(SimNode, HangAndPanicGoQuiet) {
    EventClock clock;
    auto topo = Topology::farm(2);
    HarnessOptions ho;
    ho.traffic_rate = 1000;
    auto h = Harness::spawn(topo, clock, ho);
    Drain d{*h};
    clock.advance(30s);
    d.read(0);
    d.read(1);
    h->node("lxb0001").inject_hang();
    h->node("lxb0002").inject_panic();
    EXPECT_EQ(to_string(d.read(1)), std::string(kPanicLine) + "\r\n");
    const auto before = h->node("lxb0001").bytes_emitted();
    for (int port : {0, 1}) h->console_endpoints().at(port)->write("\x05hello\r");
    clock.advance(10min);
    EXPECT_TRUE(d.read(0).empty());
    EXPECT_TRUE(d.read(1).empty());
    EXPECT_EQ(h->node("lxb0001").bytes_emitted(), before);
    EXPECT_EQ(h->node("lxb0001").state(), NodeState::Hung);
    EXPECT_EQ(h->node("lxb0002").state(), NodeState::Paniced);
    // a reset brings a hung node back
    h->node("lxb0001").reset_pulse(1s);
    clock.advance(30s);
    EXPECT_EQ(h->node("lxb0001").state(), NodeState::Up);
}

TEST(SimNode, HeartbeatAndTrafficRate) {
    EventClock clock;
    Topology topo;
    topo.add({"hb", 0, std::nullopt, 10s, {}});
    topo.add({"noisy", 1, std::nullopt, std::nullopt, {}});
    HarnessOptions ho;
    ho.traffic_rate = 2000;
    auto h = Harness::spawn(topo, clock, ho);
    clock.advance(30s);
    const auto e0 = h->node("noisy").bytes_emitted();
    Drain d{*h};
    d.read(0);
    clock.advance(100s);
    const auto hb = to_string(d.read(0));
    EXPECT_NE(hb.find("heartbeat 3\r\n"), std::string::npos);
    EXPECT_NE(hb.find("heartbeat 12\r\n"), std::string::npos);
    const auto rate = static_cast<double>(h->node("noisy").bytes_emitted() - e0) / 100.0;
    EXPECT_NEAR(rate, 2000.0, 200.0);
}

TEST(Harness, PulsingOneAddressRebootsOnlyThatNode) {
    EventClock clock;
    auto h = Harness::spawn(Topology::farm(64), clock);
    clock.advance(30s);
    for (int a = 0; a < 64; ++a) {
        std::map<std::string, std::uint64_t> before;
        for (const auto& host : h->hosts()) before[host] = h->node(host).boots();
        const auto frame = relay::encode(relay::RelayFrame::make(relay::RelayAddress::from_flat(a), relay::RelayCommand::Pulse, 10));
        h->chain_endpoint()->write(frame);
        clock.advance(200ms);
        for (const auto& e : h->topology().entries()) {
            ASSERT_EQ(h->node(e.host).boots(), before[e.host] + (e.reset->flat() == a ? 1 : 0)) << a << " " << e.host;
        }
    }
}
