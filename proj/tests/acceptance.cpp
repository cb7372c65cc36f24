// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "auth/authenticator.hpp"
#include "farm_rig.hpp"
#include "relay/frame.hpp"
#include "test_support.hpp"

using namespace consrv;
using namespace std::chrono_literals;
using consrv::testing::FarmRig;
using consrv::testing::Gen;
using consrv::testing::key_for;
using consrv::testing::TempDir;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Check {
    Outcome out;
    void require(bool ok, const std::string& why) {
        if (!ok && out.pass) {
            out.pass = false;
            out.detail = why;
        }
    }
    bool failed() const { return !out.pass; }
};

std::string host_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "lxb%04d", i);
    return buf;
}

// Collects reconstructed raw bytes per host without keeping every line.
class ByteSink : public daemon::LogSink {
public:
    void write(const daemon::LogLine& line, const std::string&) override {
        if (line.port_label == "alarm") return;
        auto& b = bytes_[line.host];
        const auto raw = daemon::reconstruct(line);
        b.insert(b.end(), raw.begin(), raw.end());
    }
    const Bytes& of(const std::string& host) { return bytes_[host]; }

private:
    std::map<std::string, Bytes> bytes_;
};

// 1: 24 nodes, >= 1 KB/s/node random traffic for a simulated hour.
Outcome capacity() {
    Check c;
    const auto wall0 = std::chrono::steady_clock::now();
    sim::HarnessOptions ho;
    ho.traffic_rate = 1100;
    ho.seed = 24;
    FarmRig rig(sim::Topology::farm(24), FarmRig::quiet_config(), ho);
    auto sink = std::make_shared<ByteSink>();
    rig.console().add_sink(sink);
    std::map<std::string, Bytes> emitted;
    for (const auto& h : rig.harness->hosts()) {
        rig.harness->node(h).set_output_observer([&emitted, h](std::span<const std::uint8_t> b) {
            emitted[h].insert(emitted[h].end(), b.begin(), b.end());
        });
    }
    rig.run_for(1h);
    // stop the traffic so the last partial line goes out on the idle flush
    for (const auto& h : rig.harness->hosts()) rig.harness->node(h).power_off();
    rig.run_for(3s);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    std::uint64_t min_bytes = UINT64_MAX;
    for (const auto& h : rig.harness->hosts()) {
        const auto& got = sink->of(h);
        const auto& sent = emitted[h];
        min_bytes = std::min<std::uint64_t>(min_bytes, sent.size());
        if (got != sent) {
            const auto diff = std::mismatch(sent.begin(), sent.end(), got.begin(), got.end()).first - sent.begin();
            c.require(false, "log of " + h + " diverges at byte " + std::to_string(diff) + " of " +
                                 std::to_string(sent.size()));
        }
    }
    c.require(min_bytes >= 1024 * 3600, "traffic below 1 KB/s on some node: " + std::to_string(min_bytes));
    c.require(wall < 60.0, "wall time " + std::to_string(wall) + " s");
    if (!c.failed()) {
        std::ostringstream d;
        d.precision(1);
        d << std::fixed << "24 ports, min " << min_bytes / 3600.0 / 1024.0 << " KB/s/node, wall " << wall << " s";
        c.out.detail = d.str();
    }
    return c.out;
}

// 2: 44-host bundle, detection over all ports matches the topology.
Outcome rack_scale() {
    Check c;
    const auto topo = sim::Topology::farm(44);
    // registry covering two servers; consrv01 gets the 44 rack hosts
    std::string ic = topo.interconnections("consrv01", "chain0");
    for (int i = 0; i < 10; ++i) ic += "console other" + std::to_string(i) + " consrv02 " + std::to_string(i) + "\n";
    const auto full = testing::registry_for(ic);
    TempDir dir;
    full.bundle_for_server("consrv01").write_to(dir.path());
    const auto reg = registry::Registry::load(dir.path());
    c.require(reg.console_hosts("consrv01").size() == 44, "bundle does not hold 44 hosts");
    c.require(!reg.knows_server("consrv02"), "bundle leaked another server's records");

    EventClock clock;
    auto harness = sim::Harness::spawn(topo, clock);
    daemon::Daemon d(FarmRig::quiet_config(), clock, reg);
    d.attach_harness(*harness);
    d.start();
    clock.advance(20s);
    for (const auto& h : harness->hosts()) c.require(harness->node(h).state() == sim::NodeState::Up, h + " not up");
    const auto report = d.console().run_detection("admin");
    std::map<int, std::string> oracle;
    for (const auto& e : topo.entries()) oracle[e.port] = e.host;
    std::size_t matched = 0;
    for (const auto& e : report.entries) matched += oracle.count(e.port) && e.host == oracle[e.port];
    c.require(report.entries.size() == 44, "report has " + std::to_string(report.entries.size()) + " ports");
    c.require(matched == 44, "matched " + std::to_string(matched) + "/44");
    if (!c.failed()) c.out.detail = "44/44 ports match";
    return c.out;
}

// 3: 50-node end-to-end scenario.
Outcome end_to_end() {
    Check c;
    TempDir dir;
    EventClock clock;
    const auto topo = sim::Topology::farm(50);
    auto harness = sim::Harness::spawn(topo, clock);
    testing::registry_for(harness->interconnections()).save(dir / "registry");
    const auto reg = registry::Registry::load(dir / "registry");

    daemon::DaemonConfig cfg; // watchdog on, default policy
    cfg.audit_file = dir / "audit.log";
    daemon::Daemon d(cfg, clock, reg);
    d.attach_harness(*harness);
    d.start();
    clock.advance(30s);

    const auto report = d.console().run_detection("admin");
    const auto merge = d.registry().get()->merge_detection(report);
    c.require(merge.conflicts.empty() && merge.added.empty(), "detection disagrees with the registry");

    auto s = d.console().attach("alice", "lxb0010", daemon::SessionMode::ReadWrite);
    s->take_output();
    s->send("hostname\r");
    clock.advance(1s);
    const auto echo = s->take_output();
    c.require(std::string(echo.begin(), echo.end()) == "hostname\r", "attached session did not see its echo");
    s->detach();

    // an operator reset alongside the watchdog's own
    const auto manual = d.resets().submit({"alice", "lxb0020", "maintenance", clock.now()});
    c.require(manual.outcome == reset::ResetOutcome::Ok, "operator reset failed");

    const std::vector<std::string> hung = {"lxb0003", "lxb0011", "lxb0027", "lxb0038", "lxb0049"};
    for (std::size_t i = 0; i < hung.size(); ++i) {
        auto& n = harness->node(hung[i]);
        if (i % 2) {
            n.inject_panic();
        } else {
            n.inject_hang();
        }
        clock.advance(17s);
    }
    clock.advance(40min);

    const int k = cfg.watchdog.max_restarts;
    for (const auto& h : hung) {
        const auto ev = d.audit().query({.host = h, .principal = std::string(watchdog::kWatchdogPrincipal)});
        c.require(!ev.empty() && static_cast<int>(ev.size()) <= k,
                  h + " reset " + std::to_string(ev.size()) + " times by the watchdog");
        c.require(harness->node(h).state() == sim::NodeState::Up, h + " did not recover");
    }
    const auto all = d.audit().query({});
    std::multiset<relay::RelayAddress> audited, pulsed;
    for (const auto& e : all) {
        if (e.kind == reset::AuditKind::Reset && e.outcome == reset::ResetOutcome::Ok) {
            c.require(e.address.has_value(), "Ok audit event without an address");
            if (e.address) audited.insert(*e.address);
            c.require(std::find(hung.begin(), hung.end(), e.host) != hung.end() || e.host == "lxb0020",
                      "reset of a healthy host " + e.host);
        }
    }
    for (const auto& p : harness->emulator().pulses()) pulsed.insert(p.address);
    c.require(pulsed.size() == audited.size(), "pulses " + std::to_string(pulsed.size()) + " != Ok audit events " +
                                                   std::to_string(audited.size()));
    c.require(pulsed == audited, "unexplained pulses");
    // the audit file agrees with the in-memory trail
    std::size_t file_events = 0;
    for (const auto& line : split_char(testing::slurp(dir / "audit.log"), '\n')) file_events += reset::parse_audit(line).has_value();
    c.require(file_events == all.size(), "audit file and trail differ");
    if (!c.failed()) {
        c.out.detail = "5 hangs recovered, " + std::to_string(pulsed.size()) + " pulses == " +
                       std::to_string(audited.size()) + " Ok audit events";
    }
    return c.out;
}

std::array<std::uint8_t, 6> oracle_frame(int flat, std::uint8_t cmd, std::uint8_t tenths) {
    const auto addr = static_cast<std::uint8_t>(((flat / 8) << 3) | (flat % 8));
    return {0x02, addr, cmd, tenths, static_cast<std::uint8_t>(addr ^ cmd ^ tenths), 0x03};
}

// 4: every one of 64 addresses reboots exactly its node; codec exhaustive.
Outcome relay_exhaustive() {
    Check c;
    for (int a = 0; a < 64 && !c.failed(); ++a) {
        for (std::uint8_t cmd : {'P', 'N', 'F'}) {
            for (int t = 0; t < 256; ++t) {
                const auto tenths = static_cast<std::uint8_t>(cmd == 'P' ? t : 0);
                const auto f = relay::RelayFrame::make(relay::RelayAddress::from_flat(a), *relay::command_from_byte(cmd),
                                                       static_cast<std::uint8_t>(t));
                const auto wire = relay::encode(f);
                if (wire != oracle_frame(a, cmd, tenths) || !(relay::decode(wire) == f)) {
                    c.require(false, "codec mismatch at address " + std::to_string(a));
                    break;
                }
            }
        }
    }
    FarmRig rig(sim::Topology::farm(64));
    rig.run_for(20s);
    c.require(rig.harness->emulator().boxes() == 8, "chain is not 8 boxes");
    for (int a = 0; a < 64 && !c.failed(); ++a) {
        const auto& target = rig.harness->topology().entries()[static_cast<std::size_t>(a)];
        std::map<std::string, std::uint64_t> before;
        for (const auto& h : rig.harness->hosts()) before[h] = rig.harness->node(h).boots();
        const auto ev = rig.daemon->resets().submit({"alice", target.host, "sweep", rig.clock.now()});
        c.require(ev.outcome == reset::ResetOutcome::Ok, "reset of " + target.host + " failed");
        c.require(ev.address && ev.address->flat() == a, "wrong address for " + target.host);
        rig.run_for(1500ms);
        for (const auto& e : rig.harness->topology().entries()) {
            const auto want = before[e.host] + (e.host == target.host ? 1 : 0);
            c.require(rig.harness->node(e.host).boots() == want, "address " + std::to_string(a) + " touched " + e.host);
        }
    }
    c.require(rig.harness->emulator().pulse_count() == 64, "pulse count is not 64");
    if (!c.failed()) c.out.detail = "64/64 addresses, 49152 frames round-trip";
    return c.out;
}

// 5: the default pulse holds the contact for exactly 1.0 s of simulated time.
Outcome pulse_width() {
    Check c;
    FarmRig rig(sim::Topology::farm(16));
    rig.run_for(20s);
    for (const auto& h : {"lxb0001", "lxb0009", "lxb0016"}) {
        const auto ev = rig.daemon->resets().submit({"alice", h, "width check", rig.clock.now()});
        c.require(ev.outcome == reset::ResetOutcome::Ok, std::string("reset failed for ") + h);
    }
    rig.run_for(5s);
    const auto pulses = rig.harness->emulator().pulses();
    c.require(pulses.size() == 3, "expected 3 pulses");
    for (const auto& p : pulses) {
        c.require(p.opened_at.has_value(), "contact never reopened");
        if (p.opened_at) c.require(*p.opened_at - p.closed_at == 1s, "contact closed for a width other than 1.0 s");
        c.require(p.duration_tenths == 10, "frame width is not 10 tenths");
    }
    if (!c.failed()) c.out.detail = "3 pulses, each exactly 1.000 s";
    return c.out;
}

// 6: after a reset, the log holds the transcript from its first line, exactly.
Outcome boot_capture() {
    Check c;
    sim::Topology topo;
    for (int i = 1; i <= 4; ++i) {
        sim::TopologyEntry e;
        e.host = host_name(i);
        e.port = i - 1;
        e.reset = relay::RelayAddress::from_flat(i - 1);
        if (i == 2) {
            e.transcript = sim::parse_transcript("0 LILO 22.8 boot: linux-2.4\n"
                                                 "400 Loading linux-2.4........\n"
                                                 "900 Uncompressing Linux... Ok, booting the kernel.\n"
                                                 "1200 INIT: version 2.84 booting\n"
                                                 "3000 lxb0002 login: \n");
        }
        topo.add(e);
    }
    FarmRig rig(topo);
    rig.run_for(20s);
    for (const auto& h : {"lxb0001", "lxb0002"}) {
        const auto reset_at = rig.clock.now();
        const auto ev = rig.daemon->resets().submit({"alice", h, "capture", reset_at});
        c.require(ev.outcome == reset::ResetOutcome::Ok, std::string("reset failed for ") + h);
        rig.run_for(30s);
        Bytes after;
        for (const auto& l : rig.log->entries()) {
            if (l.host != h || l.timestamp < reset_at) continue;
            const auto b = daemon::reconstruct(l);
            after.insert(after.end(), b.begin(), b.end());
        }
        const auto expect = sim::transcript_bytes(rig.harness->node(h).transcript());
        c.require(after == expect, std::string("post-reset log differs from the transcript for ") + h);
    }
    if (!c.failed()) c.out.detail = "2 resets, transcripts byte-exact";
    return c.out;
}

// 7: randomized authentication and session instrumentation.
Outcome security() {
    Check c;
    EventClock clock;
    const auto reg = testing::registry_for("console lxb0001 consrv01 0\n");
    auth::Authenticator a("consrv01", clock);
    auth::Authenticator other("consrv02", clock);
    Gen g(7);
    int false_accepts = 0, honest = 0, honest_ok = 0;
    const std::vector<std::string> known = {"admin", "alice", "bob", "watchdog", "mallory"};
    std::vector<std::pair<auth::Challenge, auth::Credential>> used;
    for (int i = 0; i < 1000; ++i) {
        const int kind = g.range(0, 6);
        const auto& p = g.pick(known);
        auto ch = a.issue_challenge();
        auth::Credential cred;
        auth::Challenge presented = ch;
        switch (kind) {
        case 0: { // wrong key
            std::string wrong = p;
            while (wrong == p) wrong = g.pick(known);
            cred = auth::sign_challenge(key_for(wrong), p, ch);
            break;
        }
        case 1: // unknown principal with a key of its own
            cred = auth::sign_challenge(key_for("eve" + g.name(3)), "eve", ch);
            break;
        case 2: // replay of an earlier successful exchange
            if (used.empty()) {
                cred = auth::sign_challenge(key_for("eve"), "eve", ch);
            } else {
                std::tie(presented, cred) = g.pick(used);
            }
            break;
        case 3: // stale challenge
            cred = auth::sign_challenge(key_for(p), p, ch);
            clock.advance(auth::Authenticator::kChallengeLifetime + Duration{g.range(1, 5000)});
            break;
        case 4: { // challenge minted by another server
            presented = other.issue_challenge();
            cred = auth::sign_challenge(key_for(p), p, presented);
            break;
        }
        case 5: // flipped signature bit
            cred = auth::sign_challenge(key_for(p), p, ch);
            cred.signature[static_cast<std::size_t>(g.range(0, 63))] ^= static_cast<std::uint8_t>(1 << g.range(0, 7));
            break;
        default:
            cred = auth::sign_challenge(key_for(p), p, ch);
            break;
        }
        bool accepted = false;
        std::string who;
        try {
            who = a.authenticate(presented, cred, reg);
            accepted = true;
        } catch (const Error&) {
        }
        if (kind == 6) {
            ++honest;
            honest_ok += accepted && who == p;
            if (accepted) used.emplace_back(presented, cred);
        } else if (accepted) {
            ++false_accepts;
        }
        clock.advance(Duration{g.range(0, 200)});
    }
    c.require(false_accepts == 0, std::to_string(false_accepts) + " false accepts");
    c.require(honest > 0 && honest_ok == honest,
              std::to_string(honest_ok) + "/" + std::to_string(honest) + " authorized flows succeeded");

    // sessions: random attach attempts against a live farm
    sim::HarnessOptions ho;
    ho.traffic_rate = 300;
    FarmRig rig(sim::Topology::farm(4), FarmRig::quiet_config(), ho);
    rig.run_for(10s);
    const std::vector<std::string> principals = {"admin", "alice", "bob", "mallory", "watchdog", "eve"};
    std::vector<daemon::SessionPtr> live;
    int granted = 0;
    for (int i = 0; i < 300; ++i) {
        const auto mode = g.chance(0.5) ? daemon::SessionMode::ReadOnly : daemon::SessionMode::ReadWrite;
        try {
            live.push_back(rig.console().attach(g.pick(principals), host_name(g.range(1, 4)), mode));
            ++granted;
        } catch (const Error&) {
        }
        if (!live.empty() && g.chance(0.3)) {
            auto& s = live[static_cast<std::size_t>(g.range(0, static_cast<int>(live.size()) - 1))];
            s->take_output();
            if (g.chance(0.5)) s->detach();
        }
        rig.run_for(Duration{g.range(10, 400)});
    }
    const auto decisions = rig.console().decisions();
    const auto records = rig.console().sessions(false);
    c.require(records.size() == static_cast<std::size_t>(granted), "session count differs from granted attaches");
    std::uint64_t delivered = 0;
    for (const auto& r : records) {
        const auto it = std::find_if(decisions.begin(), decisions.end(),
                                     [&](const daemon::AuthorizationDecision& d) { return d.id == r.decision_id; });
        const bool ok = it != decisions.end() && it->allowed && it->principal == r.principal && it->host == r.host;
        c.require(ok || r.delivered == 0, "session " + std::to_string(r.session_id) + " received bytes without a grant");
        c.require(ok, "session " + std::to_string(r.session_id) + " has no positive decision");
        delivered += r.delivered;
    }
    c.require(delivered > 0, "no console bytes were delivered at all");
    if (!c.failed()) {
        c.out.detail = "1000 attempts, 0 false accepts, " + std::to_string(honest) + "/" + std::to_string(honest) +
                       " honest ok, " + std::to_string(records.size()) + " sessions all authorized";
    }
    return c.out;
}

// 8: watchdog policy on the full stack for 100 random hang schedules.
Outcome watchdog_policy() {
    Check c;
    std::size_t total_resets = 0, permanent_hosts = 0;
    for (std::uint64_t seed = 1; seed <= 100 && !c.failed(); ++seed) {
        Gen g(seed);
        sim::Topology topo;
        for (int i = 1; i <= 6; ++i) {
            sim::TopologyEntry e;
            e.host = host_name(i);
            e.port = i - 1;
            e.reset = relay::RelayAddress::from_flat(i - 1);
            if (g.chance(0.5)) e.heartbeat = Duration{g.range(10, 100) * 1000};
            topo.add(e);
        }
        daemon::DaemonConfig cfg;
        cfg.server.pump_period = 250ms;
        sim::HarnessOptions ho;
        ho.poll_period = 250ms;
        ho.seed = seed;
        FarmRig rig(topo, cfg, ho);
        const auto t0 = rig.clock.now();
        std::set<std::string> permanent;
        for (const auto& h : rig.harness->hosts()) {
            auto& node = rig.harness->node(h);
            const int kind = g.range(0, 2);
            if (kind == 1) {
                for (int n = g.range(1, 6); n > 0; --n) {
                    const bool panic = g.chance(0.3);
                    rig.clock.schedule_at(t0 + Duration{g.range(30, 7200) * 1000}, [&node, panic] {
                        if (panic) {
                            node.inject_panic();
                        } else {
                            node.inject_hang();
                        }
                    });
                }
            } else if (kind == 2) {
                permanent.insert(h);
                const auto after = Duration{g.range(0, 40) * 1000};
                rig.clock.schedule_at(t0 + Duration{g.range(30, 1800) * 1000}, [&node, after] {
                    node.set_hang_after_boot(after);
                    node.inject_hang();
                });
            }
        }
        permanent_hosts += permanent.size();
        rig.run_for(9000s);

        const auto& policy = cfg.watchdog;
        std::map<std::string, std::vector<TimePoint>> resets;
        for (const auto& a : rig.daemon->watchdog().actions()) {
            if (a.kind == watchdog::ActionKind::Reset) resets[a.host].push_back(a.at);
        }
        // the pulses seen by the relay chain tell the same story
        std::map<std::string, std::size_t> pulses;
        for (const auto& p : rig.harness->emulator().pulses()) ++pulses[host_name(p.address.flat() + 1)];
        for (const auto& h : rig.harness->hosts()) {
            const auto& rs = resets[h];
            total_resets += rs.size();
            c.require(pulses[h] == rs.size(), "seed " + std::to_string(seed) + ": pulses differ from resets on " + h);
            for (const auto& start : rs) {
                const auto in_window = std::count_if(rs.begin(), rs.end(),
                                                     [&](TimePoint t) { return t >= start && t < start + policy.window; });
                c.require(in_window <= policy.max_restarts,
                          "seed " + std::to_string(seed) + ": " + std::to_string(in_window) + " resets in one window on " + h);
            }
        }
        for (const auto& st : rig.daemon->watchdog().status()) {
            if (permanent.count(st.host)) {
                c.require(st.phase == watchdog::Phase::Alarmed,
                          "seed " + std::to_string(seed) + ": permanently hung " + st.host + " ended " +
                              std::string(watchdog::phase_name(st.phase)));
            }
        }
    }
    if (!c.failed()) {
        c.out.detail = "100 seeds, " + std::to_string(total_resets) + " resets, " + std::to_string(permanent_hosts) +
                       " permanent hangs all alarmed";
    }
    return c.out;
}

// 9: three permuted mappings of fifty give exactly three conflicts.
Outcome detection_consistency() {
    Check c;
    const auto truth_topo = sim::Topology::farm(50);
    const auto truth = testing::registry_for(truth_topo.interconnections("consrv01", "chain0"));

    auto check = [&](const registry::DetectionReport& report, const std::set<int>& moved, const std::string& label) {
        const auto m = truth.merge_detection(report);
        std::set<int> ports;
        for (const auto& cf : m.conflicts) ports.insert(cf.port);
        c.require(m.conflicts.size() == 3 && ports == moved, label + ": conflicts do not match the permuted ports");
        c.require(m.registry == truth, label + ": merge rewrote the registry");
        const auto again = m.registry.merge_detection(report);
        c.require(again.registry == m.registry && again.conflicts == m.conflicts && again.added.empty(),
                  label + ": merge is not idempotent");
    };

    // fixture reports, through the report file format
    for (std::uint64_t seed = 1; seed <= 100 && !c.failed(); ++seed) {
        Gen g(seed);
        std::set<int> chosen;
        while (chosen.size() < 3) chosen.insert(g.range(0, 49));
        const std::vector<int> p(chosen.begin(), chosen.end());
        std::vector<std::string> at;
        for (int i = 0; i < 50; ++i) at.push_back(host_name(i + 1));
        std::swap(at[static_cast<std::size_t>(p[0])], at[static_cast<std::size_t>(p[1])]);
        std::swap(at[static_cast<std::size_t>(p[1])], at[static_cast<std::size_t>(p[2])]);
        registry::DetectionReport r{"consrv01", {}, default_epoch()};
        for (int i = 0; i < 50; ++i) r.entries.push_back({i, at[static_cast<std::size_t>(i)]});
        check(registry::parse_report(registry::format_report(r)), chosen, "seed " + std::to_string(seed));
    }

    // a farm whose cables were moved, detected live
    sim::Topology moved;
    for (auto e : truth_topo.entries()) {
        if (e.port == 4) e.port = 17;
        else if (e.port == 17) e.port = 33;
        else if (e.port == 33) e.port = 4;
        moved.add(e);
    }
    EventClock clock;
    auto harness = sim::Harness::spawn(moved, clock);
    daemon::Daemon d(FarmRig::quiet_config(), clock, truth);
    d.attach_harness(*harness);
    d.start();
    clock.advance(20s);
    check(d.console().run_detection("admin"), {4, 17, 33}, "live farm");
    if (!c.failed()) c.out.detail = "101 reports, 3 conflicts each, registry untouched, idempotent";
    return c.out;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"capacity", capacity},
        {"rack-scale", rack_scale},
        {"end-to-end", end_to_end},
        {"relay-exhaustive", relay_exhaustive},
        {"pulse-width", pulse_width},
        {"boot-capture", boot_capture},
        {"security", security},
        {"watchdog-policy", watchdog_policy},
        {"detection-consistency", detection_consistency},
    };
    int failures = 0;
    int n = 0;
    for (const auto& [name, fn] : criteria) {
        ++n;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("%s %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
