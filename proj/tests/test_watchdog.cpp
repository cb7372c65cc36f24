// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "farm_rig.hpp"
#include "test_support.hpp"
#include "watchdog/watchdog.hpp"

using namespace consrv;
using namespace consrv::watchdog;
using consrv::testing::FarmRig;
using consrv::testing::Gen;

namespace {

TimePoint at(int seconds) { return default_epoch() + std::chrono::seconds(seconds); }
int secs(TimePoint t) { return static_cast<int>(std::chrono::duration_cast<std::chrono::seconds>(t - default_epoch()).count()); }

// Scriptable stand-ins for nodes: silent, chatty or hung, answering probes
// only while alive. A reset makes the node boot and speak after boot_time.
struct Puppets {
    struct Node {
        bool hung = false;
        bool permanent = false;
        std::optional<TimePoint> booting_until;
        std::vector<TimePoint> resets;
    };

    EventClock clock;
    registry::RegistryStore store{consrv::testing::registry_for("console n1 consrv01 0\nreset n1 consrv01 chain0 0 0\n")};
    reset::AuditLog audit;
    std::map<std::string, Node> nodes;
    Duration boot_time = 20s;
    reset::ResetOutcome reset_outcome = reset::ResetOutcome::Ok;
    std::optional<Duration> chatter; // periodic output while alive
    std::unique_ptr<Watchdog> wd;
    std::vector<std::unique_ptr<Ticker>> tickers;

    explicit Puppets(std::vector<std::string> hosts, WatchdogPolicy policy = {}) {
        for (auto& h : hosts) nodes[h];
        Watchdog::Hooks hooks;
        hooks.hosts = [this] {
            std::vector<std::string> v;
            for (auto& [h, n] : nodes) v.push_back(h);
            return v;
        };
        hooks.send_probe = [this](const std::string& h) {
            if (alive(h)) wd->on_output(h, clock.now());
        };
        hooks.reset = [this](const std::string& h) {
            reset::AuditEvent ev;
            ev.principal = std::string(kWatchdogPrincipal);
            ev.host = h;
            ev.outcome = reset_outcome;
            if (reset_outcome != reset::ResetOutcome::Ok) return ev;
            auto& n = nodes.at(h);
            n.resets.push_back(clock.now());
            n.hung = false;
            n.booting_until = clock.now() + boot_time;
            clock.schedule_at(*n.booting_until, [this, h] {
                auto& n = nodes.at(h);
                n.booting_until.reset();
                if (n.permanent) {
                    n.hung = true;
                } else {
                    wd->on_output(h, clock.now());
                }
            });
            return ev;
        };
        wd = std::make_unique<Watchdog>(policy, clock, store, audit, std::move(hooks));
    }

    bool alive(const std::string& h) const {
        const auto& n = nodes.at(h);
        return !n.hung && !n.booting_until;
    }

    void start(std::optional<Duration> chat = std::nullopt) {
        wd->tick(); // start tracking at t=0
        wd->start();
        if (chat) {
            tickers.push_back(std::make_unique<Ticker>(clock, *chat, [this] {
                for (auto& [h, n] : nodes) {
                    if (alive(h)) wd->on_output(h, clock.now());
                }
            }, clock.now() + *chat - 1s));
        }
    }

    std::vector<std::pair<int, ActionKind>> timeline(const std::string& host) const {
        std::vector<std::pair<int, ActionKind>> out;
        for (const auto& a : wd->actions()) {
            if (a.host == host) out.emplace_back(secs(a.at), a.kind);
        }
        return out;
    }
};

using P = std::pair<int, ActionKind>;
constexpr auto kProbe = ActionKind::Probe;
constexpr auto kReset = ActionKind::Reset;
constexpr auto kAlarm = ActionKind::Alarm;

} // namespace

TEST(WatchdogPolicy, ValidationAndConfig) {
    WatchdogPolicy p;
    EXPECT_NO_THROW(p.validate());
    p.max_restarts = 0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    const auto cfg = daemon::DaemonConfig::parse("watchdog silence 60\nwatchdog max-restarts 2\nwatchdog window 600\n"
                                                 "watchdog boot-grace 90\nwatchdog enabled off\n");
    EXPECT_EQ(cfg.watchdog.silence_threshold, 60s);
    EXPECT_EQ(cfg.watchdog.max_restarts, 2);
    EXPECT_EQ(cfg.watchdog.window, 600s);
    EXPECT_EQ(cfg.watchdog.boot_grace, 90s);
    EXPECT_FALSE(cfg.watchdog_enabled);
    EXPECT_THROW(daemon::DaemonConfig::parse("watchdog silence 0\n"), InvalidArgument);
    EXPECT_THROW(daemon::DaemonConfig::parse("watchdog colour blue\n"), InvalidArgument);
}

// Defaults: S=120, tick 5, probe timeout 2, 3 probes, K=3, G=180.
// Silent from t=0: the first tick with more than 120 s of silence is 125;
// probes at 125, 127, 129 time out and the reset goes out at 131.
TEST(WatchdogTimeline, HangAtZeroRebootsAndRecovers) {
    Puppets w({"n1"});
    w.nodes["n1"].hung = true;
    w.start(30s);
    w.clock.advance_to(at(2 * 3600));
    // after the reboot the node chatters again, so nothing follows the reset
    const std::vector<P> expect = {{125, kProbe}, {127, kProbe}, {129, kProbe}, {131, kReset}};
    EXPECT_EQ(w.timeline("n1"), expect);
    const auto st = w.wd->status();
    ASSERT_EQ(st.size(), 1u);
    EXPECT_NE(st[0].phase, Phase::Alarmed);
    EXPECT_EQ(st[0].restarts.size(), 0u); // pruned after the window
}

// A node that never comes back: resets at 131, 321 (grace to 311, then
// probes 315/317/319), 511, and the fourth detection at 701 alarms.
TEST(WatchdogTimeline, PermanentHangResetsKTimesThenAlarms) {
    Puppets w({"n1"});
    w.nodes["n1"].hung = true;
    w.nodes["n1"].permanent = true;
    w.start();
    w.clock.advance_to(at(3600));
    const std::vector<P> expect = {
        {125, kProbe}, {127, kProbe}, {129, kProbe}, {131, kReset},
        {315, kProbe}, {317, kProbe}, {319, kProbe}, {321, kReset},
        {505, kProbe}, {507, kProbe}, {509, kProbe}, {511, kReset},
        {695, kProbe}, {697, kProbe}, {699, kProbe}, {701, kAlarm},
    };
    EXPECT_EQ(w.timeline("n1"), expect);
    const auto alarms = w.wd->alarms();
    ASSERT_EQ(alarms.size(), 1u);
    EXPECT_EQ(alarms[0].host, "n1");
    for (const auto& a : w.wd->actions()) {
        if (a.kind == kReset) EXPECT_EQ(a.detail, kWatchdogReason);
    }
}

TEST(WatchdogTimeline, ChattyNodeIsNeverTouched) {
    Puppets w({"n1", "n2"});
    w.start(60s);
    w.clock.advance_to(at(2 * 3600));
    EXPECT_TRUE(w.wd->actions().empty());
}

TEST(WatchdogTimeline, SilentButAnsweringNodeOnlyGetsProbed) {
    Puppets w({"n1"});
    w.start();
    w.clock.advance_to(at(3600));
    for (const auto& a : w.wd->actions()) EXPECT_EQ(a.kind, kProbe);
    EXPECT_FALSE(w.wd->actions().empty());
    EXPECT_EQ(w.wd->status()[0].phase, Phase::Healthy);
}

TEST(WatchdogTimeline, UnwiredHostAlarmsWithItsOwnCause) {
    Puppets w({"n1"});
    w.nodes["n1"].hung = true;
    w.reset_outcome = reset::ResetOutcome::NoWiring;
    w.start();
    w.clock.advance_to(at(600));
    const auto alarms = w.wd->alarms();
    ASSERT_EQ(alarms.size(), 1u);
    EXPECT_EQ(alarms[0].alarm_cause, "no reset wiring");
    EXPECT_TRUE(alarms[0].restarts.empty());
}

TEST(WatchdogClear, RulesAndAudit) {
    Puppets w({"n1"});
    w.nodes["n1"].hung = true;
    w.nodes["n1"].permanent = true;
    w.start();
    w.clock.advance_to(at(800));
    ASSERT_EQ(w.wd->alarms().size(), 1u);

    EXPECT_THROW(w.wd->clear_alarm("alice", "n1"), Denied);
    EXPECT_EQ(w.wd->alarms().size(), 1u);
    ASSERT_EQ(w.audit.size(), 1u);
    EXPECT_EQ(w.audit.query({})[0].outcome, reset::ResetOutcome::Denied);

    const auto ev = w.wd->clear_alarm("admin", "n1");
    EXPECT_EQ(ev.kind, reset::AuditKind::ClearAlarm);
    EXPECT_EQ(ev.outcome, reset::ResetOutcome::Ok);
    EXPECT_TRUE(w.wd->alarms().empty());
    const auto st = w.wd->status()[0];
    EXPECT_EQ(st.phase, Phase::Healthy);
    EXPECT_TRUE(st.restarts.empty());

    const auto again = w.wd->clear_alarm("admin", "n1");
    EXPECT_EQ(again.reason, "clear requested, host not alarmed");
    EXPECT_EQ(w.audit.size(), 3u);
    EXPECT_THROW(w.wd->clear_alarm("admin", "ghost"), UnknownHost);
}

TEST(WatchdogProperty, RandomHangSchedulesRespectThePolicy) {
    WatchdogPolicy policy;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Gen g(seed);
        std::vector<std::string> hosts;
        for (int i = 0; i < 6; ++i) hosts.push_back("n" + std::to_string(i));
        Puppets w(hosts, policy);
        w.boot_time = Duration{g.range(5, 170) * 1000};
        std::set<std::string> quiet, permanent;
        for (const auto& h : hosts) {
            const int kind = g.range(0, 2);
            if (kind == 0) {
                quiet.insert(h);
            } else {
                const int hangs = kind == 2 ? 1 : g.range(1, 6);
                for (int i = 0; i < hangs; ++i) {
                    const auto t = at(g.range(10, 7200));
                    w.clock.schedule_at(t, [&w, h] {
                        auto& n = w.nodes.at(h);
                        if (!n.booting_until) n.hung = true;
                    });
                }
                if (kind == 2) {
                    permanent.insert(h);
                    w.nodes[h].permanent = true;
                }
            }
        }
        w.start(Duration{g.range(20, 110) * 1000});
        w.clock.advance_to(at(4 * 3600));

        std::map<std::string, std::vector<TimePoint>> resets;
        for (const auto& a : w.wd->actions()) {
            if (a.kind == kReset) {
                ASSERT_EQ(a.detail, kWatchdogReason);
                resets[a.host].push_back(a.at);
            }
            if (quiet.count(a.host)) FAIL() << "seed " << seed << ": action on a healthy chatty host " << a.host;
        }
        for (const auto& [h, rs] : resets) {
            // brute force: every window of length W that starts at a reset
            for (std::size_t i = 0; i < rs.size(); ++i) {
                std::size_t in_window = 0;
                for (const auto& t : rs) in_window += t >= rs[i] && t < rs[i] + policy.window;
                ASSERT_LE(in_window, static_cast<std::size_t>(policy.max_restarts)) << "seed " << seed << " " << h;
                if (i > 0) ASSERT_GE(rs[i] - rs[i - 1], policy.boot_grace) << "seed " << seed << " " << h;
            }
            ASSERT_EQ(rs, w.nodes.at(h).resets);
        }
        for (const auto& st : w.wd->status()) {
            if (permanent.count(st.host)) {
                ASSERT_EQ(st.phase, Phase::Alarmed) << "seed " << seed << " " << st.host;
            }
        }
    }
}

TEST(WatchdogFarm, HungNodeIsResetThroughTheAuditedPath) {
    daemon::DaemonConfig cfg;
    FarmRig rig(sim::Topology::farm(3), cfg);
    rig.run_for(60s);
    rig.harness->node("lxb0002").inject_hang();
    rig.run_for(15min);
    const auto ev = rig.daemon->audit().query({.principal = std::string(kWatchdogPrincipal)});
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_EQ(ev[0].host, "lxb0002");
    EXPECT_EQ(ev[0].reason, kWatchdogReason);
    EXPECT_EQ(ev[0].outcome, reset::ResetOutcome::Ok);
    EXPECT_EQ(rig.harness->node("lxb0002").state(), sim::NodeState::Up);
    EXPECT_EQ(rig.harness->emulator().pulse_count(), 1u);
    for (const auto& st : rig.daemon->watchdog().status()) EXPECT_NE(st.phase, Phase::Alarmed);
    // the reboot is in the log, from the first boot-loader line on
    const auto boot = sim::transcript_bytes(rig.harness->node("lxb0002").transcript());
    const auto logged = rig.logged_bytes("lxb0002");
    const auto first = std::search(logged.begin(), logged.end(), boot.begin(), boot.end());
    ASSERT_EQ(first, logged.begin());
    EXPECT_NE(std::search(first + 1, logged.end(), boot.begin(), boot.end()), logged.end());
}

TEST(WatchdogFarm, RelapsingNodeEndsAlarmedWithAnAlarmLine) {
    daemon::DaemonConfig cfg;
    FarmRig rig(sim::Topology::farm(2), cfg);
    rig.run_for(60s);
    rig.harness->node("lxb0001").set_hang_after_boot(1s);
    rig.harness->node("lxb0001").inject_hang();
    rig.run_for(30min);
    const auto alarms = rig.daemon->watchdog().alarms();
    ASSERT_EQ(alarms.size(), 1u);
    EXPECT_EQ(alarms[0].host, "lxb0001");
    EXPECT_EQ(rig.daemon->audit().query({.host = "lxb0001"}).size(), 3u);
    bool alarm_line = false;
    for (const auto& l : rig.log->entries()) alarm_line |= l.port_label == "alarm" && l.host == "lxb0001";
    EXPECT_TRUE(alarm_line);
}
