// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <condition_variable>
#include <set>
#include <thread>

#include "farm_rig.hpp"
#include "reset/audit.hpp"
#include "reset/reset_service.hpp"
#include "test_support.hpp"

using namespace consrv;
using namespace consrv::reset;
using consrv::testing::FarmRig;
using consrv::testing::Gen;

namespace {

class FakeExecutor final : public ResetExecutor {
public:
    relay::PulseOutcome next = relay::PulseOutcome::Ack;
    std::function<void()> during;

    relay::PulseOutcome execute_reset(const std::string& host) override {
        const int now = ++in_flight_;
        int prev = max_in_flight_.load();
        while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
        }
        {
            std::lock_guard lk(mu_);
            pulses_.push_back(host);
        }
        if (during) during();
        --in_flight_;
        return next;
    }

    std::vector<std::string> pulses() const {
        std::lock_guard lk(mu_);
        return pulses_;
    }
    int max_in_flight() const { return max_in_flight_; }

private:
    mutable std::mutex mu_;
    std::vector<std::string> pulses_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

struct Bench {
    EventClock clock;
    registry::RegistryStore store;
    FakeExecutor exec;
    AuditLog audit;
    ResetService svc;

    Bench()
        : store(consrv::testing::registry_for("console lxb0001 consrv01 0\n"
                                              "console lxb0002 consrv01 1\n"
                                              "console lxc0001 consrv01 2\n"
                                              "reset lxb0001 consrv01 chain0 0 0\n"
                                              "reset lxb0002 consrv01 chain0 0 1\n")),
          svc(store, exec, audit, clock) {}

    AuditEvent submit(const std::string& p, const std::string& h, const std::string& reason = "hung") {
        return svc.submit({p, h, reason, clock.now()});
    }
};

} // namespace

TEST(AuditFormat, ExampleLine) {
    AuditEvent e;
    e.timestamp = *parse_rfc3339("2024-03-01T10:20:30.000Z");
    e.principal = "alice";
    e.host = "lxb0042";
    e.address = relay::RelayAddress::make(5, 1);
    e.reason = "hung after kernel test";
    EXPECT_EQ(format_audit(e), "2024-03-01T10:20:30.000Z RESET principal=alice host=lxb0042 addr=5/1 outcome=Ok "
                               "reason=\"hung after kernel test\"");
    e.kind = AuditKind::ClearAlarm;
    e.address.reset();
    EXPECT_EQ(format_audit(e).substr(24, 32), " CLEAR principal=alice host=lxb0");
    EXPECT_NE(format_audit(e).find(" addr=- "), std::string::npos);
}

TEST(AuditFormat, RandomEventsRoundTrip) {
    Gen g(11);
    const std::vector<ResetOutcome> outcomes = {ResetOutcome::Ok,      ResetOutcome::Denied, ResetOutcome::NoWiring,
                                                ResetOutcome::Nak,     ResetOutcome::Timeout,
                                                ResetOutcome::RateLimited};
    for (int i = 0; i < 500; ++i) {
        AuditEvent e;
        e.timestamp = default_epoch() + Duration{g.range(0, 1 << 30)};
        e.kind = g.chance(0.8) ? AuditKind::Reset : AuditKind::ClearAlarm;
        e.principal = g.name(g.range(1, 8));
        e.host = g.name(g.range(1, 8)) + std::to_string(i);
        if (g.chance(0.7)) e.address = relay::RelayAddress::from_flat(g.range(0, 63));
        const auto raw = g.bytes(static_cast<std::size_t>(g.range(1, 40)));
        e.reason = std::string(raw.begin(), raw.end()) + " \"q\" \\";
        e.outcome = g.pick(outcomes);
        const auto line = format_audit(e);
        ASSERT_EQ(line.find('\n'), std::string::npos);
        const auto back = parse_audit(line);
        ASSERT_TRUE(back) << line;
        ASSERT_EQ(*back, e) << line;
    }
    EXPECT_FALSE(parse_audit("garbage"));
    EXPECT_FALSE(parse_audit("2024-03-01T10:20:30.000Z REBOOT principal=a"));
}

TEST(AuditLog, FileIsAppendOnlyAndReadBack) {
    consrv::testing::TempDir dir;
    const auto path = dir / "audit.log";
    AuditEvent e;
    e.principal = "alice";
    e.host = "lxb0001";
    e.reason = "one";
    {
        AuditLog log(path);
        e.timestamp = default_epoch() + 1s;
        log.append(e);
    }
    const auto first = consrv::testing::slurp(path);
    {
        AuditLog log(path);
        EXPECT_EQ(log.size(), 1u);
        e.timestamp = default_epoch() + 2s;
        e.reason = "two";
        log.append(e);
        EXPECT_EQ(log.query({}).size(), 2u);
    }
    const auto second = consrv::testing::slurp(path);
    EXPECT_EQ(second.substr(0, first.size()), first);
    EXPECT_EQ(std::count(second.begin(), second.end(), '\n'), 2);
}

TEST(AuditLog, QueryFiltersAndOrders) {
    AuditLog log;
    AuditEvent e;
    e.reason = "r";
    for (int i : {3, 1, 2, 5, 4}) {
        e.timestamp = default_epoch() + std::chrono::seconds(i);
        e.host = i % 2 ? "odd" : "even";
        e.principal = i < 3 ? "alice" : "bob";
        log.append(e);
    }
    const auto odd = log.query({.host = "odd"});
    ASSERT_EQ(odd.size(), 3u);
    EXPECT_TRUE(std::is_sorted(odd.begin(), odd.end(),
                               [](const AuditEvent& a, const AuditEvent& b) { return a.timestamp < b.timestamp; }));
    EXPECT_EQ(log.query({.principal = "alice"}).size(), 2u);
    EXPECT_EQ(log.query({.from = default_epoch() + 2s, .to = default_epoch() + 4s}).size(), 2u);
    EXPECT_TRUE(log.query({.from = default_epoch() + 4s, .to = default_epoch() + 4s}).empty());
}

TEST(ResetService, HappyPathThenRateLimited) {
    Bench b;
    const auto ok = b.submit("alice", "lxb0001", "hung after kernel test");
    EXPECT_EQ(ok.outcome, ResetOutcome::Ok);
    ASSERT_TRUE(ok.address);
    EXPECT_EQ(ok.address->str(), "0/0");
    b.clock.advance(5s);
    EXPECT_EQ(b.submit("alice", "lxb0001").outcome, ResetOutcome::RateLimited);
    EXPECT_EQ(b.exec.pulses().size(), 1u);
    // another host is not affected
    EXPECT_EQ(b.submit("alice", "lxb0002").outcome, ResetOutcome::Ok);
    b.clock.advance(25s);
    EXPECT_EQ(b.submit("alice", "lxb0001").outcome, ResetOutcome::Ok);
    EXPECT_EQ(b.exec.pulses().size(), 3u);
    const auto q = b.audit.query({.host = "lxb0001"});
    ASSERT_EQ(q.size(), 3u);
    EXPECT_EQ(q[0].outcome, ResetOutcome::Ok);
    EXPECT_EQ(q[1].outcome, ResetOutcome::RateLimited);
    EXPECT_EQ(q[2].outcome, ResetOutcome::Ok);
}

TEST(ResetService, RefusalsAreAuditedWithoutPulses) {
    Bench b;
    EXPECT_EQ(b.submit("bob", "lxb0001").outcome, ResetOutcome::Denied);
    EXPECT_EQ(b.submit("mallory", "lxb0001").outcome, ResetOutcome::Denied);
    EXPECT_EQ(b.submit("alice", "lxc0001").outcome, ResetOutcome::NoWiring);
    EXPECT_EQ(b.submit("alice", "nosuchhost").outcome, ResetOutcome::NoWiring);
    EXPECT_TRUE(b.exec.pulses().empty());
    EXPECT_EQ(b.audit.size(), 4u);
}

TEST(ResetService, BlankReasonRejectedBeforeAnything) {
    Bench b;
    for (const auto* r : {"", "   ", "\t\n"}) EXPECT_THROW(b.submit("alice", "lxb0001", r), InvalidArgument);
    EXPECT_EQ(b.audit.size(), 0u);
    EXPECT_TRUE(b.exec.pulses().empty());
}

TEST(ResetService, FailedPulsesPassThroughAndDoNotRateLimit) {
    Bench b;
    b.exec.next = relay::PulseOutcome::Nak;
    EXPECT_EQ(b.submit("alice", "lxb0001").outcome, ResetOutcome::Nak);
    b.exec.next = relay::PulseOutcome::AckTimeout;
    EXPECT_EQ(b.submit("alice", "lxb0001").outcome, ResetOutcome::Timeout);
    b.exec.next = relay::PulseOutcome::Ack;
    EXPECT_EQ(b.submit("alice", "lxb0001").outcome, ResetOutcome::Ok);
    EXPECT_EQ(b.exec.pulses().size(), 3u);
}

TEST(ResetService, SameHostSerializesAndFiresOnce) {
    Bench b;
    b.exec.during = [] { std::this_thread::sleep_for(std::chrono::milliseconds(2)); };
    std::vector<std::thread> ts;
    std::atomic<int> oks{0};
    for (int i = 0; i < 16; ++i) {
        ts.emplace_back([&] {
            if (b.submit("alice", "lxb0001").outcome == ResetOutcome::Ok) ++oks;
        });
    }
    for (auto& t : ts) t.join();
    EXPECT_EQ(oks.load(), 1);
    EXPECT_EQ(b.exec.pulses().size(), 1u);
    EXPECT_EQ(b.exec.max_in_flight(), 1);
    EXPECT_EQ(b.audit.size(), 16u);
}

TEST(ResetService, DifferentHostsProceedInParallel) {
    Bench b;
    std::mutex mu;
    std::condition_variable cv;
    int arrived = 0;
    b.exec.during = [&] {
        std::unique_lock lk(mu);
        ++arrived;
        cv.notify_all();
        cv.wait_for(lk, std::chrono::seconds(5), [&] { return arrived >= 2; });
    };
    std::thread t1([&] { b.submit("alice", "lxb0001"); });
    std::thread t2([&] { b.submit("alice", "lxb0002"); });
    t1.join();
    t2.join();
    EXPECT_EQ(b.exec.max_in_flight(), 2);
}

TEST(ResetService, RandomScheduleReconcilesPulsesWithOkEvents) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Gen g(seed);
        Bench b;
        const std::vector<std::string> principals = {"alice", "bob", "admin", "mallory", "watchdog"};
        const std::vector<std::string> hosts = {"lxb0001", "lxb0002", "lxc0001", "ghost"};
        std::vector<std::thread> ts;
        for (int t = 0; t < 4; ++t) {
            ts.emplace_back([&, t] {
                Gen tg(seed * 10 + static_cast<std::uint64_t>(t));
                for (int i = 0; i < 25; ++i) b.submit(tg.pick(principals), tg.pick(hosts));
            });
        }
        for (int i = 0; i < 10; ++i) b.clock.advance(Duration{g.range(0, 20000)});
        for (auto& t : ts) t.join();
        const auto events = b.audit.query({});
        ASSERT_EQ(events.size(), 100u);
        const auto oks = std::count_if(events.begin(), events.end(), [](const AuditEvent& e) { return e.outcome == ResetOutcome::Ok; });
        ASSERT_EQ(static_cast<std::size_t>(oks), b.exec.pulses().size());
        for (const auto& e : events) {
            if (e.outcome == ResetOutcome::Ok) ASSERT_TRUE(b.store.get()->authorize(e.principal, registry::Action::Reset, e.host));
        }
        // successive Ok resets of one host are at least the interval apart
        std::map<std::string, TimePoint> last;
        for (const auto& e : events) {
            if (e.outcome != ResetOutcome::Ok) continue;
            if (auto it = last.find(e.host); it != last.end()) ASSERT_GE(e.timestamp - it->second, 30s);
            last[e.host] = e.timestamp;
        }
    }
}

TEST(ResetFarm, ExhaustiveSweepOverAFullChain) {
    FarmRig rig(sim::Topology::farm(64));
    rig.run_for(30s);
    auto& svc = rig.daemon->resets();
    std::set<std::string> seen_addr;
    for (const auto& h : rig.harness->hosts()) {
        const auto before = rig.harness->node(h).boots();
        const auto ev = svc.submit({"alice", h, "sweep", rig.clock.now()});
        ASSERT_EQ(ev.outcome, ResetOutcome::Ok) << h;
        ASSERT_TRUE(ev.address);
        EXPECT_EQ(*ev.address, rig.daemon->registry().get()->lookup_reset(h).address);
        seen_addr.insert(ev.address->str());
        rig.run_for(2s);
        for (const auto& other : rig.harness->hosts()) {
            ASSERT_EQ(rig.harness->node(other).boots(), other == h ? before + 1 : (other < h ? 2u : 1u)) << h << " " << other;
        }
    }
    EXPECT_EQ(seen_addr.size(), 64u);
    EXPECT_EQ(rig.harness->emulator().pulse_count(), 64u);
    EXPECT_EQ(rig.daemon->audit().query({.principal = "alice"}).size(), 64u);
}
