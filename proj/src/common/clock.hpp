// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

namespace consrv {

using Duration = std::chrono::milliseconds;
using TimePoint = std::chrono::sys_time<Duration>;
using TimerId = std::uint64_t;

using namespace std::chrono_literals;

// 2024-01-01T00:00:00Z, the default origin of simulated time.
inline constexpr TimePoint default_epoch() { return TimePoint{Duration{1704067200000LL}}; }

// Time source plus timer queue. Every timeout in the system (pulse width, ack
// timeout, probe timeout, watchdog ticks) goes through a Clock so the whole
// stack can run on logical time.
class Clock {
public:
    virtual ~Clock() = default;

    virtual TimePoint now() const = 0;
    virtual TimerId schedule_at(TimePoint at, std::function<void()> fn) = 0;
    virtual void cancel(TimerId id) = 0;

    // Blocks until ready() holds or the deadline passes, returning ready().
    // A simulated clock advances time (running due timers) instead of sleeping.
    virtual bool wait_until(TimePoint deadline, const std::function<bool()>& ready) = 0;

    // Wakes waiters after state they may be waiting on has changed.
    virtual void notify() = 0;

    TimerId schedule_after(Duration d, std::function<void()> fn) { return schedule_at(now() + d, std::move(fn)); }
    bool wait_for(Duration d, const std::function<bool()>& ready) { return wait_until(now() + d, ready); }
    void sleep_for(Duration d) { wait_for(d, nullptr); }
};

// Periodic timer. Ticks stay aligned to first + n*period; ticks that fall
// behind the clock (e.g. during a nested wait) are skipped, not replayed.
class Ticker {
public:
    Ticker(Clock& clock, Duration period, std::function<void()> fn, std::optional<TimePoint> first = {});
    ~Ticker();

    Ticker(const Ticker&) = delete;
    Ticker& operator=(const Ticker&) = delete;

    void stop();

private:
    struct State;
    static void arm(const std::shared_ptr<State>& st);
    std::shared_ptr<State> state_;
};

class EventClock final : public Clock {
public:
    enum class Mode {
        Simulated, // time only moves when someone waits or advances
        Paced,     // time follows the wall clock, scaled by speed
    };

    explicit EventClock(Mode mode = Mode::Simulated, TimePoint start = default_epoch(), double speed = 1.0);
    ~EventClock() override;

    TimePoint now() const override;
    TimerId schedule_at(TimePoint at, std::function<void()> fn) override;
    void cancel(TimerId id) override;
    bool wait_until(TimePoint deadline, const std::function<bool()>& ready) override;
    void notify() override;

    // Simulated mode: run every timer due up to t, then set now = t.
    void advance_to(TimePoint t);
    void advance(Duration d) { advance_to(now() + d); }

    // Paced mode: drive timers on the calling thread until stop().
    void run();
    void stop();

    Mode mode() const { return mode_; }
    std::size_t pending_timers() const;

private:
    using Key = std::pair<TimePoint, TimerId>;

    bool drive(TimePoint deadline, const std::function<bool()>& ready, bool until_stop);
    bool passive_wait(TimePoint deadline, const std::function<bool()>& ready);
    std::optional<std::pair<TimePoint, std::function<void()>>> pop_due(TimePoint limit);
    std::chrono::steady_clock::time_point to_steady(TimePoint t) const;

    Mode mode_;
    TimePoint start_;
    double speed_;
    std::chrono::steady_clock::time_point steady_start_;
    std::atomic<std::int64_t> sim_now_ms_;

    mutable std::mutex queue_mu_;
    std::condition_variable cv_;
    std::map<Key, std::function<void()>> queue_;
    std::unordered_map<TimerId, TimePoint> index_;
    TimerId next_id_ = 1;
    std::uint64_t seq_ = 0;

    std::recursive_mutex drive_mu_;
    std::atomic<bool> running_{false};
    std::atomic<bool> stopping_{false};
    std::atomic<std::thread::id> runner_{};
};

} // namespace consrv
