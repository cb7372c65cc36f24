// SPDX-License-Identifier: Apache-2.0
#include "common/clock.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace consrv {

struct Ticker::State {
    Clock* clock;
    Duration period;
    std::function<void()> fn;
    std::mutex mu;
    bool alive = true;
    TimerId pending = 0;
    TimePoint next_at;
};

Ticker::Ticker(Clock& clock, Duration period, std::function<void()> fn, std::optional<TimePoint> first)
    : state_(std::make_shared<State>()) {
    if (period <= Duration::zero()) {
        throw InvalidArgument("ticker period must be positive");
    }
    state_->clock = &clock;
    state_->period = period;
    state_->fn = std::move(fn);
    state_->next_at = first.value_or(clock.now() + period);
    arm(state_);
}

Ticker::~Ticker() { stop(); }

void Ticker::stop() {
    if (!state_) {
        return;
    }
    TimerId pending = 0;
    {
        std::lock_guard lk(state_->mu);
        state_->alive = false;
        pending = state_->pending;
        state_->pending = 0;
    }
    if (pending != 0) {
        state_->clock->cancel(pending);
    }
}

void Ticker::arm(const std::shared_ptr<State>& st) {
    std::weak_ptr<State> weak = st;
    std::lock_guard lk(st->mu);
    if (!st->alive) {
        return;
    }
    st->pending = st->clock->schedule_at(st->next_at, [weak] {
        auto s = weak.lock();
        if (!s) {
            return;
        }
        {
            std::lock_guard lk2(s->mu);
            if (!s->alive) {
                return;
            }
            s->pending = 0;
        }
        s->fn();
        {
            std::lock_guard lk2(s->mu);
            if (!s->alive) {
                return;
            }
            const auto now = s->clock->now();
            s->next_at += s->period;
            while (s->next_at <= now) {
                s->next_at += s->period;
            }
        }
        arm(s);
    });
}

EventClock::EventClock(Mode mode, TimePoint start, double speed)
    : mode_(mode), start_(start), speed_(speed), steady_start_(std::chrono::steady_clock::now()),
      sim_now_ms_(start.time_since_epoch().count()) {
    if (speed <= 0.0) {
        throw InvalidArgument("clock speed must be positive");
    }
}

EventClock::~EventClock() { stop(); }

TimePoint EventClock::now() const {
    if (mode_ == Mode::Simulated) {
        return TimePoint{Duration{sim_now_ms_.load()}};
    }
    const auto real = std::chrono::steady_clock::now() - steady_start_;
    const auto scaled = std::chrono::duration_cast<Duration>(
        std::chrono::duration<double, std::milli>(std::chrono::duration<double, std::milli>(real).count() * speed_));
    return start_ + scaled;
}

std::chrono::steady_clock::time_point EventClock::to_steady(TimePoint t) const {
    const double ms = static_cast<double>((t - start_).count()) / speed_;
    return steady_start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               std::chrono::duration<double, std::milli>(std::max(ms, 0.0)));
}

TimerId EventClock::schedule_at(TimePoint at, std::function<void()> fn) {
    TimerId id = 0;
    {
        std::lock_guard lk(queue_mu_);
        id = next_id_++;
        queue_.emplace(Key{at, id}, std::move(fn));
        index_.emplace(id, at);
        ++seq_;
    }
    cv_.notify_all();
    return id;
}

void EventClock::cancel(TimerId id) {
    std::lock_guard lk(queue_mu_);
    auto it = index_.find(id);
    if (it == index_.end()) {
        return;
    }
    queue_.erase(Key{it->second, id});
    index_.erase(it);
}

void EventClock::notify() {
    {
        std::lock_guard lk(queue_mu_);
        ++seq_;
    }
    cv_.notify_all();
}

std::size_t EventClock::pending_timers() const {
    std::lock_guard lk(queue_mu_);
    return queue_.size();
}

std::optional<std::pair<TimePoint, std::function<void()>>> EventClock::pop_due(TimePoint limit) {
    std::lock_guard lk(queue_mu_);
    if (queue_.empty()) {
        return std::nullopt;
    }
    auto it = queue_.begin();
    if (it->first.first > limit) {
        return std::nullopt;
    }
    auto result = std::make_pair(it->first.first, std::move(it->second));
    index_.erase(it->first.second);
    queue_.erase(it);
    return result;
}

bool EventClock::wait_until(TimePoint deadline, const std::function<bool()>& ready) {
    if (mode_ == Mode::Paced && running_.load() && runner_.load() != std::this_thread::get_id()) {
        return passive_wait(deadline, ready);
    }
    return drive(deadline, ready, false);
}

void EventClock::advance_to(TimePoint t) {
    if (mode_ != Mode::Simulated) {
        throw InvalidArgument("advance_to requires a simulated clock");
    }
    drive(t, nullptr, false);
}

void EventClock::run() {
    if (mode_ != Mode::Paced) {
        throw InvalidArgument("run requires a paced clock");
    }
    runner_.store(std::this_thread::get_id());
    running_.store(true);
    drive(TimePoint::max(), nullptr, true);
    running_.store(false);
    runner_.store(std::thread::id{});
    stopping_.store(false);
}

void EventClock::stop() {
    stopping_.store(true);
    notify();
}

bool EventClock::drive(TimePoint deadline, const std::function<bool()>& ready, bool until_stop) {
    std::lock_guard drive_lk(drive_mu_);
    if (mode_ == Mode::Simulated) {
        for (;;) {
            if (ready && ready()) {
                return true;
            }
            auto due = pop_due(deadline);
            if (!due) {
                const auto target = deadline.time_since_epoch().count();
                if (sim_now_ms_.load() < target) {
                    sim_now_ms_.store(target);
                }
                return ready ? ready() : false;
            }
            if (sim_now_ms_.load() < due->first.time_since_epoch().count()) {
                sim_now_ms_.store(due->first.time_since_epoch().count());
            }
            due->second();
        }
    }

    for (;;) {
        std::uint64_t seen = 0;
        {
            std::lock_guard lk(queue_mu_);
            seen = seq_;
        }
        if (ready && ready()) {
            return true;
        }
        if (until_stop && stopping_.load()) {
            return false;
        }
        const auto now_t = now();
        if (!until_stop && now_t >= deadline) {
            return ready ? ready() : false;
        }
        if (auto due = pop_due(now_t)) {
            due->second();
            notify();
            continue;
        }
        std::unique_lock lk(queue_mu_);
        TimePoint wake = until_stop ? TimePoint::max() : deadline;
        if (!queue_.empty()) {
            wake = std::min(wake, queue_.begin()->first.first);
        }
        auto pred = [&] { return seq_ != seen || stopping_.load(); };
        if (wake == TimePoint::max()) {
            cv_.wait(lk, pred);
        } else {
            cv_.wait_until(lk, to_steady(wake), pred);
        }
    }
}

bool EventClock::passive_wait(TimePoint deadline, const std::function<bool()>& ready) {
    for (;;) {
        std::uint64_t seen = 0;
        {
            std::lock_guard lk(queue_mu_);
            seen = seq_;
        }
        if (ready && ready()) {
            return true;
        }
        if (now() >= deadline) {
            return ready ? ready() : false;
        }
        std::unique_lock lk(queue_mu_);
        cv_.wait_until(lk, to_steady(deadline), [&] { return seq_ != seen || stopping_.load(); });
        if (stopping_.load() && !running_.load()) {
            lk.unlock();
            return ready ? ready() : false;
        }
    }
}

} // namespace consrv
