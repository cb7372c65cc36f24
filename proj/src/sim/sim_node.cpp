// SPDX-License-Identifier: Apache-2.0
#include "sim/sim_node.hpp"

#include "common/error.hpp"

namespace consrv::sim {

std::string_view node_state_name(NodeState s) {
    switch (s) {
    case NodeState::Off:
        return "Off";
    case NodeState::Booting:
        return "Booting";
    case NodeState::Up:
        return "Up";
    case NodeState::Hung:
        return "Hung";
    case NodeState::Paniced:
        return "Paniced";
    }
    return "?";
}

SimNode::SimNode(std::string host, transport::EndpointPtr console, Clock& clock, NodeOptions options)
    : host_(std::move(host)), console_(std::move(console)), clock_(clock), options_(std::move(options)),
      rng_(options_.seed) {
    if (options_.transcript.empty()) options_.transcript = default_transcript(host_);
}

SimNode::~SimNode() {
    std::lock_guard lk(mu_);
    ++gen_;
    for (auto id : timers_) clock_.cancel(id);
}

NodeState SimNode::state() const {
    std::lock_guard lk(mu_);
    return state_;
}

std::uint64_t SimNode::boots() const {
    std::lock_guard lk(mu_);
    return boots_;
}

std::uint64_t SimNode::bytes_emitted() const {
    std::lock_guard lk(mu_);
    return emitted_;
}

void SimNode::set_output_observer(OutputObserver obs) {
    std::lock_guard lk(mu_);
    observer_ = std::move(obs);
}

void SimNode::set_hang_after_boot(std::optional<Duration> d) {
    std::lock_guard lk(mu_);
    options_.hang_after_boot = d;
}

void SimNode::schedule(TimePoint at, std::function<void()> fn) {
    // timers_ only holds ids that may still fire; cancelled generations are
    // filtered by the gen check inside fn
    auto id_holder = std::make_shared<TimerId>(0);
    const auto id = clock_.schedule_at(at, [this, id_holder, fn = std::move(fn)] {
        {
            std::lock_guard lk(mu_);
            std::erase(timers_, *id_holder);
        }
        fn();
    });
    *id_holder = id;
    timers_.push_back(id);
}

void SimNode::power_on() {
    std::lock_guard lk(mu_);
    if (state_ != NodeState::Off) return;
    ++gen_;
    start_boot(clock_.now());
}

void SimNode::power_off() {
    std::lock_guard lk(mu_);
    ++gen_;
    for (auto id : timers_) clock_.cancel(id);
    timers_.clear();
    state_ = NodeState::Off;
}

void SimNode::reset_pulse(Duration width) {
    std::lock_guard lk(mu_);
    if (state_ == NodeState::Off) return;
    ++gen_;
    for (auto id : timers_) clock_.cancel(id);
    timers_.clear();
    state_ = NodeState::Booting;
    start_boot(clock_.now() + width);
}

void SimNode::inject_hang() {
    std::lock_guard lk(mu_);
    if (state_ != NodeState::Up) return;
    ++gen_;
    state_ = NodeState::Hung;
}

void SimNode::inject_panic() {
    std::lock_guard lk(mu_);
    if (state_ != NodeState::Up) return;
    ++gen_;
    emit(std::string(kPanicLine) + "\r\n");
    state_ = NodeState::Paniced;
}

void SimNode::start_boot(TimePoint at) {
    state_ = NodeState::Booting;
    ++boots_;
    const auto gen = gen_;
    TimePoint t = at + options_.bios_delay;
    const auto& lines = options_.transcript;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        t += lines[i].delay;
        const bool last = i + 1 == lines.size();
        schedule(t, [this, gen, i, last] {
            std::lock_guard lk(mu_);
            if (gen != gen_) return;
            emit(options_.transcript[i].text + "\r\n");
            if (last) came_up();
        });
    }
}

void SimNode::came_up() {
    state_ = NodeState::Up;
    const auto gen = gen_;
    const auto now = clock_.now();
    if (options_.heartbeat) {
        schedule(now + *options_.heartbeat, [this, gen] { heartbeat_tick(gen); });
    }
    if (options_.traffic_rate > 0) {
        schedule(now + options_.traffic_period, [this, gen] { traffic_tick(gen); });
    }
    if (options_.hang_after_boot) {
        schedule(now + *options_.hang_after_boot, [this, gen] {
            std::lock_guard lk(mu_);
            if (gen == gen_) inject_hang();
        });
    }
}

void SimNode::heartbeat_tick(std::uint64_t gen) {
    std::lock_guard lk(mu_);
    if (gen != gen_ || state_ != NodeState::Up) return;
    emit("heartbeat " + std::to_string(++heartbeat_n_) + "\r\n");
    schedule(clock_.now() + *options_.heartbeat, [this, gen] { heartbeat_tick(gen); });
}

void SimNode::traffic_tick(std::uint64_t gen) {
    std::lock_guard lk(mu_);
    if (gen != gen_ || state_ != NodeState::Up) return;
    const double per_tick = options_.traffic_rate * std::chrono::duration<double>(options_.traffic_period).count();
    // jitter of +-50% keeps chunk boundaries irregular; the mean is the rate
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    const auto n = static_cast<std::size_t>(per_tick * jitter(rng_) + 0.5);
    Bytes chunk(n);
    std::uniform_int_distribution<int> byte(0, 255);
    for (auto& b : chunk) b = static_cast<std::uint8_t>(byte(rng_));
    emit(chunk);
    schedule(clock_.now() + options_.traffic_period, [this, gen] { traffic_tick(gen); });
}

void SimNode::emit(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) return;
    try {
        console_->write(bytes);
    } catch (const EndpointClosed&) {
        return;
    }
    emitted_ += bytes.size();
    if (observer_) observer_(bytes);
}

void SimNode::poll() {
    for (;;) {
        std::optional<Bytes> got;
        try {
            got = console_->read_available(256, Duration::zero());
        } catch (const EndpointClosed&) {
            return;
        }
        if (!got) return;
        std::lock_guard lk(mu_);
        if (state_ != NodeState::Up) continue;
        Bytes echo;
        for (auto b : *got) {
            if (b == 0x05) {
                if (!echo.empty()) {
                    emit(echo);
                    echo.clear();
                }
                emit("\x06ID:" + host_ + "\r\n");
            } else {
                echo.push_back(b);
            }
        }
        emit(echo);
    }
}

} // namespace consrv::sim
