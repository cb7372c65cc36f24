// SPDX-License-Identifier: Apache-2.0
#include "relay/emulator.hpp"

namespace consrv::relay {

ChainEmulator::ChainEmulator(int boxes, Clock& clock) : boxes_(boxes), clock_(clock) {
    if (boxes < 1 || boxes > kBoxesPerChain) {
        throw InvalidArgument("a chain holds 1..8 boxes");
    }
}

void ChainEmulator::set_sink(RelayAddress addr, Sink sink) {
    std::lock_guard lk(mu_);
    sinks_[static_cast<std::size_t>(addr.flat())] = std::move(sink);
}

Bytes ChainEmulator::feed(std::span<const std::uint8_t> raw) {
    Bytes reply;
    std::vector<RelayFrame> accepted;
    {
        std::lock_guard lk(mu_);
        scanner_.push(raw);
        while (auto result = scanner_.next()) {
            if (std::holds_alternative<FrameScanner::Fault>(*result)) {
                reply.push_back(kNak);
                continue;
            }
            const auto& frame = std::get<RelayFrame>(*result);
            if (frame.address.box >= boxes_) {
                continue; // past the end of the cascade: nobody answers
            }
            accepted.push_back(frame);
            reply.push_back(kAck);
            reply.push_back(static_cast<std::uint8_t>(frame.address.flat()));
        }
    }
    for (const auto& frame : accepted) {
        act(frame);
    }
    return reply;
}

void ChainEmulator::act(const RelayFrame& frame) {
    const auto idx = static_cast<std::size_t>(frame.address.flat());
    const auto now = clock_.now();
    Sink sink;
    {
        std::lock_guard lk(mu_);
        if (release_timer_[idx] != 0) {
            clock_.cancel(release_timer_[idx]);
            release_timer_[idx] = 0;
        }
        if (open_record_[idx]) {
            pulses_[*open_record_[idx]].opened_at = now;
            open_record_[idx].reset();
        }
        switch (frame.command) {
        case RelayCommand::On:
            closed_[idx] = true;
            return;
        case RelayCommand::Off:
            closed_[idx] = false;
            return;
        case RelayCommand::Pulse:
            break;
        }
        closed_[idx] = true;
        pulses_.push_back(PulseRecord{frame.address, now, std::nullopt, frame.duration_tenths});
        open_record_[idx] = pulses_.size() - 1;
        const Duration width{frame.duration_tenths * 100};
        release_timer_[idx] = clock_.schedule_at(now + width, [this, idx] {
            std::lock_guard lk2(mu_);
            closed_[idx] = false;
            release_timer_[idx] = 0;
            if (open_record_[idx]) {
                pulses_[*open_record_[idx]].opened_at = clock_.now();
                open_record_[idx].reset();
            }
        });
        sink = sinks_[idx];
    }
    if (sink) {
        sink(frame.address, Duration{frame.duration_tenths * 100});
    }
}

void ChainEmulator::poll() {
    if (!line_) {
        return;
    }
    try {
        while (auto got = line_->read_available(256, Duration::zero())) {
            auto reply = feed(*got);
            if (!reply.empty()) {
                line_->write(std::span<const std::uint8_t>(reply));
            }
        }
    } catch (const EndpointClosed&) {
        line_.reset();
    }
}

bool ChainEmulator::contact_closed(RelayAddress addr) const {
    std::lock_guard lk(mu_);
    return closed_[static_cast<std::size_t>(addr.flat())];
}

std::vector<PulseRecord> ChainEmulator::pulses() const {
    std::lock_guard lk(mu_);
    return pulses_;
}

std::size_t ChainEmulator::pulse_count() const {
    std::lock_guard lk(mu_);
    return pulses_.size();
}

} // namespace consrv::relay
