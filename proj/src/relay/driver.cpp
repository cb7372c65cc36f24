// SPDX-License-Identifier: Apache-2.0
#include "relay/driver.hpp"

namespace consrv::relay {

std::string_view outcome_name(PulseOutcome o) {
    switch (o) {
    case PulseOutcome::Ack:
        return "Ack";
    case PulseOutcome::Nak:
        return "Nak";
    case PulseOutcome::AckTimeout:
        return "AckTimeout";
    }
    return "AckTimeout";
}

RelayDriver::RelayDriver(transport::EndpointPtr chain, Clock& clock, Duration ack_timeout, int retries)
    : chain_(std::move(chain)), clock_(clock), ack_timeout_(ack_timeout), retries_(retries) {}

PulseOutcome RelayDriver::pulse(RelayAddress addr, Duration duration) {
    if (duration <= Duration::zero() || duration > Duration{25500} || duration.count() % 100 != 0) {
        throw InvalidArgument("pulse duration must be a whole number of tenths in (0, 25.5] s");
    }
    return send(RelayFrame::pulse(addr, static_cast<std::uint8_t>(duration.count() / 100)));
}

PulseOutcome RelayDriver::send(const RelayFrame& frame) {
    std::lock_guard lk(mu_);
    const auto bytes = encode(frame);
    try {
        // Drop stale replies from an earlier timed-out exchange.
        while (chain_->read_available(64, Duration::zero())) {
        }
        for (int attempt = 0; attempt <= retries_; ++attempt) {
            chain_->write(std::span<const std::uint8_t>(bytes));
            const auto outcome = await_reply(bytes[1]);
            if (outcome != PulseOutcome::AckTimeout) {
                return outcome;
            }
        }
    } catch (const EndpointClosed&) {
        // an unplugged chain looks the same as a dead box
    }
    return PulseOutcome::AckTimeout;
}

PulseOutcome RelayDriver::await_reply(std::uint8_t addr) {
    const auto deadline = clock_.now() + ack_timeout_;
    bool saw_ack = false;
    for (;;) {
        const auto remaining = deadline - clock_.now();
        if (remaining <= Duration::zero()) {
            return PulseOutcome::AckTimeout;
        }
        auto got = chain_->read_available(64, remaining);
        if (!got) {
            return PulseOutcome::AckTimeout;
        }
        for (std::uint8_t b : *got) {
            if (saw_ack) {
                // second byte of an ACK is an address, never a NAK
                saw_ack = false;
                if (b == addr) {
                    return PulseOutcome::Ack;
                }
                continue;
            }
            if (b == kNak) {
                return PulseOutcome::Nak;
            }
            if (b == kAck) {
                saw_ack = true;
            }
        }
    }
}

} // namespace consrv::relay
