// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <mutex>
#include <string_view>

#include "common/clock.hpp"
#include "relay/frame.hpp"
#include "transport/endpoint.hpp"

namespace consrv::relay {

enum class PulseOutcome { Ack, Nak, AckTimeout };

std::string_view outcome_name(PulseOutcome o);

// Issues commands to one relay chain. Callers are serialized: one command is
// in flight per chain at any time. The driver returns once the box has
// acknowledged; the box times the pulse itself.
class RelayDriver {
public:
    RelayDriver(transport::EndpointPtr chain, Clock& clock, Duration ack_timeout = 2s, int retries = 1);

    // duration must be a whole number of tenths in (0, 25.5 s].
    PulseOutcome pulse(RelayAddress addr, Duration duration = Duration{kDefaultPulseTenths * 100});
    PulseOutcome send(const RelayFrame& frame);

private:
    PulseOutcome await_reply(std::uint8_t addr);

    transport::EndpointPtr chain_;
    Clock& clock_;
    Duration ack_timeout_;
    int retries_;
    std::mutex mu_;
};

} // namespace consrv::relay
