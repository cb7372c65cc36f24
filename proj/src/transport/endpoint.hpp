// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "common/clock.hpp"
#include "common/text.hpp"

namespace consrv::transport {

struct PortId {
    std::string server_id;
    int index = 0;

    auto operator<=>(const PortId&) const = default;
};

// "ttyS5" style label used in log lines.
std::string port_label(int index);

// Byte stream end of a (simulated or real) serial line. One reader and one
// writer may use an endpoint concurrently; two concurrent readers may not.
class Endpoint {
public:
    virtual ~Endpoint() = default;

    // Returns 1..max bytes, or nullopt if nothing arrived within timeout.
    // Throws EndpointClosed once the peer is gone and the buffer is drained.
    virtual std::optional<Bytes> read_available(std::size_t max, Duration timeout) = 0;
    virtual void write(std::span<const std::uint8_t> data) = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;

    void write(std::string_view s) {
        write(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
};

using EndpointPtr = std::shared_ptr<Endpoint>;

// Null-modem cable between two in-process endpoints. Timed reads wait on the
// given clock, so a simulated clock makes them advance logical time.
std::pair<EndpointPtr, EndpointPtr> create_linked_pair(Clock& clock);

// Opens a character device or named pipe in raw mode. At most one endpoint
// per path may be open in this process; throws DeviceUnavailable otherwise.
EndpointPtr open_device(const std::string& path);

} // namespace consrv::transport
