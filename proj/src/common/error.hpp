// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace consrv {

// Error classes. The numeric values double as the C API status codes and the
// CLI exit codes, so they are part of the scripting contract.
enum class Errc : int {
    Internal = 1,
    Invalid = 2,
    Denied = 3,
    NotFound = 4,
    Busy = 5,
    Transport = 6,
    RateLimited = 7,
    Conflict = 8,
};

std::string_view errc_word(Errc code);
Errc errc_from_word(std::string_view word);

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string kind, const std::string& message)
        : std::runtime_error(message), code_(code), kind_(std::move(kind)) {}

    Errc code() const noexcept { return code_; }
    // Short machine-readable tag, e.g. "writer-busy".
    const std::string& kind() const noexcept { return kind_; }

private:
    Errc code_;
    std::string kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& msg) : Error(Errc::Invalid, "invalid", msg) {}
};

struct DeviceUnavailable : Error {
    explicit DeviceUnavailable(const std::string& path, const std::string& why)
        : Error(Errc::Transport, "device-unavailable", "device unavailable: " + path + ": " + why) {}
};

struct EndpointClosed : Error {
    EndpointClosed() : Error(Errc::Transport, "endpoint-closed", "endpoint closed") {}
};

struct UnknownHost : Error {
    explicit UnknownHost(const std::string& host)
        : Error(Errc::NotFound, "unknown-host", "unknown host: " + host) {}
};

struct UnknownServer : Error {
    explicit UnknownServer(const std::string& server)
        : Error(Errc::NotFound, "unknown-server", "unknown server: " + server) {}
};

struct NoResetWiring : Error {
    explicit NoResetWiring(const std::string& host)
        : Error(Errc::NotFound, "no-reset-wiring", "no reset wiring for host: " + host) {}
};

struct Denied : Error {
    explicit Denied(const std::string& msg) : Error(Errc::Denied, "denied", msg) {}
};

struct WriterBusy : Error {
    explicit WriterBusy(const std::string& holder)
        : Error(Errc::Busy, "writer-busy", "port is held read-write by " + holder), holder_(holder) {}
    const std::string& holder() const noexcept { return holder_; }

private:
    std::string holder_;
};

struct BadPattern : Error {
    explicit BadPattern(const std::string& msg) : Error(Errc::Invalid, "bad-pattern", "bad pattern: " + msg) {}
};

} // namespace consrv
