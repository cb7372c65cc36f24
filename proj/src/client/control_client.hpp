// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "auth/signature.hpp"
#include "common/clock.hpp"
#include "common/error.hpp"

namespace consrv::client {

// One unit of server output.
struct Frame {
    enum class Kind { Row, Ok, Err, Data, Line, Event, End };
    Kind kind = Kind::Row;
    std::string text;                // Row: raw fields joined by tabs; Ok: text; Err: message; Line/Event: line
    std::vector<std::string> fields; // Row fields; Event: {timestamp, line}
    Errc code = Errc::Internal;      // Err only
    std::string word;                // Err only
    Bytes data;                      // Data only
};

struct Response {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> lines; // L lines (LOG)
    bool ok = false;
    std::string text;               // OK text or error message
    Errc code = Errc::Internal;
    std::string word;
};

// Incremental parser for the server's output stream.
class FrameReader {
public:
    void feed(std::string_view bytes);
    std::optional<Frame> next();
    // Next raw line, for the handshake.
    std::optional<std::string> next_line();

private:
    std::string buf_;
};

class ControlClient {
public:
    // Connects and authenticates; throws Error on failure.
    static std::unique_ptr<ControlClient> connect(const std::string& address, const std::string& principal,
                                                  const auth::KeyPair& key);
    ~ControlClient();

    ControlClient(const ControlClient&) = delete;
    ControlClient& operator=(const ControlClient&) = delete;

    const std::string& server_id() const { return server_id_; }

    // One request/response exchange.
    Response request(const std::string& line);

    void send_line(const std::string& line);
    void send_data(std::span<const std::uint8_t> bytes);
    // Next frame, waiting at most timeout; nullopt on timeout. Throws
    // Error(Transport) when the connection is gone.
    std::optional<Frame> next(Duration timeout);

    int fd() const { return fd_; }

private:
    explicit ControlClient(int fd) : fd_(fd) {}
    bool fill(Duration timeout);
    void send_raw(std::string_view data);

    int fd_ = -1;
    std::string server_id_;
    FrameReader reader_;
};

} // namespace consrv::client
