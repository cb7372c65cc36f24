// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "auth/authenticator.hpp"
#include "daemon/console_server.hpp"

namespace consrv::daemon {

class Daemon;

// Server side of one control connection, independent of the socket.
//
// After the handshake ("CHAL ..." / "AUTH ..." / "OK <principal>") every
// request is one line. Replies are zero or more "R <f1>\t<f2>..." rows and a
// final "OK [text]" or "ERR <word> <message>". Attach and streaming
// requests switch the connection into a mode that ends with "END":
//   console bytes:  "D <len>\n<bytes>" in both directions
//   log lines:      "L <line>"
//   pattern events: "E <rfc3339>\t<line>"
class ControlConnection {
public:
    explicit ControlConnection(Daemon& daemon);
    ~ControlConnection();

    ControlConnection(const ControlConnection&) = delete;
    ControlConnection& operator=(const ControlConnection&) = delete;

    // First line the server sends.
    std::string greeting();
    // Bytes from the client; returns bytes to send back.
    std::string on_input(std::string_view bytes);
    // Pending session output and stream events.
    std::string poll();
    // Peer went away: release sessions and subscriptions.
    void shutdown();

    bool closed() const { return closed_; }
    const std::optional<std::string>& principal() const { return principal_; }

private:
    enum class Mode { Handshake, Command, Attached, Streaming };

    void handle_line(const std::string& line, std::string& out);
    void handle_command(const std::vector<std::string>& words, const std::string& line, std::string& out);
    void end_stream(std::string& out);
    void drain(std::string& out);

    Daemon& daemon_;
    Mode mode_ = Mode::Handshake;
    bool closed_ = false;
    std::string inbuf_;
    std::optional<std::size_t> data_pending_; // length of an incoming D frame
    std::optional<auth::Challenge> challenge_;
    std::optional<std::string> principal_;
    SessionPtr session_;
    SubscriptionPtr subscription_;
    bool stream_is_log_ = false;
};

} // namespace consrv::daemon
