// SPDX-License-Identifier: Apache-2.0
#include "client/control_client.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "auth/authenticator.hpp"

namespace consrv::client {

namespace {

Error transport(const std::string& msg) { return Error(Errc::Transport, "transport", msg); }

} // namespace

void FrameReader::feed(std::string_view bytes) { buf_.append(bytes); }

std::optional<std::string> FrameReader::next_line() {
    const auto nl = buf_.find('\n');
    if (nl == std::string::npos) return std::nullopt;
    std::string line = buf_.substr(0, nl);
    buf_.erase(0, nl + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::optional<Frame> FrameReader::next() {
    const auto nl = buf_.find('\n');
    if (nl == std::string::npos) return std::nullopt;
    std::string line = buf_.substr(0, nl);
    Frame f;
    if (line.rfind("D ", 0) == 0) {
        auto n = parse_int(std::string_view(line).substr(2));
        if (!n || *n < 0) throw transport("malformed data frame");
        const auto len = static_cast<std::size_t>(*n);
        if (buf_.size() < nl + 1 + len) return std::nullopt;
        f.kind = Frame::Kind::Data;
        f.data.assign(buf_.begin() + static_cast<std::ptrdiff_t>(nl + 1),
                      buf_.begin() + static_cast<std::ptrdiff_t>(nl + 1 + len));
        buf_.erase(0, nl + 1 + len);
        return f;
    }
    buf_.erase(0, nl + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("R ", 0) == 0 || line == "R") {
        f.kind = Frame::Kind::Row;
        f.text = line.size() > 2 ? line.substr(2) : std::string();
        f.fields = split_char(f.text, '\t');
    } else if (line == "OK" || line.rfind("OK ", 0) == 0) {
        f.kind = Frame::Kind::Ok;
        f.text = line.size() > 3 ? line.substr(3) : std::string();
    } else if (line.rfind("ERR ", 0) == 0) {
        f.kind = Frame::Kind::Err;
        const auto rest = line.substr(4);
        const auto sp = rest.find(' ');
        f.word = rest.substr(0, sp);
        f.text = sp == std::string::npos ? std::string() : rest.substr(sp + 1);
        f.code = errc_from_word(f.word);
    } else if (line.rfind("L ", 0) == 0) {
        f.kind = Frame::Kind::Line;
        f.text = line.substr(2);
    } else if (line.rfind("E ", 0) == 0) {
        f.kind = Frame::Kind::Event;
        f.text = line.substr(2);
        const auto tab = f.text.find('\t');
        f.fields = {f.text.substr(0, tab), tab == std::string::npos ? std::string() : f.text.substr(tab + 1)};
    } else if (line == "END") {
        f.kind = Frame::Kind::End;
    } else {
        throw transport("unexpected line from server: " + line);
    }
    return f;
}

std::unique_ptr<ControlClient> ControlClient::connect(const std::string& address, const std::string& principal,
                                                      const auth::KeyPair& key) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("server address must be host:port: " + address);
    std::string host = address.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[') host = host.substr(1, host.size() - 2);
    if (host.empty()) host = "127.0.0.1";
    const std::string port = address.substr(colon + 1);

    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw transport("cannot resolve " + address);
    }
    int fd = -1;
    for (auto* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw transport("cannot connect to " + address + ": " + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

    std::unique_ptr<ControlClient> c(new ControlClient(fd));
    constexpr Duration kHandshake = 10s;
    const auto deadline = std::chrono::steady_clock::now() + kHandshake;
    std::optional<std::string> chal_line;
    while (!(chal_line = c->reader_.next_line())) {
        if (std::chrono::steady_clock::now() >= deadline) throw transport("no challenge from server");
        c->fill(100ms);
    }
    const auto ch = auth::parse_challenge(*chal_line);
    if (!ch) throw transport("malformed challenge from server");
    c->server_id_ = ch->server_id;
    c->send_line(auth::format_auth(auth::sign_challenge(key, principal, *ch)));
    auto reply = c->next(kHandshake);
    if (!reply) throw transport("no handshake reply from server");
    if (reply->kind == Frame::Kind::Err) throw Error(reply->code, reply->word, reply->text);
    if (reply->kind != Frame::Kind::Ok) throw transport("unexpected handshake reply");
    return c;
}

ControlClient::~ControlClient() {
    if (fd_ >= 0) ::close(fd_);
}

bool ControlClient::fill(Duration timeout) {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r < 0 && errno != EINTR) throw transport(std::string("poll: ") + std::strerror(errno));
    if (r <= 0) return false;
    char buf[8192];
    const auto n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) throw transport("connection closed by server");
    reader_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    return true;
}

std::optional<Frame> ControlClient::next(Duration timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto f = reader_.next()) return f;
        const auto left = std::chrono::duration_cast<Duration>(deadline - std::chrono::steady_clock::now());
        if (left <= Duration::zero()) {
            // zero timeout still picks up whatever is already readable
            if (!fill(Duration::zero())) return std::nullopt;
            continue;
        }
        fill(left);
    }
}

void ControlClient::send_line(const std::string& line) { send_raw(line + "\n"); }

void ControlClient::send_raw(std::string_view rest) {
    while (!rest.empty()) {
        const auto n = ::send(fd_, rest.data(), rest.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw transport(std::string("send: ") + std::strerror(errno));
        }
        rest.remove_prefix(static_cast<std::size_t>(n));
    }
}

void ControlClient::send_data(std::span<const std::uint8_t> bytes) {
    send_raw("D " + std::to_string(bytes.size()) + "\n" + std::string(bytes.begin(), bytes.end()));
}

Response ControlClient::request(const std::string& line) {
    send_line(line);
    Response r;
    for (;;) {
        auto f = next(3600s);
        if (!f) throw transport("timed out waiting for the server");
        switch (f->kind) {
        case Frame::Kind::Row:
            r.rows.push_back(std::move(f->fields));
            break;
        case Frame::Kind::Line:
            r.lines.push_back(std::move(f->text));
            break;
        case Frame::Kind::Ok:
            r.ok = true;
            r.text = std::move(f->text);
            return r;
        case Frame::Kind::Err:
            r.ok = false;
            r.code = f->code;
            r.word = std::move(f->word);
            r.text = std::move(f->text);
            return r;
        default:
            break;
        }
    }
}

} // namespace consrv::client
