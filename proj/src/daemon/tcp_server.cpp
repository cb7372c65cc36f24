// SPDX-License-Identifier: Apache-2.0
#include "daemon/tcp_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "common/error.hpp"
#include "common/text.hpp"
#include "daemon/control.hpp"
#include "daemon/daemon.hpp"

namespace consrv::daemon {

namespace {

constexpr int kPollMs = 20;

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN) {
                pollfd p{fd, POLLOUT, 0};
                ::poll(&p, 1, 100);
                continue;
            }
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

} // namespace

std::pair<std::string, int> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("address must be host:port: " + address);
    auto port = parse_int(address.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535) throw InvalidArgument("bad port in " + address);
    std::string host = address.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    return {host.empty() ? "127.0.0.1" : host, static_cast<int>(*port)};
}

TcpServer::TcpServer(Daemon& daemon, const std::string& address) : daemon_(daemon) {
    const auto [host, port] = split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        throw Error(Errc::Transport, "transport", "cannot resolve " + address);
    }
    listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (listen_fd_ < 0) {
        ::freeaddrinfo(res);
        throw Error(Errc::Transport, "transport", std::string("socket: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::freeaddrinfo(res);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(Errc::Transport, "transport", "cannot listen on " + address + ": " + why);
    }
    ::freeaddrinfo(res);
    sockaddr_storage bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    if (bound.ss_family == AF_INET) {
        port_ = ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
    } else {
        port_ = ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
    }
}

TcpServer::~TcpServer() {
    stop();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::start() {
    if (acceptor_.joinable()) return;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::stop() {
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    std::list<std::thread> workers;
    {
        std::lock_guard lk(mu_);
        workers.swap(workers_);
    }
    for (auto& t : workers) {
        if (t.joinable()) t.join();
    }
}

void TcpServer::accept_loop() {
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, kPollMs) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lk(mu_);
        workers_.emplace_back([this, fd] { serve(fd); });
    }
}

void TcpServer::serve(int fd) {
    try {
        ControlConnection conn(daemon_);
        bool alive = send_all(fd, conn.greeting());
        char buf[8192];
        while (alive && !stopping_ && !conn.closed()) {
            pollfd p{fd, POLLIN, 0};
            const int r = ::poll(&p, 1, kPollMs);
            std::string out;
            if (r > 0) {
                const auto n = ::recv(fd, buf, sizeof buf, 0);
                if (n <= 0) break;
                out = conn.on_input(std::string_view(buf, static_cast<std::size_t>(n)));
            }
            out += conn.poll();
            if (!out.empty()) alive = send_all(fd, out);
        }
        conn.shutdown();
    } catch (const std::exception&) {
        // a broken connection must not take the daemon down
    }
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
}

} // namespace consrv::daemon
