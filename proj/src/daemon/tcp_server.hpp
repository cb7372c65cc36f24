// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <list>
#include <mutex>
#include <string>
#include <thread>

namespace consrv::daemon {

class Daemon;

// "host:port" -> (host, port); port 0 picks an ephemeral port.
std::pair<std::string, int> split_address(const std::string& address);

// Accepts control connections and runs each on its own thread.
class TcpServer {
public:
    TcpServer(Daemon& daemon, const std::string& address);
    ~TcpServer();

    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    void start();
    void stop();
    int port() const { return port_; }

private:
    void accept_loop();
    void serve(int fd);

    Daemon& daemon_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex mu_;
    std::list<std::thread> workers_;
};

} // namespace consrv::daemon
