// SPDX-License-Identifier: Apache-2.0
// Thin backend for real character devices and named pipes.
#include <fcntl.h>
#include <poll.h>
#include <sys/stat.h>
#include <termios.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <set>

#include "common/error.hpp"
#include "transport/endpoint.hpp"

namespace consrv::transport {

namespace {

std::mutex g_open_mu;
std::set<std::string> g_open_paths;

std::string canonical_key(const std::string& path) {
    std::error_code ec;
    auto canon = std::filesystem::canonical(path, ec);
    return ec ? path : canon.string();
}

class DeviceEndpoint final : public Endpoint {
public:
    DeviceEndpoint(int fd, std::string key) : fd_(fd), key_(std::move(key)) {}
    ~DeviceEndpoint() override { close(); }

    std::optional<Bytes> read_available(std::size_t max, Duration timeout) override {
        if (max == 0) {
            throw InvalidArgument("read_available: max must be >= 1");
        }
        std::lock_guard lk(mu_);
        if (fd_ < 0) {
            throw EndpointClosed();
        }
        pollfd pfd{fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::max<Duration::rep>(timeout.count(), 0)));
        if (rc == 0) {
            return std::nullopt;
        }
        if (rc < 0) {
            if (errno == EINTR) return std::nullopt;
            throw EndpointClosed();
        }
        Bytes buf(max);
        const ssize_t n = ::read(fd_, buf.data(), max);
        if (n > 0) {
            buf.resize(static_cast<std::size_t>(n));
            return buf;
        }
        if (n < 0 && (errno == EAGAIN || errno == EINTR)) {
            return std::nullopt;
        }
        throw EndpointClosed();
    }

    void write(std::span<const std::uint8_t> data) override {
        std::size_t done = 0;
        while (done < data.size()) {
            const int fd = fd_;
            if (fd < 0) {
                throw EndpointClosed();
            }
            const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
            if (n > 0) {
                done += static_cast<std::size_t>(n);
                continue;
            }
            if (n < 0 && (errno == EAGAIN || errno == EINTR)) {
                pollfd pfd{fd, POLLOUT, 0};
                ::poll(&pfd, 1, 100);
                continue;
            }
            throw EndpointClosed();
        }
    }

    void close() override {
        std::lock_guard lk(mu_);
        if (fd_ < 0) {
            return;
        }
        ::close(fd_);
        fd_ = -1;
        std::lock_guard g(g_open_mu);
        g_open_paths.erase(key_);
    }

    bool is_open() const override { return fd_ >= 0; }

private:
    std::mutex mu_;
    std::atomic<int> fd_;
    std::string key_;
};

} // namespace

EndpointPtr open_device(const std::string& path) {
    const std::string key = canonical_key(path);
    {
        std::lock_guard g(g_open_mu);
        if (g_open_paths.count(key)) {
            throw DeviceUnavailable(path, "already open");
        }
        g_open_paths.insert(key);
    }
    const int fd = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK | O_CLOEXEC);
    if (fd < 0) {
        const std::string why = std::strerror(errno);
        std::lock_guard g(g_open_mu);
        g_open_paths.erase(key);
        throw DeviceUnavailable(path, why);
    }
    if (::isatty(fd)) {
        termios tio{};
        if (::tcgetattr(fd, &tio) == 0) {
            ::cfmakeraw(&tio);
            tio.c_iflag &= ~static_cast<tcflag_t>(IXON | IXOFF | IXANY);
            ::tcsetattr(fd, TCSANOW, &tio);
        }
    }
    return std::make_shared<DeviceEndpoint>(fd, key);
}

} // namespace consrv::transport
