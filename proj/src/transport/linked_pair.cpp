// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <mutex>

#include "common/error.hpp"
#include "transport/endpoint.hpp"

namespace consrv::transport {

std::string port_label(int index) { return "ttyS" + std::to_string(index); }

namespace {

// Growable FIFO that keeps a read cursor instead of erasing from the front.
class ByteQueue {
public:
    bool empty() const { return head_ == buf_.size(); }
    std::size_t size() const { return buf_.size() - head_; }

    void push(std::span<const std::uint8_t> data) {
        if (head_ > 0 && head_ == buf_.size()) {
            buf_.clear();
            head_ = 0;
        }
        buf_.insert(buf_.end(), data.begin(), data.end());
    }

    Bytes pop(std::size_t max) {
        const std::size_t n = std::min(max, size());
        Bytes out(buf_.begin() + static_cast<std::ptrdiff_t>(head_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(head_ + n));
        head_ += n;
        if (head_ > 65536 && head_ * 2 > buf_.size()) {
            buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
            head_ = 0;
        }
        return out;
    }

private:
    Bytes buf_;
    std::size_t head_ = 0;
};

struct Cable {
    std::mutex mu;
    ByteQueue dir[2]; // dir[i]: bytes readable by side i
    bool closed[2] = {false, false};
};

class LinkedEndpoint final : public Endpoint {
public:
    LinkedEndpoint(std::shared_ptr<Cable> cable, int side, Clock& clock)
        : cable_(std::move(cable)), side_(side), clock_(clock) {}

    ~LinkedEndpoint() override { close(); }

    std::optional<Bytes> read_available(std::size_t max, Duration timeout) override {
        if (max == 0) {
            throw InvalidArgument("read_available: max must be >= 1");
        }
        if (auto got = try_read(max)) {
            return got;
        }
        if (timeout <= Duration::zero()) {
            return std::nullopt;
        }
        clock_.wait_for(timeout, [this] {
            std::lock_guard lk(cable_->mu);
            return !cable_->dir[side_].empty() || cable_->closed[0] || cable_->closed[1];
        });
        return try_read(max);
    }

    void write(std::span<const std::uint8_t> data) override {
        {
            std::lock_guard lk(cable_->mu);
            if (cable_->closed[side_] || cable_->closed[1 - side_]) {
                throw EndpointClosed();
            }
            cable_->dir[1 - side_].push(data);
        }
        clock_.notify();
    }

    void close() override {
        {
            std::lock_guard lk(cable_->mu);
            if (cable_->closed[side_]) {
                return;
            }
            cable_->closed[side_] = true;
        }
        clock_.notify();
    }

    bool is_open() const override {
        std::lock_guard lk(cable_->mu);
        return !cable_->closed[side_];
    }

private:
    std::optional<Bytes> try_read(std::size_t max) {
        std::lock_guard lk(cable_->mu);
        if (cable_->closed[side_]) {
            throw EndpointClosed();
        }
        auto& q = cable_->dir[side_];
        if (!q.empty()) {
            return q.pop(max);
        }
        if (cable_->closed[1 - side_]) {
            throw EndpointClosed();
        }
        return std::nullopt;
    }

    std::shared_ptr<Cable> cable_;
    int side_;
    Clock& clock_;
};

} // namespace

std::pair<EndpointPtr, EndpointPtr> create_linked_pair(Clock& clock) {
    auto cable = std::make_shared<Cable>();
    return {std::make_shared<LinkedEndpoint>(cable, 0, clock), std::make_shared<LinkedEndpoint>(cable, 1, clock)};
}

} // namespace consrv::transport
