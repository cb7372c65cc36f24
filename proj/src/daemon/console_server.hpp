// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "daemon/log_sink.hpp"
#include "registry/registry.hpp"
#include "relay/driver.hpp"
#include "reset/reset_service.hpp"
#include "transport/endpoint.hpp"

namespace consrv::daemon {

inline constexpr std::uint8_t kEnq = 0x05;
inline constexpr std::uint8_t kAck = 0x06;

struct ServerOptions {
    std::string server_id = "consrv01";
    std::size_t ring_size = 8192;
    std::size_t flush_bytes = 512;
    Duration flush_idle = 1s;
    Duration pump_period = 20ms;
    std::string escape = "~.";
    Duration probe_timeout = 2s;
    int detect_attempts = 3;
    Duration pulse_width = 1s;
    std::size_t session_queue_limit = 1 << 20;
    std::size_t subscription_queue_limit = 10000;
    std::size_t history_lines = 2000; // per host, for LOG queries
    std::optional<std::filesystem::path> report_dir;
};

enum class SessionMode { ReadWrite, ReadOnly };

// Fixed-capacity byte ring with monotone stream offsets.
class PortRing {
public:
    explicit PortRing(std::size_t capacity);
    void append(std::span<const std::uint8_t> bytes);
    std::uint64_t begin_offset() const { return end_ - size_; }
    std::uint64_t end_offset() const { return end_; }
    // Bytes from max(from, begin_offset()) to the end.
    Bytes since(std::uint64_t from) const;
    Bytes contents() const { return since(begin_offset()); }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t size_ = 0;
    std::uint64_t end_ = 0;
};

class ConsoleServer;

class Session {
public:
    std::uint64_t id() const { return id_; }
    const std::string& principal() const { return principal_; }
    const std::string& host() const { return host_; }
    SessionMode mode() const { return mode_; }
    TimePoint attached_at() const { return attached_at_; }
    std::uint64_t decision_id() const { return decision_id_; }
    // Stream offset of the first byte this session received.
    std::uint64_t start_offset() const { return start_offset_; }

    // Drains bytes queued for this session (ring replay first, then live).
    Bytes take_output();
    bool active() const;
    bool lagged() const;
    std::uint64_t delivered() const;

    // Keystrokes; ReadWrite only. "~." at line start detaches instead.
    void send(std::span<const std::uint8_t> bytes);
    void send(std::string_view s) {
        send(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    void detach();

private:
    friend class ConsoleServer;
    Session() = default;
    void push(std::span<const std::uint8_t> bytes, std::size_t limit);
    void end();

    ConsoleServer* server_ = nullptr;
    std::uint64_t id_ = 0;
    std::string principal_;
    std::string host_;
    int port_ = 0;
    SessionMode mode_ = SessionMode::ReadOnly;
    TimePoint attached_at_{};
    std::uint64_t decision_id_ = 0;
    std::uint64_t start_offset_ = 0;

    mutable std::mutex mu_;
    Bytes queue_;
    bool active_ = true;
    bool lagged_ = false;
    std::uint64_t delivered_ = 0;
    bool at_line_start_ = true;
    std::size_t escape_matched_ = 0;
};

using SessionPtr = std::shared_ptr<Session>;

struct StreamEvent {
    TimePoint timestamp{};
    std::string line; // formatted log line
};

// Pattern subscription or log follower.
class Subscription {
public:
    std::uint64_t id() const { return id_; }
    const std::string& host() const { return host_; }
    std::vector<StreamEvent> take();
    bool active() const;
    bool lagged() const;
    void cancel();

private:
    friend class ConsoleServer;
    Subscription() = default;
    bool matches(const LogLine& line, const std::string& formatted) const;
    void push(StreamEvent ev, std::size_t limit);

    std::uint64_t id_ = 0;
    std::string principal_;
    std::string host_;
    bool follow_all_ = false;
    std::optional<std::regex> regex_;
    std::string needle_;

    mutable std::mutex mu_;
    std::deque<StreamEvent> events_;
    bool active_ = true;
    bool lagged_ = false;
};

using SubscriptionPtr = std::shared_ptr<Subscription>;

struct AuthorizationDecision {
    std::uint64_t id = 0;
    TimePoint at{};
    std::string principal;
    registry::Action action = registry::Action::ConsoleReadOnly;
    std::string host;
    bool allowed = false;
};

struct SessionRecord {
    std::uint64_t session_id = 0;
    std::uint64_t decision_id = 0;
    std::string principal;
    std::string host;
    SessionMode mode = SessionMode::ReadOnly;
    std::uint64_t delivered = 0;
    bool active = false;
};

struct PortInfo {
    int index = 0;
    std::string label;
    std::string host;
    bool open = false;
    std::uint64_t bytes_in = 0;
    std::optional<std::string> writer;
    std::size_t readers = 0;
};

struct OperationalAlarm {
    TimePoint at{};
    std::string source;
    std::string message;
};

// Owns every console port of one server: pumps bytes into the log, the ring
// and attached sessions; brokers sessions; runs detection; drives resets.
// Must outlive every Session and Subscription it hands out.
class ConsoleServer final : public reset::ResetExecutor {
public:
    using OutputObserver = std::function<void(const std::string& host, TimePoint at)>;

    ConsoleServer(ServerOptions options, registry::RegistryStore& store, Clock& clock);
    ~ConsoleServer() override;

    const ServerOptions& options() const { return options_; }
    const std::string& server_id() const { return options_.server_id; }

    void add_port(int index, transport::EndpointPtr endpoint);
    void add_chain(const std::string& device, transport::EndpointPtr endpoint);
    void add_sink(std::shared_ptr<LogSink> sink);
    void set_output_observer(OutputObserver obs);

    void start();
    void stop();
    // One pass over all ports; normally called from the pump ticker.
    void pump();

    SessionPtr attach(const std::string& principal, const std::string& host, SessionMode mode);
    SubscriptionPtr subscribe_pattern(const std::string& principal, const std::string& host,
                                      const std::string& pattern);
    // Live log lines of host; backlog receives the history since `since`,
    // taken atomically with the subscription so nothing is lost or repeated.
    SubscriptionPtr follow_log(const std::string& principal, const std::string& host,
                               std::optional<TimePoint> since, std::vector<std::string>& backlog);
    std::vector<std::string> log_history(const std::string& principal, const std::string& host,
                                         std::optional<TimePoint> since = std::nullopt);

    registry::DetectionReport run_detection(const std::string& principal);
    // Single-port ENQ for the watchdog; the answerback counts as output.
    void send_probe(const std::string& host);
    relay::PulseOutcome execute_reset(const std::string& host) override;
    void raise_alarm(const std::string& host, const std::string& cause);

    std::vector<PortInfo> ports() const;
    std::vector<SessionRecord> sessions(bool active_only = true) const;
    std::vector<AuthorizationDecision> decisions() const;
    std::vector<OperationalAlarm> operational_alarms() const;
    std::uint64_t sink_failures() const;

private:
    friend class Session;

    struct Port {
        int index = 0;
        std::string label;
        transport::EndpointPtr endpoint;
        bool open = true;
        PortRing ring;
        Bytes line;
        std::optional<TimePoint> line_started;
        TimePoint last_byte_at{};
        std::uint64_t bytes_in = 0;
        std::vector<SessionPtr> sessions;
        SessionPtr writer;
        // answerback capture
        int expect_answers = 0;
        TimePoint probe_deadline{};
        std::optional<Bytes> capture;
        std::optional<std::string> answered;

        Port(int i, transport::EndpointPtr ep, std::size_t ring_size)
            : index(i), label(transport::port_label(i)), endpoint(std::move(ep)), ring(ring_size) {}
    };

    struct Chain {
        transport::EndpointPtr endpoint;
        std::unique_ptr<relay::RelayDriver> driver;
    };

    void refresh_names_locked() const;
    std::string host_for_locked(const Port& p) const;
    void ingest_locked(Port& p, const Bytes& chunk, TimePoint now, std::vector<std::string>& outputs);
    Bytes filter_answerback_locked(Port& p, const Bytes& chunk, TimePoint now);
    void flush_line_locked(Port& p, TimePoint now);
    void emit_locked(const LogLine& line);
    void fan_out_locked(Port& p, const Bytes& bytes);
    void end_capture_locked(Port& p);

    AuthorizationDecision decide_locked(const std::string& principal, registry::Action action,
                                        const std::string& host, const registry::Registry& reg);
    Port& port_for_host_locked(const std::string& host, const registry::Registry& reg);
    void write_port(int index, std::span<const std::uint8_t> bytes);
    void detach_session(Session& s);
    void probe_locked(Port& p, TimePoint now);
    std::vector<std::string> history_locked(const std::string& host, std::optional<TimePoint> since) const;

    ServerOptions options_;
    registry::RegistryStore& store_;
    Clock& clock_;

    mutable std::mutex mu_;
    std::map<int, Port> ports_;
    std::map<std::string, Chain> chains_;
    std::vector<std::shared_ptr<LogSink>> sinks_;
    OutputObserver observer_;

    mutable std::shared_ptr<const registry::Registry> names_reg_;
    mutable std::map<int, std::string> names_;

    std::uint64_t next_session_ = 1;
    std::uint64_t next_decision_ = 1;
    std::vector<AuthorizationDecision> decisions_;
    std::vector<SessionPtr> all_sessions_;
    std::vector<SubscriptionPtr> subscriptions_;
    std::map<std::string, std::deque<std::pair<TimePoint, std::string>>> history_;
    std::vector<OperationalAlarm> op_alarms_;
    std::uint64_t sink_failures_ = 0;
    bool sink_alarm_raised_ = false;

    std::unique_ptr<Ticker> ticker_;
};

} // namespace consrv::daemon
