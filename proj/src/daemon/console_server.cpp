// SPDX-License-Identifier: Apache-2.0
#include "daemon/console_server.hpp"

#include <algorithm>
#include <cctype>

#include "common/error.hpp"

namespace consrv::daemon {

namespace {

constexpr std::string_view kAnswerPrefix = "\x06ID:";
constexpr std::size_t kMaxHostname = 64;
constexpr std::size_t kReadChunk = 4096;

bool hostname_char(std::uint8_t b) { return std::isalnum(b) || b == '-' || b == '.' || b == '_'; }

} // namespace

PortRing::PortRing(std::size_t capacity) : buf_(std::max<std::size_t>(capacity, 1)) {}

void PortRing::append(std::span<const std::uint8_t> bytes) {
    const std::size_t cap = buf_.size();
    if (bytes.size() > cap) {
        // bytes that would be overwritten at once still advance the offset
        end_ += bytes.size() - cap;
        bytes = bytes.subspan(bytes.size() - cap);
    }
    for (auto b : bytes) {
        buf_[end_ % cap] = b;
        ++end_;
    }
    size_ = static_cast<std::size_t>(std::min<std::uint64_t>(end_, cap));
}

Bytes PortRing::since(std::uint64_t from) const {
    const std::size_t cap = buf_.size();
    from = std::max(from, begin_offset());
    Bytes out;
    out.reserve(static_cast<std::size_t>(end_ - std::min(from, end_)));
    for (auto o = from; o < end_; ++o) out.push_back(buf_[o % cap]);
    return out;
}

// Session

Bytes Session::take_output() {
    std::lock_guard lk(mu_);
    Bytes out;
    out.swap(queue_);
    return out;
}

bool Session::active() const {
    std::lock_guard lk(mu_);
    return active_;
}

bool Session::lagged() const {
    std::lock_guard lk(mu_);
    return lagged_;
}

std::uint64_t Session::delivered() const {
    std::lock_guard lk(mu_);
    return delivered_;
}

void Session::push(std::span<const std::uint8_t> bytes, std::size_t limit) {
    std::lock_guard lk(mu_);
    if (!active_) return;
    if (queue_.size() + bytes.size() > limit) {
        lagged_ = true;
        const std::size_t room = limit > queue_.size() ? limit - queue_.size() : 0;
        bytes = bytes.subspan(0, std::min(room, bytes.size()));
    }
    queue_.insert(queue_.end(), bytes.begin(), bytes.end());
    delivered_ += bytes.size();
}

void Session::end() {
    std::lock_guard lk(mu_);
    active_ = false;
}

void Session::send(std::span<const std::uint8_t> bytes) {
    if (mode_ != SessionMode::ReadWrite) throw Denied("session is read-only");
    const std::string& esc = server_->options_.escape;
    Bytes out;
    bool detach_now = false;
    {
        std::lock_guard lk(mu_);
        if (!active_) throw Error(Errc::Transport, "session-closed", "session is closed");
        for (auto b : bytes) {
            if (!esc.empty() && (escape_matched_ > 0 || at_line_start_) &&
                b == static_cast<std::uint8_t>(esc[escape_matched_])) {
                if (++escape_matched_ == esc.size()) {
                    detach_now = true;
                    break;
                }
                continue;
            }
            if (escape_matched_ > 0) {
                out.insert(out.end(), esc.begin(), esc.begin() + static_cast<std::ptrdiff_t>(escape_matched_));
                escape_matched_ = 0;
            }
            out.push_back(b);
            at_line_start_ = b == '\r' || b == '\n';
        }
    }
    if (!out.empty()) server_->write_port(port_, out);
    if (detach_now) detach();
}

void Session::detach() { server_->detach_session(*this); }

// Subscription

std::vector<StreamEvent> Subscription::take() {
    std::lock_guard lk(mu_);
    std::vector<StreamEvent> out(std::make_move_iterator(events_.begin()), std::make_move_iterator(events_.end()));
    events_.clear();
    return out;
}

bool Subscription::active() const {
    std::lock_guard lk(mu_);
    return active_;
}

bool Subscription::lagged() const {
    std::lock_guard lk(mu_);
    return lagged_;
}

void Subscription::cancel() {
    std::lock_guard lk(mu_);
    active_ = false;
}

bool Subscription::matches(const LogLine& line, const std::string&) const {
    if (follow_all_) return true;
    const std::string text = to_string(line.payload);
    if (regex_) return std::regex_search(text, *regex_);
    return text.find(needle_) != std::string::npos;
}

void Subscription::push(StreamEvent ev, std::size_t limit) {
    std::lock_guard lk(mu_);
    if (!active_) return;
    if (events_.size() >= limit) {
        lagged_ = true;
        return;
    }
    events_.push_back(std::move(ev));
}

// ConsoleServer

ConsoleServer::ConsoleServer(ServerOptions options, registry::RegistryStore& store, Clock& clock)
    : options_(std::move(options)), store_(store), clock_(clock) {
    if (options_.flush_bytes == 0 || options_.ring_size == 0) {
        throw InvalidArgument("flush size and ring size must be positive");
    }
}

ConsoleServer::~ConsoleServer() {
    stop();
    std::lock_guard lk(mu_);
    for (auto& s : all_sessions_) s->end();
    for (auto& s : subscriptions_) s->cancel();
}

void ConsoleServer::add_port(int index, transport::EndpointPtr endpoint) {
    std::lock_guard lk(mu_);
    if (ports_.count(index)) throw InvalidArgument("port " + std::to_string(index) + " added twice");
    ports_.emplace(std::piecewise_construct, std::forward_as_tuple(index),
                   std::forward_as_tuple(index, std::move(endpoint), options_.ring_size));
    names_reg_.reset();
}

void ConsoleServer::add_chain(const std::string& device, transport::EndpointPtr endpoint) {
    std::lock_guard lk(mu_);
    Chain c;
    c.endpoint = endpoint;
    c.driver = std::make_unique<relay::RelayDriver>(std::move(endpoint), clock_);
    chains_[device] = std::move(c);
}

void ConsoleServer::add_sink(std::shared_ptr<LogSink> sink) {
    std::lock_guard lk(mu_);
    sinks_.push_back(std::move(sink));
}

void ConsoleServer::set_output_observer(OutputObserver obs) {
    std::lock_guard lk(mu_);
    observer_ = std::move(obs);
}

void ConsoleServer::start() {
    if (ticker_) return;
    ticker_ = std::make_unique<Ticker>(clock_, options_.pump_period, [this] { pump(); });
}

void ConsoleServer::stop() { ticker_.reset(); }

void ConsoleServer::refresh_names_locked() const {
    auto reg = store_.get();
    if (reg == names_reg_) return;
    names_.clear();
    for (const auto& [index, port] : ports_) {
        if (auto h = reg->host_at(options_.server_id, index)) names_[index] = *h;
    }
    names_reg_ = std::move(reg);
}

std::string ConsoleServer::host_for_locked(const Port& p) const {
    if (auto it = names_.find(p.index); it != names_.end()) return it->second;
    return "unmapped-" + options_.server_id + "-" + std::to_string(p.index);
}

void ConsoleServer::pump() {
    std::vector<std::string> outputs;
    OutputObserver obs;
    TimePoint now;
    {
        std::lock_guard lk(mu_);
        refresh_names_locked();
        now = clock_.now();
        for (auto& [index, p] : ports_) {
            if (!p.open) continue;
            try {
                while (auto got = p.endpoint->read_available(kReadChunk, Duration::zero())) {
                    ingest_locked(p, *got, now, outputs);
                }
            } catch (const EndpointClosed&) {
                p.open = false;
                flush_line_locked(p, now);
                for (auto& s : p.sessions) s->end();
                p.sessions.clear();
                p.writer.reset();
                op_alarms_.push_back({now, p.label, "console endpoint closed"});
                continue;
            }
            if (!p.line.empty() && now - p.last_byte_at >= options_.flush_idle) flush_line_locked(p, now);
            if (p.expect_answers > 0 && now >= p.probe_deadline) {
                p.expect_answers = 0;
                end_capture_locked(p);
            }
        }
        obs = observer_;
    }
    if (obs) {
        for (const auto& h : outputs) obs(h, now);
    }
}

void ConsoleServer::ingest_locked(Port& p, const Bytes& chunk, TimePoint now, std::vector<std::string>& outputs) {
    p.bytes_in += chunk.size();
    p.last_byte_at = now;
    for (auto b : chunk) {
        if (p.line.empty()) p.line_started = now;
        p.line.push_back(b);
        if (b == '\n' || p.line.size() >= options_.flush_bytes) flush_line_locked(p, now);
    }
    const Bytes fan = filter_answerback_locked(p, chunk, now);
    if (!fan.empty()) fan_out_locked(p, fan);
    outputs.push_back(host_for_locked(p));
}

Bytes ConsoleServer::filter_answerback_locked(Port& p, const Bytes& chunk, TimePoint) {
    if (p.expect_answers == 0 && !p.capture) return chunk;
    Bytes out;
    for (auto b : chunk) {
        if (!p.capture) {
            if (b == kAck && p.expect_answers > 0) {
                p.capture = Bytes{b};
            } else {
                out.push_back(b);
            }
            continue;
        }
        auto& c = *p.capture;
        c.push_back(b);
        const std::size_t n = c.size();
        bool ok = false;
        if (n <= kAnswerPrefix.size()) {
            ok = b == static_cast<std::uint8_t>(kAnswerPrefix[n - 1]);
        } else if (c[n - 2] == '\r') {
            if (b == '\n' && n > kAnswerPrefix.size() + 2) {
                p.answered = std::string(c.begin() + static_cast<std::ptrdiff_t>(kAnswerPrefix.size()), c.end() - 2);
                if (p.expect_answers > 0) --p.expect_answers;
                p.capture.reset();
                continue;
            }
        } else if (b == '\r') {
            ok = n > kAnswerPrefix.size() + 1;
        } else {
            ok = hostname_char(b) && n - kAnswerPrefix.size() <= kMaxHostname;
        }
        if (ok) continue;
        // Not an answerback after all: hand the held bytes on, then look at
        // the current byte afresh.
        out.insert(out.end(), c.begin(), c.end() - 1);
        p.capture.reset();
        if (b == kAck && p.expect_answers > 0) {
            p.capture = Bytes{b};
        } else {
            out.push_back(b);
        }
    }
    return out;
}

void ConsoleServer::end_capture_locked(Port& p) {
    if (!p.capture) return;
    Bytes held = std::move(*p.capture);
    p.capture.reset();
    fan_out_locked(p, held);
}

void ConsoleServer::fan_out_locked(Port& p, const Bytes& bytes) {
    p.ring.append(bytes);
    for (auto& s : p.sessions) s->push(bytes, options_.session_queue_limit);
}

void ConsoleServer::flush_line_locked(Port& p, TimePoint now) {
    if (p.line.empty()) return;
    LogLine l;
    l.timestamp = p.line_started.value_or(now);
    l.host = host_for_locked(p);
    l.port_label = p.label;
    const auto n = p.line.size();
    if (n >= 2 && p.line[n - 2] == '\r' && p.line[n - 1] == '\n') {
        l.payload.assign(p.line.begin(), p.line.end() - 2);
        l.crlf = true;
    } else {
        l.payload = std::move(p.line);
        l.crlf = false;
    }
    p.line.clear();
    p.line_started.reset();
    emit_locked(l);
}

void ConsoleServer::emit_locked(const LogLine& line) {
    const std::string formatted = format_log_line(line);
    for (auto& sink : sinks_) {
        try {
            sink->write(line, formatted);
        } catch (const std::exception& e) {
            ++sink_failures_;
            if (!sink_alarm_raised_) {
                sink_alarm_raised_ = true;
                op_alarms_.push_back({clock_.now(), "log-sink", e.what()});
            }
        }
    }
    auto& hist = history_[line.host];
    hist.emplace_back(line.timestamp, formatted);
    while (hist.size() > options_.history_lines) hist.pop_front();

    bool stale = false;
    for (auto& sub : subscriptions_) {
        if (!sub->active()) {
            stale = true;
            continue;
        }
        if (sub->host() == line.host && sub->matches(line, formatted)) {
            sub->push(StreamEvent{line.timestamp, formatted}, options_.subscription_queue_limit);
        }
    }
    if (stale) std::erase_if(subscriptions_, [](const SubscriptionPtr& s) { return !s->active(); });
}

AuthorizationDecision ConsoleServer::decide_locked(const std::string& principal, registry::Action action,
                                                   const std::string& host, const registry::Registry& reg) {
    AuthorizationDecision d;
    d.id = next_decision_++;
    d.at = clock_.now();
    d.principal = principal;
    d.action = action;
    d.host = host;
    d.allowed = reg.authorize(principal, action, host);
    decisions_.push_back(d);
    return d;
}

ConsoleServer::Port& ConsoleServer::port_for_host_locked(const std::string& host, const registry::Registry& reg) {
    const auto c = reg.lookup_console(host);
    if (c.server_id != options_.server_id) throw UnknownHost(host);
    auto it = ports_.find(c.port);
    if (it == ports_.end()) throw UnknownHost(host);
    return it->second;
}

SessionPtr ConsoleServer::attach(const std::string& principal, const std::string& host, SessionMode mode) {
    const auto reg = store_.get();
    std::lock_guard lk(mu_);
    Port& p = port_for_host_locked(host, *reg);
    const auto action = mode == SessionMode::ReadWrite ? registry::Action::Console : registry::Action::ConsoleReadOnly;
    const auto d = decide_locked(principal, action, host, *reg);
    if (!d.allowed) {
        throw Denied(principal + " may not " + std::string(registry::action_token(action)) + " " + host);
    }
    if (!p.open) throw Error(Errc::Transport, "endpoint-closed", "console port of " + host + " is closed");
    if (mode == SessionMode::ReadWrite && p.writer && p.writer->active()) throw WriterBusy(p.writer->principal());

    auto s = std::shared_ptr<Session>(new Session());
    s->server_ = this;
    s->id_ = next_session_++;
    s->principal_ = principal;
    s->host_ = host;
    s->port_ = p.index;
    s->mode_ = mode;
    s->attached_at_ = clock_.now();
    s->decision_id_ = d.id;
    s->start_offset_ = p.ring.begin_offset();
    const Bytes replay = p.ring.contents();
    s->push(replay, std::max(options_.session_queue_limit, replay.size()));
    p.sessions.push_back(s);
    if (mode == SessionMode::ReadWrite) p.writer = s;
    all_sessions_.push_back(s);
    return s;
}

void ConsoleServer::write_port(int index, std::span<const std::uint8_t> bytes) {
    transport::EndpointPtr ep;
    {
        std::lock_guard lk(mu_);
        auto it = ports_.find(index);
        if (it == ports_.end() || !it->second.open) throw EndpointClosed();
        ep = it->second.endpoint;
    }
    ep->write(bytes);
}

void ConsoleServer::detach_session(Session& s) {
    std::lock_guard lk(mu_);
    if (auto it = ports_.find(s.port_); it != ports_.end()) {
        auto& p = it->second;
        std::erase_if(p.sessions, [&](const SessionPtr& x) { return x.get() == &s; });
        if (p.writer.get() == &s) p.writer.reset();
    }
    s.end();
}

SubscriptionPtr ConsoleServer::subscribe_pattern(const std::string& principal, const std::string& host,
                                                 const std::string& pattern) {
    if (pattern.empty()) throw BadPattern("empty pattern");
    auto sub = std::shared_ptr<Subscription>(new Subscription());
    if (pattern.rfind("re:", 0) == 0) {
        try {
            sub->regex_.emplace(pattern.substr(3), std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw BadPattern(e.what());
        }
    } else {
        sub->needle_ = pattern;
    }
    const auto reg = store_.get();
    std::lock_guard lk(mu_);
    port_for_host_locked(host, *reg);
    const auto d = decide_locked(principal, registry::Action::ConsoleReadOnly, host, *reg);
    if (!d.allowed) throw Denied(principal + " may not read " + host);
    sub->id_ = next_session_++;
    sub->principal_ = principal;
    sub->host_ = host;
    subscriptions_.push_back(sub);
    return sub;
}

SubscriptionPtr ConsoleServer::follow_log(const std::string& principal, const std::string& host,
                                          std::optional<TimePoint> since, std::vector<std::string>& backlog) {
    auto sub = std::shared_ptr<Subscription>(new Subscription());
    sub->follow_all_ = true;
    const auto reg = store_.get();
    std::lock_guard lk(mu_);
    port_for_host_locked(host, *reg);
    const auto d = decide_locked(principal, registry::Action::ConsoleReadOnly, host, *reg);
    if (!d.allowed) throw Denied(principal + " may not read " + host);
    sub->id_ = next_session_++;
    sub->principal_ = principal;
    sub->host_ = host;
    subscriptions_.push_back(sub);
    backlog = history_locked(host, since);
    return sub;
}

std::vector<std::string> ConsoleServer::history_locked(const std::string& host, std::optional<TimePoint> since) const {
    std::vector<std::string> out;
    if (auto it = history_.find(host); it != history_.end()) {
        for (const auto& [ts, text] : it->second) {
            if (!since || ts >= *since) out.push_back(text);
        }
    }
    return out;
}

std::vector<std::string> ConsoleServer::log_history(const std::string& principal, const std::string& host,
                                                    std::optional<TimePoint> since) {
    const auto reg = store_.get();
    std::lock_guard lk(mu_);
    port_for_host_locked(host, *reg);
    const auto d = decide_locked(principal, registry::Action::ConsoleReadOnly, host, *reg);
    if (!d.allowed) throw Denied(principal + " may not read " + host);
    return history_locked(host, since);
}

void ConsoleServer::probe_locked(Port& p, TimePoint now) {
    static constexpr std::uint8_t enq[1] = {kEnq};
    try {
        p.endpoint->write(std::span<const std::uint8_t>(enq, 1));
    } catch (const EndpointClosed&) {
        return;
    }
    ++p.expect_answers;
    p.probe_deadline = now + options_.probe_timeout;
}

registry::DetectionReport ConsoleServer::run_detection(const std::string& principal) {
    {
        const auto reg = store_.get();
        std::lock_guard lk(mu_);
        const auto d = decide_locked(principal, registry::Action::Admin, "*", *reg);
        if (!reg->is_admin(principal)) throw Denied("detection requires admin");
        (void)d;
        for (auto& [i, p] : ports_) p.answered.reset();
    }
    for (int attempt = 0; attempt < options_.detect_attempts; ++attempt) {
        std::vector<int> pending;
        {
            std::lock_guard lk(mu_);
            const auto now = clock_.now();
            for (auto& [i, p] : ports_) {
                if (p.open && !p.answered) {
                    probe_locked(p, now);
                    pending.push_back(i);
                }
            }
        }
        if (pending.empty()) break;
        clock_.wait_for(options_.probe_timeout, [&] {
            std::lock_guard lk(mu_);
            return std::all_of(pending.begin(), pending.end(), [&](int i) {
                const auto& p = ports_.at(i);
                return p.answered.has_value() || !p.open;
            });
        });
    }
    registry::DetectionReport report;
    report.server_id = options_.server_id;
    report.generated_at = clock_.now();
    {
        std::lock_guard lk(mu_);
        for (const auto& [i, p] : ports_) report.entries.push_back({i, p.answered});
    }
    if (options_.report_dir) {
        registry::atomic_write(*options_.report_dir / ("detect-" + options_.server_id + ".report"),
                               registry::format_report(report));
    }
    return report;
}

void ConsoleServer::send_probe(const std::string& host) {
    const auto reg = store_.get();
    std::lock_guard lk(mu_);
    Port& p = port_for_host_locked(host, *reg);
    if (p.open) probe_locked(p, clock_.now());
}

relay::PulseOutcome ConsoleServer::execute_reset(const std::string& host) {
    const auto reg = store_.get();
    const auto wiring = reg->lookup_reset(host);
    if (wiring.server_id != options_.server_id) {
        throw Error(Errc::NotFound, "no-reset-wiring", host + " is wired to server " + wiring.server_id);
    }
    relay::RelayDriver* driver = nullptr;
    {
        std::lock_guard lk(mu_);
        auto it = chains_.find(wiring.device);
        if (it == chains_.end()) throw Error(Errc::NotFound, "no-reset-wiring", "no relay chain " + wiring.device);
        driver = it->second.driver.get();
    }
    return driver->pulse(wiring.address, options_.pulse_width);
}

void ConsoleServer::raise_alarm(const std::string& host, const std::string& cause) {
    std::lock_guard lk(mu_);
    LogLine l;
    l.timestamp = clock_.now();
    l.host = host;
    l.port_label = "alarm";
    l.payload = to_bytes("ALARM " + cause);
    l.crlf = true;
    emit_locked(l);
}

std::vector<PortInfo> ConsoleServer::ports() const {
    std::lock_guard lk(mu_);
    refresh_names_locked();
    std::vector<PortInfo> out;
    for (const auto& [i, p] : ports_) {
        PortInfo info;
        info.index = i;
        info.label = p.label;
        info.host = host_for_locked(p);
        info.open = p.open;
        info.bytes_in = p.bytes_in;
        if (p.writer && p.writer->active()) info.writer = p.writer->principal();
        info.readers = p.sessions.size();
        out.push_back(std::move(info));
    }
    return out;
}

std::vector<SessionRecord> ConsoleServer::sessions(bool active_only) const {
    std::lock_guard lk(mu_);
    std::vector<SessionRecord> out;
    for (const auto& s : all_sessions_) {
        const bool active = s->active();
        if (active_only && !active) continue;
        out.push_back({s->id(), s->decision_id(), s->principal(), s->host(), s->mode(), s->delivered(), active});
    }
    return out;
}

std::vector<AuthorizationDecision> ConsoleServer::decisions() const {
    std::lock_guard lk(mu_);
    return decisions_;
}

std::vector<OperationalAlarm> ConsoleServer::operational_alarms() const {
    std::lock_guard lk(mu_);
    return op_alarms_;
}

std::uint64_t ConsoleServer::sink_failures() const {
    std::lock_guard lk(mu_);
    return sink_failures_;
}

} // namespace consrv::daemon
