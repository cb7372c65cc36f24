// SPDX-License-Identifier: Apache-2.0
#include "daemon/log_sink.hpp"

#include <syslog.h>

#include "common/error.hpp"

namespace consrv::daemon {

std::string format_log_line(const LogLine& line) {
    std::string out = format_rfc3339(line.timestamp);
    out += ' ';
    out += line.host;
    out += ' ';
    out += line.port_label;
    out += ' ';
    out += escape_payload(line.payload);
    if (!line.crlf) out += '\\';
    return out;
}

std::optional<LogLine> parse_log_line(std::string_view text) {
    LogLine l;
    std::string_view rest = text;
    std::string_view parts[3];
    for (auto& p : parts) {
        const auto sp = rest.find(' ');
        if (sp == std::string_view::npos) return std::nullopt;
        p = rest.substr(0, sp);
        rest.remove_prefix(sp + 1);
    }
    auto ts = parse_rfc3339(parts[0]);
    if (!ts || parts[1].empty() || parts[2].empty()) return std::nullopt;
    l.timestamp = *ts;
    l.host = parts[1];
    l.port_label = parts[2];
    // A trailing backslash that is not part of an escaped "\\" pair marks a
    // line without CR LF.
    std::size_t backslashes = 0;
    for (auto i = rest.size(); i > 0 && rest[i - 1] == '\\'; --i) ++backslashes;
    l.crlf = backslashes % 2 == 0;
    if (!l.crlf) rest.remove_suffix(1);
    auto payload = unescape_payload(rest);
    if (!payload) return std::nullopt;
    l.payload = std::move(*payload);
    return l;
}

Bytes reconstruct(const LogLine& line) {
    Bytes out = line.payload;
    if (line.crlf) {
        out.push_back('\r');
        out.push_back('\n');
    }
    return out;
}

FileLogSink::FileLogSink(const std::filesystem::path& path) : path_(path) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    file_ = std::fopen(path.c_str(), "a");
    if (!file_) throw Error(Errc::Internal, "io", "cannot open log file " + path.string());
}

FileLogSink::~FileLogSink() {
    if (file_) std::fclose(file_);
}

void FileLogSink::write(const LogLine&, const std::string& formatted) {
    std::lock_guard lk(mu_);
    if (std::fputs(formatted.c_str(), file_) < 0 || std::fputc('\n', file_) == EOF || std::fflush(file_) != 0) {
        throw Error(Errc::Internal, "io", "log write failed: " + path_.string());
    }
}

SyslogLogSink::SyslogLogSink(const std::string& ident) : ident_(ident) {
    ::openlog(ident_.c_str(), LOG_NDELAY, LOG_DAEMON);
}

SyslogLogSink::~SyslogLogSink() { ::closelog(); }

void SyslogLogSink::write(const LogLine& line, const std::string& formatted) {
    ::syslog(line.port_label == "alarm" ? LOG_WARNING : LOG_INFO, "%s", formatted.c_str());
}

void MemoryLogSink::write(const LogLine& line, const std::string& formatted) {
    std::lock_guard lk(mu_);
    if (failing_) throw Error(Errc::Internal, "io", "sink failure");
    entries_.push_back(line);
    lines_.push_back(formatted);
}

std::vector<std::string> MemoryLogSink::lines() const {
    std::lock_guard lk(mu_);
    return lines_;
}

std::vector<LogLine> MemoryLogSink::entries() const {
    std::lock_guard lk(mu_);
    return entries_;
}

std::size_t MemoryLogSink::size() const {
    std::lock_guard lk(mu_);
    return entries_.size();
}

void MemoryLogSink::set_failing(bool fail) {
    std::lock_guard lk(mu_);
    failing_ = fail;
}

} // namespace consrv::daemon
