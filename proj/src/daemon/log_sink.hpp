// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "common/clock.hpp"
#include "common/text.hpp"

namespace consrv::daemon {

struct LogLine {
    TimePoint timestamp{};
    std::string host;
    std::string port_label; // ttyS5, or "alarm" for operational lines
    Bytes payload;
    // The raw line ended in CR LF, which is implied rather than printed.
    // Any other flush (bare LF, size limit, idle) prints every byte and
    // ends with a lone backslash.
    bool crlf = true;

    bool operator==(const LogLine&) const = default;
};

// "<ts> <host> <port> <escaped payload>[\]"
std::string format_log_line(const LogLine& line);
std::optional<LogLine> parse_log_line(std::string_view text);

// Raw console bytes a log line stands for.
Bytes reconstruct(const LogLine& line);

class LogSink {
public:
    virtual ~LogSink() = default;
    // May throw; the caller counts failures and carries on.
    virtual void write(const LogLine& line, const std::string& formatted) = 0;
};

class FileLogSink final : public LogSink {
public:
    explicit FileLogSink(const std::filesystem::path& path);
    ~FileLogSink() override;
    void write(const LogLine& line, const std::string& formatted) override;

private:
    std::mutex mu_;
    std::FILE* file_ = nullptr;
    std::filesystem::path path_;
};

class SyslogLogSink final : public LogSink {
public:
    explicit SyslogLogSink(const std::string& ident);
    ~SyslogLogSink() override;
    void write(const LogLine& line, const std::string& formatted) override;

private:
    std::string ident_;
};

class MemoryLogSink final : public LogSink {
public:
    void write(const LogLine& line, const std::string& formatted) override;
    std::vector<std::string> lines() const;
    std::vector<LogLine> entries() const;
    std::size_t size() const;
    void set_failing(bool fail);

private:
    mutable std::mutex mu_;
    std::vector<LogLine> entries_;
    std::vector<std::string> lines_;
    bool failing_ = false;
};

} // namespace consrv::daemon
