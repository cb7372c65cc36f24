// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common/clock.hpp"

namespace consrv {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(std::span<const std::uint8_t> b) { return std::string(b.begin(), b.end()); }

// RFC3339 in UTC with millisecond precision: 2024-01-01T00:00:00.000Z
std::string format_rfc3339(TimePoint t);
// Accepts an optional fraction and either Z or a +hh:mm/-hh:mm offset.
std::optional<TimePoint> parse_rfc3339(std::string_view s);

// Console payload escaping: printable ASCII passes through, backslash doubles,
// everything else becomes \xNN. The output never contains whitespace other
// than the space character.
std::string escape_payload(std::span<const std::uint8_t> bytes);
// Inverse of escape_payload; nullopt on a malformed escape.
std::optional<Bytes> unescape_payload(std::string_view text);

// Quoted-string escaping for key="value" fields: like escape_payload but also
// escapes the double quote.
std::string escape_quoted(std::string_view s);
std::optional<std::string> unescape_quoted(std::string_view s);

// Whitespace tokenizer; a token starting with '#' ends the line.
std::vector<std::string> split_fields(std::string_view line);
std::vector<std::string> split_char(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::optional<long long> parse_int(std::string_view s);

} // namespace consrv
