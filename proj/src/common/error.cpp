// SPDX-License-Identifier: Apache-2.0
#include "common/error.hpp"

#include <array>
#include <utility>

namespace consrv {

namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 8> kWords{{
    {Errc::Internal, "internal"},
    {Errc::Invalid, "invalid"},
    {Errc::Denied, "denied"},
    {Errc::NotFound, "not-found"},
    {Errc::Busy, "busy"},
    {Errc::Transport, "transport"},
    {Errc::RateLimited, "rate-limited"},
    {Errc::Conflict, "conflict"},
}};

} // namespace

std::string_view errc_word(Errc code) {
    for (const auto& [c, w] : kWords) {
        if (c == code) {
            return w;
        }
    }
    return "internal";
}

Errc errc_from_word(std::string_view word) {
    for (const auto& [c, w] : kWords) {
        if (w == word) {
            return c;
        }
    }
    return Errc::Internal;
}

} // namespace consrv
