// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>

#include "auth/signature.hpp"
#include "common/clock.hpp"
#include "common/error.hpp"
#include "registry/registry.hpp"

namespace consrv::auth {

using Nonce = std::array<std::uint8_t, 32>;

struct Challenge {
    Nonce nonce{};
    std::string server_id;
    TimePoint issued_at{};
};

struct Credential {
    std::string principal;
    Bytes signature;
};

struct AuthFailed : Error {
    explicit AuthFailed(const std::string& why) : Error(Errc::Denied, "auth-failed", "authentication failed: " + why) {}
};
struct StaleChallenge : Error {
    StaleChallenge() : Error(Errc::Denied, "stale-challenge", "stale challenge") {}
};
struct ReplayedChallenge : Error {
    ReplayedChallenge() : Error(Errc::Denied, "replayed-challenge", "replayed challenge") {}
};

// The signed message: nonce || principal || server_id.
Bytes challenge_message(const Challenge& ch, std::string_view principal);

Credential sign_challenge(const KeyPair& key, std::string_view principal, const Challenge& ch);

// Handshake lines: "CHAL <b64 nonce> <server>", "AUTH <principal> <b64 sig>".
std::string format_challenge(const Challenge& ch);
std::optional<Challenge> parse_challenge(std::string_view line);
std::string format_auth(const Credential& cred);
std::optional<Credential> parse_auth(std::string_view line);

// Issues single-use nonces and checks signed responses against the registry.
// Every presented nonce is consumed, whatever the outcome.
class Authenticator {
public:
    using NonceSource = std::function<void(std::span<std::uint8_t>)>;

    static constexpr Duration kChallengeLifetime = 30s;
    static constexpr std::size_t kMaxOutstanding = 1024;
    static constexpr std::size_t kConsumedMemory = 4096;

    Authenticator(std::string server_id, const Clock& clock, const SignatureScheme& scheme = default_scheme(),
                  NonceSource source = {});

    Challenge issue_challenge();
    // Returns the authenticated principal or throws AuthFailed /
    // StaleChallenge / ReplayedChallenge.
    std::string authenticate(const Challenge& ch, const Credential& cred, const registry::Registry& reg);

    std::size_t outstanding() const;
    const std::string& server_id() const { return server_id_; }

private:
    std::string server_id_;
    const Clock& clock_;
    const SignatureScheme& scheme_;
    NonceSource source_;

    mutable std::mutex mu_;
    std::map<Nonce, TimePoint> outstanding_;
    std::deque<Nonce> issue_order_;
    std::set<Nonce> consumed_;
    std::deque<Nonce> consumed_order_;
};

} // namespace consrv::auth
