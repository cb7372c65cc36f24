// SPDX-License-Identifier: Apache-2.0
#include "auth/authenticator.hpp"

#include <sodium.h>

#include <algorithm>

#include "common/codec.hpp"

namespace consrv::auth {

Bytes challenge_message(const Challenge& ch, std::string_view principal) {
    Bytes msg(ch.nonce.begin(), ch.nonce.end());
    msg.insert(msg.end(), principal.begin(), principal.end());
    msg.insert(msg.end(), ch.server_id.begin(), ch.server_id.end());
    return msg;
}

Credential sign_challenge(const KeyPair& key, std::string_view principal, const Challenge& ch) {
    return Credential{std::string(principal), key.sign(challenge_message(ch, principal))};
}

std::string format_challenge(const Challenge& ch) {
    return "CHAL " + base64_encode(ch.nonce) + " " + ch.server_id;
}

std::optional<Challenge> parse_challenge(std::string_view line) {
    auto f = split_fields(line);
    if (f.size() != 3 || f[0] != "CHAL") return std::nullopt;
    auto raw = base64_decode(f[1]);
    if (!raw || raw->size() != 32) return std::nullopt;
    Challenge ch;
    std::copy(raw->begin(), raw->end(), ch.nonce.begin());
    ch.server_id = f[2];
    return ch;
}

std::string format_auth(const Credential& cred) { return "AUTH " + cred.principal + " " + base64_encode(cred.signature); }

std::optional<Credential> parse_auth(std::string_view line) {
    auto f = split_fields(line);
    if (f.size() != 3 || f[0] != "AUTH") return std::nullopt;
    auto sig = base64_decode(f[2]);
    if (!sig) return std::nullopt;
    return Credential{f[1], std::move(*sig)};
}

Authenticator::Authenticator(std::string server_id, const Clock& clock, const SignatureScheme& scheme,
                             NonceSource source)
    : server_id_(std::move(server_id)), clock_(clock), scheme_(scheme), source_(std::move(source)) {
    if (!source_) {
        source_ = [](std::span<std::uint8_t> out) {
            ensure_crypto_init();
            randombytes_buf(out.data(), out.size());
        };
    }
}

Challenge Authenticator::issue_challenge() {
    Challenge ch;
    ch.server_id = server_id_;
    std::lock_guard lk(mu_);
    for (int tries = 0;; ++tries) {
        source_(ch.nonce);
        if (!outstanding_.count(ch.nonce) && !consumed_.count(ch.nonce)) break;
        if (tries == 16) throw Error(Errc::Internal, "internal", "nonce source keeps repeating");
    }
    ch.issued_at = clock_.now();
    while (outstanding_.size() >= kMaxOutstanding && !issue_order_.empty()) {
        outstanding_.erase(issue_order_.front());
        issue_order_.pop_front();
    }
    outstanding_.emplace(ch.nonce, ch.issued_at);
    issue_order_.push_back(ch.nonce);
    return ch;
}

std::size_t Authenticator::outstanding() const {
    std::lock_guard lk(mu_);
    return outstanding_.size();
}

std::string Authenticator::authenticate(const Challenge& ch, const Credential& cred, const registry::Registry& reg) {
    TimePoint issued_at;
    {
        // check-and-consume is atomic: two racing presentations of one nonce
        // cannot both get past this block
        std::lock_guard lk(mu_);
        auto it = outstanding_.find(ch.nonce);
        if (it == outstanding_.end()) {
            if (consumed_.count(ch.nonce)) throw ReplayedChallenge();
            throw StaleChallenge();
        }
        issued_at = it->second;
        outstanding_.erase(it);
        issue_order_.erase(std::find(issue_order_.begin(), issue_order_.end(), ch.nonce));
        consumed_.insert(ch.nonce);
        consumed_order_.push_back(ch.nonce);
        while (consumed_order_.size() > kConsumedMemory) {
            consumed_.erase(consumed_order_.front());
            consumed_order_.pop_front();
        }
    }
    if (clock_.now() - issued_at > kChallengeLifetime) {
        throw StaleChallenge();
    }
    if (ch.server_id != server_id_) {
        throw AuthFailed("challenge was issued for another server");
    }
    const auto* key = reg.find_key(cred.principal);
    if (!key) {
        throw AuthFailed("unknown principal");
    }
    const auto pub = base64_decode(key->public_key);
    if (!pub) {
        throw AuthFailed("unusable key");
    }
    // Verify against the nonce as issued, not as echoed back.
    Challenge issued{ch.nonce, server_id_, issued_at};
    if (!scheme_.verify(*pub, challenge_message(issued, cred.principal), cred.signature)) {
        throw AuthFailed("bad signature");
    }
    return cred.principal;
}

} // namespace consrv::auth
