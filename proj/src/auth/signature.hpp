// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "common/text.hpp"

namespace consrv::auth {

// Verification half of a public-key signature scheme.
class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;
    virtual std::string_view name() const = 0;
    virtual bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
                        std::span<const std::uint8_t> signature) const = 0;
};

// Ed25519 (RFC 8032). Signing is deterministic, so published test vectors
// pin the implementation.
class Ed25519Scheme final : public SignatureScheme {
public:
    std::string_view name() const override { return "ed25519"; }
    bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
                std::span<const std::uint8_t> signature) const override;
};

const SignatureScheme& default_scheme();

class KeyPair {
public:
    static KeyPair generate();
    static KeyPair from_seed(std::span<const std::uint8_t> seed32);

    // Private key file: one line "ed25519-seed <base64 seed>".
    static KeyPair load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    const Bytes& public_key() const { return public_; }
    Bytes sign(std::span<const std::uint8_t> message) const;

    std::string public_key_base64() const;
    std::string key_id() const;
    // "key <principal> <key-id> <base64>" line for keys.conf
    std::string registry_line(std::string_view principal) const;

private:
    Bytes seed_;
    Bytes public_;
    Bytes secret_;
};

} // namespace consrv::auth
