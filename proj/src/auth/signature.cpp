// SPDX-License-Identifier: Apache-2.0
#include "auth/signature.hpp"

#include <sodium.h>
#include <sys/stat.h>

#include <fstream>
#include <sstream>

#include "common/codec.hpp"
#include "common/error.hpp"
#include "registry/registry.hpp"

namespace consrv::auth {

bool Ed25519Scheme::verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> message,
                           std::span<const std::uint8_t> signature) const {
    ensure_crypto_init();
    if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) {
        return false;
    }
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), public_key.data()) == 0;
}

const SignatureScheme& default_scheme() {
    static const Ed25519Scheme scheme;
    return scheme;
}

KeyPair KeyPair::from_seed(std::span<const std::uint8_t> seed32) {
    ensure_crypto_init();
    if (seed32.size() != crypto_sign_SEEDBYTES) {
        throw InvalidArgument("ed25519 seed must be 32 bytes");
    }
    KeyPair kp;
    kp.seed_.assign(seed32.begin(), seed32.end());
    kp.public_.resize(crypto_sign_PUBLICKEYBYTES);
    kp.secret_.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(kp.public_.data(), kp.secret_.data(), kp.seed_.data());
    return kp;
}

KeyPair KeyPair::generate() {
    ensure_crypto_init();
    Bytes seed(crypto_sign_SEEDBYTES);
    randombytes_buf(seed.data(), seed.size());
    return from_seed(seed);
}

KeyPair KeyPair::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::NotFound, "not-found", "cannot read key file " + path.string());
    }
    std::string line;
    while (std::getline(in, line)) {
        auto f = split_fields(line);
        if (f.empty()) continue;
        if (f.size() != 2 || f[0] != "ed25519-seed") break;
        auto seed = base64_decode(f[1]);
        if (!seed) break;
        return from_seed(*seed);
    }
    throw InvalidArgument("malformed key file " + path.string());
}

void KeyPair::save(const std::filesystem::path& path) const {
    registry::atomic_write(path, "ed25519-seed " + base64_encode(seed_) + "\n");
    ::chmod(path.c_str(), 0600);
}

Bytes KeyPair::sign(std::span<const std::uint8_t> message) const {
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
}

std::string KeyPair::public_key_base64() const { return base64_encode(public_); }

std::string KeyPair::key_id() const { return registry::key_fingerprint(public_); }

std::string KeyPair::registry_line(std::string_view principal) const {
    return "key " + std::string(principal) + " " + key_id() + " " + public_key_base64();
}

} // namespace consrv::auth
