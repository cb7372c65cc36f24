// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "auth/signature.hpp"
#include "common/clock.hpp"
#include "registry/registry.hpp"

namespace consrv::testing {

class TempDir {
public:
    TempDir() {
        static int n = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("consrv-test-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Small random-input helper for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
    std::uint8_t byte() { return static_cast<std::uint8_t>(range(0, 255)); }
    Bytes bytes(std::size_t n) {
        Bytes b(n);
        for (auto& x : b) x = byte();
        return b;
    }
    std::string name(int len) {
        std::string s;
        for (int i = 0; i < len; ++i) s += static_cast<char>('a' + range(0, 25));
        return s;
    }
    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(range(0, static_cast<int>(v.size()) - 1))];
    }
    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Deterministic key for a principal, so fixtures are reproducible.
inline auth::KeyPair key_for(const std::string& principal) {
    std::array<std::uint8_t, 32> seed{};
    for (std::size_t i = 0; i < principal.size() && i < seed.size(); ++i) seed[i] = static_cast<std::uint8_t>(principal[i]);
    seed[31] = 0x5a;
    return auth::KeyPair::from_seed(seed);
}

inline std::string keys_for(std::initializer_list<std::string> principals) {
    std::string out;
    for (const auto& p : principals) out += key_for(p).registry_line(p) + "\n";
    return out;
}

// admin (admin), alice (console + reset on every host), bob (read-only
// console), watchdog (reset), mallory (key but no grants).
inline std::string default_grants() {
    return "grant admin admin *\n"
           "grant alice console *\n"
           "grant alice reset *\n"
           "grant bob console-ro *\n"
           "grant watchdog reset *\n";
}

inline registry::Registry registry_for(const std::string& interconnections) {
    return registry::Registry::parse(interconnections, default_grants(),
                                     keys_for({"admin", "alice", "bob", "watchdog", "mallory"}));
}

} // namespace consrv::testing
