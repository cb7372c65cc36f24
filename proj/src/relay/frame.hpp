// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "common/error.hpp"
#include "common/text.hpp"

namespace consrv::relay {

// Wire format of one command to a cascaded relay chain:
//
//   STX addr cmd dur cks ETX
//
//   addr = box * 8 + relay        (0..63)
//   cmd  = 'P' pulse | 'N' on | 'F' off
//   dur  = pulse width in tenths of a second (0 for on/off)
//   cks  = addr ^ cmd ^ dur
//
// The addressed box answers ACK addr; any box that sees a checksum error
// answers NAK. Frames for boxes past the end of the chain get no reply.
inline constexpr std::uint8_t kStx = 0x02;
inline constexpr std::uint8_t kEtx = 0x03;
inline constexpr std::uint8_t kAck = 0x06;
inline constexpr std::uint8_t kNak = 0x15;
inline constexpr std::size_t kFrameSize = 6;
inline constexpr int kBoxesPerChain = 8;
inline constexpr int kRelaysPerBox = 8;
inline constexpr std::uint8_t kDefaultPulseTenths = 10;

struct RelayAddress {
    std::uint8_t box = 0;
    std::uint8_t relay = 0;

    // Throws InvalidArgument unless both are in 0..7.
    static RelayAddress make(int box, int relay);
    static RelayAddress from_flat(int flat);
    int flat() const { return box * kRelaysPerBox + relay; }
    std::string str() const; // "box/relay"

    auto operator<=>(const RelayAddress&) const = default;
};

enum class RelayCommand : std::uint8_t {
    Pulse = 0x50,
    On = 0x4E,
    Off = 0x46,
};

std::optional<RelayCommand> command_from_byte(std::uint8_t b);

struct RelayFrame {
    RelayAddress address;
    RelayCommand command = RelayCommand::Pulse;
    std::uint8_t duration_tenths = 0; // only meaningful for Pulse

    // duration is normalized to 0 for On/Off so encode/decode round-trips
    static RelayFrame make(RelayAddress addr, RelayCommand cmd, std::uint8_t tenths);
    static RelayFrame pulse(RelayAddress addr, std::uint8_t tenths = kDefaultPulseTenths) {
        return make(addr, RelayCommand::Pulse, tenths);
    }

    bool operator==(const RelayFrame&) const = default;
};

struct BadFraming : Error {
    explicit BadFraming(const std::string& why) : Error(Errc::Invalid, "bad-framing", "bad framing: " + why) {}
};
struct BadChecksum : Error {
    BadChecksum() : Error(Errc::Invalid, "bad-checksum", "bad checksum") {}
};
struct BadCommand : Error {
    explicit BadCommand(std::uint8_t b)
        : Error(Errc::Invalid, "bad-command", "bad command byte " + std::to_string(static_cast<int>(b))) {}
};

std::array<std::uint8_t, kFrameSize> encode(const RelayFrame& frame);

// Decodes the first six bytes of raw.
RelayFrame decode(std::span<const std::uint8_t> raw);

// Incremental frame recognizer for a byte stream. Bytes before an STX are
// skipped; an STX not followed five bytes later by ETX is dropped and the
// search resumes at the next byte.
class FrameScanner {
public:
    enum class Fault { Checksum, Command };
    using Result = std::variant<RelayFrame, Fault>;

    void push(std::span<const std::uint8_t> bytes);
    std::optional<Result> next();
    std::size_t buffered() const { return buf_.size(); }

private:
    Bytes buf_;
};

} // namespace consrv::relay
