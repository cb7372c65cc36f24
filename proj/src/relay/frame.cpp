// SPDX-License-Identifier: Apache-2.0
#include "relay/frame.hpp"

#include <algorithm>

namespace consrv::relay {

RelayAddress RelayAddress::make(int box, int relay) {
    if (box < 0 || box >= kBoxesPerChain || relay < 0 || relay >= kRelaysPerBox) {
        throw InvalidArgument("relay address out of range: " + std::to_string(box) + "/" + std::to_string(relay));
    }
    return RelayAddress{static_cast<std::uint8_t>(box), static_cast<std::uint8_t>(relay)};
}

RelayAddress RelayAddress::from_flat(int flat) { return make(flat / kRelaysPerBox, flat % kRelaysPerBox); }

std::string RelayAddress::str() const { return std::to_string(box) + "/" + std::to_string(relay); }

std::optional<RelayCommand> command_from_byte(std::uint8_t b) {
    switch (b) {
    case 0x50:
        return RelayCommand::Pulse;
    case 0x4E:
        return RelayCommand::On;
    case 0x46:
        return RelayCommand::Off;
    default:
        return std::nullopt;
    }
}

RelayFrame RelayFrame::make(RelayAddress addr, RelayCommand cmd, std::uint8_t tenths) {
    return RelayFrame{addr, cmd, cmd == RelayCommand::Pulse ? tenths : std::uint8_t{0}};
}

std::array<std::uint8_t, kFrameSize> encode(const RelayFrame& frame) {
    const auto addr = static_cast<std::uint8_t>(frame.address.flat());
    const auto cmd = static_cast<std::uint8_t>(frame.command);
    const std::uint8_t dur = frame.command == RelayCommand::Pulse ? frame.duration_tenths : 0;
    return {kStx, addr, cmd, dur, static_cast<std::uint8_t>(addr ^ cmd ^ dur), kEtx};
}

RelayFrame decode(std::span<const std::uint8_t> raw) {
    if (raw.empty() || raw[0] != kStx) {
        throw BadFraming("missing STX");
    }
    if (raw.size() < kFrameSize) {
        throw BadFraming("truncated frame");
    }
    if (raw[5] != kEtx) {
        throw BadFraming("missing ETX");
    }
    const std::uint8_t addr = raw[1], cmd = raw[2], dur = raw[3], cks = raw[4];
    if (static_cast<std::uint8_t>(addr ^ cmd ^ dur) != cks) {
        throw BadChecksum();
    }
    const auto command = command_from_byte(cmd);
    if (!command) {
        throw BadCommand(cmd);
    }
    if (addr >= kBoxesPerChain * kRelaysPerBox) {
        throw BadFraming("address out of range");
    }
    if (*command != RelayCommand::Pulse && dur != 0) {
        throw BadFraming("duration on a non-pulse command");
    }
    return RelayFrame::make(RelayAddress::from_flat(addr), *command, dur);
}

void FrameScanner::push(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

std::optional<FrameScanner::Result> FrameScanner::next() {
    for (;;) {
        auto stx = std::find(buf_.begin(), buf_.end(), kStx);
        buf_.erase(buf_.begin(), stx);
        if (buf_.size() < kFrameSize) {
            return std::nullopt;
        }
        if (buf_[5] != kEtx) {
            buf_.erase(buf_.begin());
            continue;
        }
        const std::span<const std::uint8_t> frame(buf_.data(), kFrameSize);
        std::optional<Result> result;
        try {
            result = decode(frame);
        } catch (const BadChecksum&) {
            result = Fault::Checksum;
        } catch (const BadCommand&) {
            result = Fault::Command;
        } catch (const BadFraming&) {
            result = Fault::Command;
        }
        buf_.erase(buf_.begin(), buf_.begin() + kFrameSize);
        return result;
    }
}

} // namespace consrv::relay
