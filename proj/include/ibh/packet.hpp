#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ibh
{
    /// Virtual time in microseconds.
    using SimTime = std::int64_t;

    inline constexpr SimTime kMicrosecond = 1;
    inline constexpr SimTime kMillisecond = 1000;
    inline constexpr SimTime kSecond = 1000 * kMillisecond;
    inline constexpr SimTime kMinute = 60 * kSecond;
    inline constexpr SimTime kHour = 60 * kMinute;

    SimTime from_seconds(double s);
    double to_seconds(SimTime t);

    /// IPv4 address in host byte order.
    struct Ipv4
    {
        std::uint32_t value = 0;

        friend constexpr bool operator==(Ipv4, Ipv4) = default;
        friend constexpr auto operator<=>(Ipv4, Ipv4) = default;

        static Ipv4 parse(const std::string& dotted);
        std::string str() const;
    };

    constexpr Ipv4 make_ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
    {
        return Ipv4{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d};
    }

    /// Ground truth attached to a packet by the emulation. Never visible to the adversary;
    /// only evaluation code and the ground-truth trace columns read it.
    struct GroundTruth
    {
        bool critical = false;
        bool dropped_by_adversary = false;
        int plc_state = -1;      // index of the emitting schedule's state
        std::int64_t repetition = -1; // 1-based repetition within that state
        int slot = -1;
    };

    /// One captured packet as seen at the tap.
    struct PacketMeta
    {
        SimTime capture_time = 0;
        Ipv4 src;
        Ipv4 dst;
        std::uint32_t wire_length = 0;
        std::uint64_t seq = 0;
        bool retransmission = false;
        GroundTruth truth;
    };

    /// Packets in tap arrival order plus the instants the tap was attached and detached.
    struct CaptureTrace
    {
        SimTime capture_start = 0;
        SimTime capture_end = 0;
        std::vector<PacketMeta> packets;
    };
}
