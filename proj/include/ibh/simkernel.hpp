#pragma once

#include "ibh/packet.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace ibh::sim
{
    using EventId = std::uint64_t;

    /// Raised when a caller breaks a kernel precondition (scheduling in the past,
    /// delivering on the wrong link).
    class KernelError : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    /// Single-threaded discrete-event scheduler. Events fire in (time, ordinal)
    /// order; the ordinal is the insertion counter, so same-time events run FIFO.
    class Simulator
    {
    public:
        using Action = std::function<void()>;
        using DispatchObserver = std::function<void(SimTime, EventId)>;

        EventId schedule(SimTime at, Action action);
        EventId schedule_in(SimTime delay, Action action) { return schedule(now_ + delay, std::move(action)); }

        /// Dispatches every event with time <= end, then parks the clock at end.
        std::size_t run_until(SimTime end);

        SimTime now() const noexcept { return now_; }
        std::size_t pending() const noexcept { return heap_.size(); }
        std::uint64_t dispatched() const noexcept { return dispatched_; }

        void set_dispatch_observer(DispatchObserver observer) { observer_ = std::move(observer); }

    private:
        struct Entry
        {
            SimTime time;
            EventId ordinal;
            Action action;
        };
        struct Later
        {
            bool operator()(const Entry& a, const Entry& b) const noexcept
            {
                return a.time != b.time ? a.time > b.time : a.ordinal > b.ordinal;
            }
        };

        std::vector<Entry> heap_;
        SimTime now_ = 0;
        EventId next_ordinal_ = 0;
        std::uint64_t dispatched_ = 0;
        DispatchObserver observer_;
    };

    /// splitmix64-seeded xoshiro256** generator. Implemented here (not via <random>
    /// distributions) so draws are identical across standard libraries.
    class SeededRng
    {
    public:
        explicit SeededRng(std::uint64_t seed);

        std::uint64_t seed() const noexcept { return seed_; }
        std::uint64_t next_u64();
        /// Uniform in [0, 1).
        double uniform01();
        /// Uniform integer in [lo, hi] (inclusive), unbiased.
        std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    private:
        std::uint64_t seed_;
        std::uint64_t s_[4];
    };

    enum class FluctuationMode : std::uint8_t
    {
        drop,
        delay,
    };

    struct FluctuationWindow
    {
        SimTime start = 0;
        SimTime end = 0; // exclusive
        FluctuationMode mode = FluctuationMode::drop;
        SimTime extra_delay = 150 * kMillisecond;

        bool covers(SimTime t) const noexcept { return t >= start && t < end; }
    };

    /// Anything that can claim a packet for the adversary.
    class PacketFilter
    {
    public:
        virtual ~PacketFilter() = default;
        virtual bool matches(const PacketMeta& pkt, SimTime now) const = 0;
    };

    struct LinkModel
    {
        Ipv4 src;
        Ipv4 dst;
        SimTime base_latency = 10 * kMillisecond;
        std::vector<FluctuationWindow> fluctuation_windows;
        std::shared_ptr<const PacketFilter> adversary_rule;
    };

    enum class DeliveryKind : std::uint8_t
    {
        delivered,
        dropped_fluctuation,
        dropped_adversary,
    };

    struct DeliveryOutcome
    {
        DeliveryKind kind = DeliveryKind::delivered;
        SimTime at = 0; // meaningful when delivered

        bool delivered() const noexcept { return kind == DeliveryKind::delivered; }
    };

    /// Adversary rule first, then benign windows.
    DeliveryOutcome link_deliver(const PacketMeta& pkt, const LinkModel& link, SimTime now);

    /// Draws `count` disjoint windows with durations uniform in [min_duration, max_duration]
    /// and uniformly random placement inside [span_start, span_end). Modes are a fair coin.
    std::vector<FluctuationWindow> inject_fluctuations(SimTime span_start, SimTime span_end, int count, SeededRng& rng,
                                                       SimTime extra_delay = 150 * kMillisecond,
                                                       SimTime min_duration = 30 * kSecond,
                                                       SimTime max_duration = 60 * kSecond);
}
