#include "ibh/simkernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ibh
{
    SimTime from_seconds(double s) { return static_cast<SimTime>(std::llround(s * 1e6)); }

    double to_seconds(SimTime t) { return static_cast<double>(t) / 1e6; }

    Ipv4 Ipv4::parse(const std::string& dotted)
    {
        unsigned a = 0, b = 0, c = 0, d = 0;
        char tail = 0;
        if (std::sscanf(dotted.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4 || a > 255 || b > 255 ||
            c > 255 || d > 255)
        {
            throw std::invalid_argument("malformed IPv4 address: " + dotted);
        }
        return make_ipv4(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b), static_cast<std::uint8_t>(c),
                         static_cast<std::uint8_t>(d));
    }

    std::string Ipv4::str() const
    {
        std::ostringstream os;
        os << ((value >> 24) & 0xff) << '.' << ((value >> 16) & 0xff) << '.' << ((value >> 8) & 0xff) << '.'
           << (value & 0xff);
        return os.str();
    }
}

namespace ibh::sim
{
    EventId Simulator::schedule(SimTime at, Action action)
    {
        if (at < now_)
        {
            throw KernelError("cannot schedule at t=" + std::to_string(at) + "us, clock is at " +
                              std::to_string(now_) + "us");
        }
        const EventId id = next_ordinal_++;
        heap_.push_back(Entry{at, id, std::move(action)});
        std::push_heap(heap_.begin(), heap_.end(), Later{});
        return id;
    }

    std::size_t Simulator::run_until(SimTime end)
    {
        if (end < now_)
        {
            throw KernelError("run_until target precedes the clock");
        }
        std::size_t count = 0;
        while (!heap_.empty() && heap_.front().time <= end)
        {
            std::pop_heap(heap_.begin(), heap_.end(), Later{});
            Entry entry = std::move(heap_.back());
            heap_.pop_back();
            now_ = entry.time;
            if (observer_)
            {
                observer_(entry.time, entry.ordinal);
            }
            ++dispatched_;
            ++count;
            if (entry.action)
            {
                entry.action();
            }
        }
        now_ = end;
        return count;
    }

    namespace
    {
        std::uint64_t splitmix64(std::uint64_t& x)
        {
            std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            return z ^ (z >> 31);
        }

        constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    }

    SeededRng::SeededRng(std::uint64_t seed) : seed_(seed)
    {
        std::uint64_t x = seed;
        for (auto& s : s_)
        {
            s = splitmix64(x);
        }
    }

    std::uint64_t SeededRng::next_u64()
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    double SeededRng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::int64_t SeededRng::uniform_int(std::int64_t lo, std::int64_t hi)
    {
        if (hi < lo)
        {
            throw std::invalid_argument("uniform_int: empty range");
        }
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) // full 64-bit span
        {
            return static_cast<std::int64_t>(next_u64());
        }
        const std::uint64_t limit = (~std::uint64_t{0} / range) * range;
        std::uint64_t draw = next_u64();
        while (draw >= limit)
        {
            draw = next_u64();
        }
        return lo + static_cast<std::int64_t>(draw % range);
    }

    DeliveryOutcome link_deliver(const PacketMeta& pkt, const LinkModel& link, SimTime now)
    {
        if (pkt.src != link.src || pkt.dst != link.dst)
        {
            throw KernelError("packet " + pkt.src.str() + "->" + pkt.dst.str() + " offered to link " +
                              link.src.str() + "->" + link.dst.str());
        }
        if (link.adversary_rule && link.adversary_rule->matches(pkt, now))
        {
            return {DeliveryKind::dropped_adversary, 0};
        }
        SimTime extra = 0;
        for (const auto& w : link.fluctuation_windows)
        {
            if (!w.covers(now))
            {
                continue;
            }
            if (w.mode == FluctuationMode::drop)
            {
                return {DeliveryKind::dropped_fluctuation, 0};
            }
            extra = w.extra_delay;
            break;
        }
        return {DeliveryKind::delivered, now + link.base_latency + extra};
    }

    std::vector<FluctuationWindow> inject_fluctuations(SimTime span_start, SimTime span_end, int count, SeededRng& rng,
                                                       SimTime extra_delay, SimTime min_duration, SimTime max_duration)
    {
        if (span_end <= span_start)
        {
            throw std::invalid_argument("fluctuation span is empty");
        }
        if (count < 0 || min_duration <= 0 || max_duration < min_duration)
        {
            throw std::invalid_argument("invalid fluctuation request");
        }
        std::vector<FluctuationWindow> windows;
        if (count == 0)
        {
            return windows;
        }
        // Durations first, then the free time is split at sorted uniform cut points.
        std::vector<SimTime> durations(static_cast<std::size_t>(count));
        for (auto& d : durations)
        {
            d = rng.uniform_int(min_duration, max_duration);
        }
        const SimTime busy = std::accumulate(durations.begin(), durations.end(), SimTime{0});
        const SimTime free = (span_end - span_start) - busy;
        if (free < 0)
        {
            throw std::invalid_argument("span too short for " + std::to_string(count) + " fluctuation windows");
        }
        std::vector<SimTime> cuts(static_cast<std::size_t>(count));
        for (auto& c : cuts)
        {
            c = rng.uniform_int(0, free);
        }
        std::sort(cuts.begin(), cuts.end());
        SimTime consumed = 0;
        for (std::size_t i = 0; i < durations.size(); ++i)
        {
            FluctuationWindow w;
            w.start = span_start + cuts[i] + consumed;
            w.end = w.start + durations[i];
            w.mode = (rng.next_u64() & 1) ? FluctuationMode::delay : FluctuationMode::drop;
            w.extra_delay = extra_delay;
            consumed += durations[i];
            windows.push_back(w);
        }
        return windows;
    }
}
