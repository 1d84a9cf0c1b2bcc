#pragma once

// Brute-force reference for the pattern miner: enumerate every decomposition of the
// sequence into even-length blocks repeated at least twice, keep the admissible ones,
// then take the lexicographically smallest by (length ascending, repetitions descending).
//
// Admissible: when a block does not use its maximal repetition count, the next block
// must be strictly longer (the miner only retries longer patterns where a given-back
// repetition used to end).

#include "ibh/sniper.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace oracle
{
    struct Block
    {
        std::size_t pos;
        std::size_t n;
        std::int64_t reps;
        std::int64_t max_reps;
    };
    using Decomposition = std::vector<Block>;

    inline bool copy_at(const ibh::sniper::MetadataSequence& s, std::size_t a, std::size_t b, std::size_t n)
    {
        if (b + n > s.size())
        {
            return false;
        }
        for (std::size_t i = 0; i < n; ++i)
        {
            if (s[a + i] != s[b + i])
            {
                return false;
            }
        }
        return true;
    }

    inline void enumerate(const ibh::sniper::MetadataSequence& s, std::size_t pos, Decomposition& cur,
                          std::vector<Decomposition>& out, std::size_t cap)
    {
        if (out.size() > cap)
        {
            throw std::runtime_error("oracle: enumeration cap exceeded");
        }
        if (pos == s.size())
        {
            out.push_back(cur);
            return;
        }
        for (std::size_t n = 2; pos + 2 * n <= s.size(); n += 2)
        {
            std::int64_t max_reps = 1;
            while (copy_at(s, pos, pos + static_cast<std::size_t>(max_reps) * n, n))
            {
                ++max_reps;
            }
            for (std::int64_t r = 2; r <= max_reps; ++r)
            {
                cur.push_back({pos, n, r, max_reps});
                enumerate(s, pos + static_cast<std::size_t>(r) * n, cur, out, cap);
                cur.pop_back();
            }
        }
    }

    inline bool admissible(const Decomposition& d)
    {
        for (std::size_t i = 0; i + 1 < d.size(); ++i)
        {
            if (d[i].reps < d[i].max_reps && d[i + 1].n <= d[i].n)
            {
                return false;
            }
        }
        return true;
    }

    inline bool preferred(const Decomposition& a, const Decomposition& b)
    {
        for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
        {
            if (a[i].n != b[i].n)
            {
                return a[i].n < b[i].n;
            }
            if (a[i].reps != b[i].reps)
            {
                return a[i].reps > b[i].reps;
            }
        }
        return a.size() < b.size();
    }

    /// Empty optional when no decomposition exists.
    inline std::optional<std::vector<ibh::sniper::Pattern>> mine(const ibh::sniper::MetadataSequence& s,
                                                                 std::size_t cap = 5'000'000)
    {
        std::vector<Decomposition> all;
        Decomposition cur;
        enumerate(s, 0, cur, all, cap);
        const Decomposition* best = nullptr;
        for (const auto& d : all)
        {
            if (admissible(d) && (!best || preferred(d, *best)))
            {
                best = &d;
            }
        }
        if (!best)
        {
            return std::nullopt;
        }
        std::vector<ibh::sniper::Pattern> out;
        for (const auto& b : *best)
        {
            out.push_back({ibh::sniper::MetadataSequence(s.begin() + static_cast<std::ptrdiff_t>(b.pos),
                                                         s.begin() + static_cast<std::ptrdiff_t>(b.pos + b.n)),
                           b.reps});
        }
        return out;
    }
}
