#pragma once

// Hand-rolled generators for property tests, driven by the library's own seeded RNG.

#include "ibh/simkernel.hpp"
#include "ibh/sniper.hpp"

#include <cstddef>
#include <cstdint>

namespace gen
{
    /// A sequence built from a random valid decomposition: blocks of an even-length
    /// random pattern repeated 2..4 times, total length <= max_len, alphabet <= 6.
    inline ibh::sniper::MetadataSequence decomposable(ibh::sim::SeededRng& rng, std::size_t max_len = 40)
    {
        const auto alphabet = rng.uniform_int(2, 6);
        const auto blocks = rng.uniform_int(1, 4);
        ibh::sniper::MetadataSequence seq;
        for (std::int64_t b = 0; b < blocks; ++b)
        {
            const auto n = static_cast<std::size_t>(2 * rng.uniform_int(1, 4));
            const auto reps = static_cast<std::size_t>(rng.uniform_int(2, 4));
            if (seq.size() + n * reps > max_len)
            {
                break;
            }
            ibh::sniper::MetadataSequence pattern(n);
            for (auto& id : pattern)
            {
                id = static_cast<ibh::sniper::MetadataId>(rng.uniform_int(1, alphabet));
            }
            for (std::size_t r = 0; r < reps; ++r)
            {
                seq.insert(seq.end(), pattern.begin(), pattern.end());
            }
        }
        if (seq.empty())
        {
            seq = {1, 2, 1, 2};
        }
        return seq;
    }

    /// Unstructured sequence; usually undecomposable.
    inline ibh::sniper::MetadataSequence arbitrary(ibh::sim::SeededRng& rng, std::size_t max_len = 24)
    {
        const auto alphabet = rng.uniform_int(1, 3);
        const auto len = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_len)));
        ibh::sniper::MetadataSequence seq(len);
        for (auto& id : seq)
        {
            id = static_cast<ibh::sniper::MetadataId>(rng.uniform_int(1, alphabet));
        }
        return seq;
    }
}
