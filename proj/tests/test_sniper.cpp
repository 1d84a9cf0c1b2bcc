#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "generators.hpp"
#include "mining_oracle.hpp"

#include "ibh/plant.hpp"
#include "ibh/sniper.hpp"

#include <functional>
#include <map>
#include <sstream>

using namespace ibh;
using namespace ibh::sniper;

namespace
{
    constexpr Ipv4 kA = make_ipv4(192, 168, 1, 10);
    constexpr Ipv4 kB = make_ipv4(192, 168, 1, 20);

    // Packets whose tuples encode the given ids; odd ids go A->B, even ids B->A.
    std::vector<PacketMeta> packets_for(const MetadataSequence& ids, SimTime t0, SimTime spacing)
    {
        std::vector<PacketMeta> out;
        std::map<bool, std::uint64_t> next_seq;
        for (std::size_t i = 0; i < ids.size(); ++i)
        {
            PacketMeta p;
            const bool forward = ids[i] % 2 == 1;
            p.src = forward ? kA : kB;
            p.dst = forward ? kB : kA;
            p.wire_length = 100 + ids[i];
            p.seq = ++next_seq[forward];
            p.capture_time = t0 + static_cast<SimTime>(i) * spacing;
            out.push_back(p);
        }
        return out;
    }

    MetadataSequence expand(const std::vector<Pattern>& ps)
    {
        Lts l{ps};
        return l.expand();
    }

    struct ProfiledPlant
    {
        plant::Emulation em;
        std::vector<CaptureTrace> cycles;
        ProfiledSequence profile;
        std::vector<Lts> candidates;
    };

    ProfiledPlant& profiled_plant()
    {
        static ProfiledPlant* pp = [] {
            plant::EmulationConfig c;
            c.cycles = 3;
            c.lead_in = 1800 * kSecond;
            c.fluctuations.cycles = {0};
            auto* p = new ProfiledPlant{plant::Emulation(c), {}, {}, {}};
            p->em.run();
            for (const auto& cyc : segment_cycles(p->em.trace()))
            {
                p->cycles.push_back(dedup_retransmissions(cyc));
            }
            p->profile = consistent_sequence(p->cycles);
            p->candidates = merge_candidates(mine_patterns(p->profile.sequence));
            return p;
        }();
        return *pp;
    }
}

TEST_CASE("segment_cycles: a 2 h gap splits, a mid-cycle start is discarded")
{
    CaptureTrace t;
    auto first = packets_for(MetadataSequence(40, 1), 0, kSecond / 2);
    auto second = packets_for(MetadataSequence(40, 1), 2 * kHour + 20 * kSecond, kSecond / 2);
    t.packets = first;
    t.packets.insert(t.packets.end(), second.begin(), second.end());
    t.capture_start = 0; // tap attached while the first cycle was already running
    t.capture_end = t.packets.back().capture_time + 2 * kHour;
    const auto cycles = segment_cycles(t);
    REQUIRE(cycles.size() == 1);
    CHECK(cycles[0].packets.size() == 40);
    CHECK(cycles[0].packets.front().capture_time == 2 * kHour + 20 * kSecond);
}

TEST_CASE("segment_cycles: capture that starts idle keeps the first burst")
{
    CaptureTrace t;
    t.capture_start = 0;
    t.packets = packets_for(MetadataSequence(40, 1), kHour, kSecond / 2);
    t.capture_end = t.packets.back().capture_time + kHour;
    const auto cycles = segment_cycles(t);
    REQUIRE(cycles.size() == 1);
    CHECK(cycles[0].packets.size() == 40);
}

TEST_CASE("segment_cycles: uniform traffic has no boundary")
{
    CaptureTrace t;
    t.packets = packets_for(MetadataSequence(200, 1), 0, kSecond);
    t.capture_start = 0;
    t.capture_end = t.packets.back().capture_time + kSecond;
    try
    {
        segment_cycles(t);
        FAIL("expected an error");
    }
    catch (const SniperError& e)
    {
        CHECK(e.kind() == "no_cycle_boundary");
    }
}

TEST_CASE("dedup: identity without copies, one entry per seq")
{
    CaptureTrace t;
    t.packets = packets_for({1, 2, 1, 2}, 0, kMillisecond);
    CHECK(dedup_retransmissions(t).packets.size() == 4);

    auto copy = t.packets[0];
    copy.retransmission = true;
    t.packets.insert(t.packets.begin() + 1, copy);
    t.packets.push_back(copy);
    const auto d = dedup_retransmissions(t);
    REQUIRE(d.packets.size() == 4);
    CHECK_FALSE(d.packets[0].retransmission);
}

TEST_CASE("assign_ids: first-occurrence order from 1, repeats reuse the id")
{
    CaptureTrace t;
    t.packets = packets_for({5, 6, 7, 5}, 0, kMillisecond);
    IdMap ids;
    CHECK(assign_ids(t, ids) == MetadataSequence{1, 2, 3, 1});
    CHECK(ids.size() == 3);
    CHECK(ids.tuple(2).length == 106);
    CHECK(ids.lookup(Tuple{999, kA, kB}) == 0);

    IdMap empty;
    CHECK(assign_ids(CaptureTrace{}, empty).empty());
}

TEST_CASE("consistent_sequence: agreement, majority, and error")
{
    CaptureTrace good;
    good.packets = packets_for({1, 2, 1, 2, 3, 4}, 0, kMillisecond);
    CaptureTrace bad = good;
    bad.packets.pop_back();

    const auto three = consistent_sequence({good, good, good});
    CHECK(three.sequence == MetadataSequence{1, 2, 1, 2, 3, 4});

    const auto majority = consistent_sequence({bad, good, good});
    CHECK(majority.cycle_index == 1);
    CHECK(majority.sequence.size() == 6);

    CaptureTrace other;
    other.packets = packets_for({1, 2, 3, 4, 3, 4}, 0, kMillisecond);
    CHECK_THROWS_AS(consistent_sequence({good, bad, other}), SniperError);
    CHECK_THROWS_AS(consistent_sequence({good}), SniperError);
}

TEST_CASE("mine_patterns: worked examples")
{
    CHECK(mine_patterns({1, 2, 1, 2}) == std::vector<Pattern>{{{1, 2}, 2}});
    CHECK(mine_patterns({1, 2, 1, 2, 3, 4, 5, 6, 3, 4, 5, 6, 3, 4, 5, 6}) ==
          std::vector<Pattern>{{{1, 2}, 2}, {{3, 4, 5, 6}, 3}});

    const std::vector<std::uint32_t> p{1, 2, 1, 2, 3, 4, 1, 2, 1, 2, 3, 4, 5, 6};
    MetadataSequence seq{1, 2, 1, 2};
    seq.insert(seq.end(), p.begin(), p.end());
    seq.insert(seq.end(), p.begin(), p.end());
    CHECK(mine_patterns(seq) == std::vector<Pattern>{{{1, 2}, 2}, {p, 2}});
}

TEST_CASE("mine_patterns: undecomposable inputs are reported")
{
    for (const MetadataSequence& s : {MetadataSequence{1, 2, 1}, MetadataSequence{1, 2, 3, 4},
                                      MetadataSequence{1, 2, 1, 2, 3, 4}})
    {
        try
        {
            mine_patterns(s);
            FAIL("expected undecomposable");
        }
        catch (const SniperError& e)
        {
            CHECK(e.kind() == "undecomposable");
        }
    }
}

TEST_CASE("mine_patterns agrees with the enumeration oracle on generated sequences")
{
    for (std::uint64_t seed = 1; seed <= 1000; ++seed)
    {
        sim::SeededRng rng(seed);
        const auto seq = seed % 2 ? gen::decomposable(rng) : gen::arbitrary(rng);
        CAPTURE(seed);
        const auto expected = oracle::mine(seq);
        if (expected)
        {
            const auto got = mine_patterns(seq);
            REQUIRE(got == *expected);
            REQUIRE(expand(got) == seq);
            for (const auto& pat : got)
            {
                REQUIRE(pat.ids.size() % 2 == 0);
                REQUIRE(pat.repetitions >= 2);
            }
        }
        else
        {
            REQUIRE_THROWS_AS(mine_patterns(seq), SniperError);
        }
    }
}

TEST_CASE("mine_patterns agrees with the oracle on every sequence up to length 10 over 3 symbols")
{
    std::size_t checked = 0;
    for (std::size_t len = 2; len <= 10; len += 2)
    {
        MetadataSequence s(len, 1);
        while (true)
        {
            const auto expected = oracle::mine(s);
            bool ok = false;
            try
            {
                const auto got = mine_patterns(s);
                ok = expected && got == *expected;
            }
            catch (const SniperError&)
            {
                ok = !expected;
            }
            REQUIRE_MESSAGE(ok, "sequence of length " << len);
            ++checked;
            std::size_t i = 0;
            while (i < len && s[i] == 3)
            {
                s[i++] = 1;
            }
            if (i == len)
            {
                break;
            }
            ++s[i];
        }
    }
    CHECK(checked == 9 + 81 + 729 + 6561 + 59049);
}

TEST_CASE("merge_candidates: full merge of the repeated region, ascending state counts")
{
    const auto mined = mine_patterns({1, 2, 1, 2, 3, 4, 3, 4, 5, 6, 5, 6, 3, 4, 3, 4, 5, 6, 5, 6});
    REQUIRE(mined.size() == 5);
    const auto cands = merge_candidates(mined);
    REQUIRE(cands.size() == 2);
    CHECK(cands[0].states.size() == 2);
    CHECK(cands[0].states[1].ids ==
          std::vector<std::uint32_t>{3, 4, 3, 4, 5, 6, 5, 6, 3, 4, 3, 4, 5, 6, 5, 6});
    CHECK(cands[1].states == mined);
    for (const auto& c : cands)
    {
        CHECK(c.expand() == expand(mined));
    }

    const auto plain = mine_patterns({1, 2, 1, 2, 3, 4, 3, 4});
    const auto single = merge_candidates(plain);
    REQUIRE(single.size() == 1);
    CHECK(single[0].states == plain);
}

TEST_CASE("merge_candidates: generated decompositions stay lossless and strictly ascending")
{
    for (std::uint64_t seed = 1; seed <= 300; ++seed)
    {
        sim::SeededRng rng(seed);
        const auto seq = gen::decomposable(rng);
        const auto mined = mine_patterns(seq);
        const auto cands = merge_candidates(mined);
        REQUIRE(!cands.empty());
        for (std::size_t i = 0; i < cands.size(); ++i)
        {
            REQUIRE(cands[i].expand() == seq);
            if (i > 0)
            {
                REQUIRE(cands[i - 1].states.size() < cands[i].states.size());
            }
        }
    }
}

TEST_CASE("LTS and id map CSV round trip")
{
    Lts lts{{{{1, 2}, 3}, {{3, 4, 5, 6}, 125}}};
    std::stringstream ss;
    write_lts_csv(ss, lts);
    const auto back = read_lts_csv(ss);
    CHECK(back.states == lts.states);

    IdMap ids;
    ids.intern({120, kA, kB});
    ids.intern({88, kB, kA});
    std::stringstream si;
    write_idmap_csv(si, ids);
    const auto ids2 = read_idmap_csv(si);
    REQUIRE(ids2.size() == 2);
    CHECK(ids2.lookup({88, kB, kA}) == 2);
    CHECK(ids2.tuple(1) == Tuple{120, kA, kB});
}

TEST_CASE("profiling the plant: 3-state LTS with 3/125/15226 repetitions")
{
    auto& pp = profiled_plant();
    CHECK(pp.cycles.size() == 3);
    REQUIRE(pp.candidates.size() == 1);
    const auto& st = pp.candidates[0].states;
    REQUIRE(st.size() == 3);
    CHECK(st[0].ids.size() == 26);
    CHECK(st[1].ids.size() == 30);
    CHECK(st[2].ids.size() == 32);
    CHECK(st[0].repetitions == 3);
    CHECK(st[1].repetitions == 125);
    CHECK(st[2].repetitions == 15226);
    CHECK(pp.candidates[0].expand() == pp.profile.sequence);
}

TEST_CASE("dedup turns the fluctuation cycle into the clean cycle's sequence")
{
    auto& pp = profiled_plant();
    const auto raw = segment_cycles(pp.em.trace());
    std::size_t copies = 0;
    for (const auto& p : raw[0].packets)
    {
        copies += p.retransmission ? 1 : 0;
    }
    CHECK(copies > 0);
    REQUIRE(pp.cycles[0].packets.size() == pp.cycles[1].packets.size());
    for (std::size_t i = 0; i < pp.cycles[0].packets.size(); ++i)
    {
        REQUIRE(tuple_of(pp.cycles[0].packets[i]) == tuple_of(pp.cycles[1].packets[i]));
    }
}

TEST_CASE("tracker: signal after the penultimate repetition of the target")
{
    auto& pp = profiled_plant();
    const auto& lts = pp.candidates[0];
    const auto& cycle = pp.cycles[1];
    for (std::size_t target : {std::size_t{0}, std::size_t{1}})
    {
        OnlineTracker tr(lts, pp.profile.ids, target);
        std::optional<SimTime> at;
        for (const auto& p : cycle.packets)
        {
            if (tr.feed(p) == TrackEvent::signal)
            {
                at = p.capture_time;
            }
        }
        REQUIRE(at.has_value());
        // The signal packet is the last one of repetition reps-1 (1-based) in the target state.
        const auto reps = lts.states[target].repetitions;
        SimTime expected = -1;
        for (const auto& p : cycle.packets)
        {
            if (p.truth.plc_state == static_cast<int>(target) && p.truth.repetition == reps - 1)
            {
                expected = p.capture_time;
            }
        }
        CHECK(*at == expected);
        CHECK(tr.position().state == target);
        CHECK(tr.position().repetition == reps - 1);
        CHECK_FALSE(tr.lost());
    }
}

TEST_CASE("tracker: unknown id loses tracking at that offset")
{
    Lts lts{{{{1, 2}, 3}, {{3, 4}, 2}}};
    IdMap ids;
    CaptureTrace t;
    t.packets = packets_for({1, 2, 1, 2, 1, 2, 3, 4, 3, 4}, 0, kMillisecond);
    assign_ids(t, ids);
    OnlineTracker tr(lts, ids, 1);
    CHECK(tr.feed(t.packets[0]) == TrackEvent::none);
    auto stranger = t.packets[1];
    stranger.wire_length = 999;
    CHECK(tr.feed(stranger) == TrackEvent::lost);
    CHECK(tr.lost_time() == stranger.capture_time);
    CHECK(tr.position().offset == 1);
    CHECK_FALSE(tr.signaled());
}

TEST_CASE("tracker: duplicates are ignored and a completed model reports finished")
{
    Lts lts{{{{1, 2}, 2}}};
    IdMap ids;
    CaptureTrace t;
    t.packets = packets_for({1, 2, 1, 2}, 0, kMillisecond);
    assign_ids(t, ids);
    OnlineTracker tr(lts, ids, 0);
    CHECK(tr.feed(t.packets[0]) == TrackEvent::none);
    CHECK(tr.feed(t.packets[0]) == TrackEvent::none);
    CHECK(tr.feed(t.packets[1]) == TrackEvent::signal);
    CHECK(tr.position().repetition == 1);
}

TEST_CASE("drop rule: tuple match inside a half-open window")
{
    Lts lts{{{{1, 2}, 2}, {{3, 4}, 2}}};
    IdMap ids;
    CaptureTrace t;
    t.packets = packets_for({1, 2, 3, 4}, 0, kMillisecond);
    assign_ids(t, ids);
    auto rule = make_drop_rule(lts, ids, 1, 10 * kSecond, 5 * kSecond);
    CHECK(rule->match_set().size() == 2);
    CHECK_FALSE(rule->matches(t.packets[2], 10 * kSecond - 1));
    CHECK(rule->matches(t.packets[2], 10 * kSecond));
    CHECK(rule->matches(t.packets[3], 15 * kSecond - 1));
    CHECK_FALSE(rule->matches(t.packets[3], 15 * kSecond));
    CHECK_FALSE(rule->matches(t.packets[0], 12 * kSecond));

    auto zero = make_drop_rule(lts, ids, 1, 10 * kSecond, 0);
    CHECK_FALSE(zero->matches(t.packets[2], 10 * kSecond));
}

TEST_CASE("score: recall/precision over one repetition's unique packets")
{
    CaptureTrace t;
    auto mk = [&](std::uint64_t seq, bool critical, bool dropped, std::int64_t rep = 3) {
        PacketMeta p;
        p.src = kA;
        p.dst = kB;
        p.seq = seq;
        p.truth.plc_state = 0;
        p.truth.repetition = rep;
        p.truth.critical = critical;
        p.truth.dropped_by_adversary = dropped;
        t.packets.push_back(p);
    };
    for (std::uint64_t s = 1; s <= 26; ++s)
    {
        mk(s, s <= 6, true);
        mk(s, s <= 6, true); // retransmitted copy, counted once
    }
    mk(100, false, true, 2); // other repetition, ignored
    auto sc = score(t, 0, 3);
    CHECK(sc.recall == 1.0);
    REQUIRE(sc.precision.has_value());
    CHECK(*sc.precision == doctest::Approx(6.0 / 26.0));
    CHECK(sc.dropped_total == 26);
    CHECK(dropped_set(t).size() == 27);

    for (auto& p : t.packets)
    {
        p.truth.dropped_by_adversary = false;
    }
    sc = score(t, 0, 3);
    CHECK(sc.recall == 0.0);
    CHECK_FALSE(sc.precision.has_value());
}

TEST_CASE("deviation: clean continuation and first mismatch")
{
    Lts lts{{{{1, 2}, 2}, {{3, 4}, 2}}};
    IdMap ids;
    CaptureTrace t;
    t.packets = packets_for({1, 2, 1, 2, 3, 4, 3, 4}, 0, kSecond);
    assign_ids(t, ids);
    CHECK_FALSE(assess_deviation(lts, ids, t.packets, {}).deviated);
    CHECK_FALSE(assess_deviation(lts, ids, {}, {1, 0, 0}).deviated);

    std::vector<PacketMeta> stalled(t.packets.begin() + 4, t.packets.end()); // rep 2 of (1,2) dropped
    const auto d = assess_deviation(lts, ids, stalled, {0, 1, 0});
    CHECK(d.deviated);
    CHECK(d.first_divergence == 4 * kSecond);
}
