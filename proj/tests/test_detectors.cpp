#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ibh/detectors.hpp"
#include "ibh/scenario.hpp"

#include <algorithm>
#include <map>

using namespace ibh;
using namespace ibh::detect;

namespace
{
    constexpr Ipv4 kA = make_ipv4(192, 168, 1, 10);
    constexpr Ipv4 kB = make_ipv4(192, 168, 1, 20);
    constexpr Ipv4 kC = make_ipv4(192, 168, 1, 30);

    PacketMeta packet(std::uint32_t id, SimTime at)
    {
        static std::uint64_t seq = 0;
        PacketMeta p;
        p.src = id % 2 ? kA : kB;
        p.dst = id % 2 ? kB : kA;
        p.wire_length = 100 + id;
        p.seq = ++seq;
        p.capture_time = at;
        return p;
    }

    // One window per entry of `counts`, each holding that many A->B packets.
    CaptureTrace counted_windows(const std::vector<int>& counts, SimTime window)
    {
        CaptureTrace t;
        for (std::size_t w = 0; w < counts.size(); ++w)
        {
            for (int k = 0; k < counts[w]; ++k)
            {
                t.packets.push_back(packet(1, static_cast<SimTime>(w) * window + k * kMillisecond));
            }
        }
        t.capture_end = static_cast<SimTime>(counts.size()) * window;
        return t;
    }

    // Ids cycling 1,2,3,4 every 100 ms over [0, span).
    CaptureTrace cyclic(SimTime span)
    {
        CaptureTrace t;
        std::uint32_t id = 1;
        for (SimTime at = 0; at < span; at += 100 * kMillisecond)
        {
            t.packets.push_back(packet(id, at));
            id = id % 4 + 1;
        }
        t.capture_end = span;
        return t;
    }

    const scenario::RunArtifacts& profile_run()
    {
        static const auto run = scenario::run_profile_emulation(scenario::ScenarioConfig{}, 1);
        return run;
    }
}

TEST_CASE("tile: contiguous tumbling windows, last one cut")
{
    const auto w = tile(0, 25 * kSecond, 10 * kSecond);
    REQUIRE(w.size() == 3);
    CHECK(w[2].start == 20 * kSecond);
    CHECK(w[2].end == 25 * kSecond);
    CHECK(tile(5, 5, kSecond).empty());
    CHECK_THROWS(tile(0, 10, 0));
}

TEST_CASE("nnd: identical windows give threshold 0; replay is clean; deficit is flagged")
{
    const auto train = counted_windows({20, 20, 20, 20}, 10 * kSecond);
    const auto model = nnd_train({train}, 10 * kSecond);
    CHECK(model.threshold == 0.0);
    for (const auto& v : nnd_detect(model, train))
    {
        CHECK_FALSE(v.flagged);
    }
    const auto live = counted_windows({20, 12, 20}, 10 * kSecond);
    const auto verdicts = nnd_detect(model, live);
    REQUIRE(verdicts.size() == 3);
    CHECK_FALSE(verdicts[0].flagged);
    CHECK(verdicts[1].flagged);
    CHECK(verdicts[1].end == 20 * kSecond);

    CaptureTrace empty;
    CHECK(nnd_detect(model, empty).empty());
    CHECK_THROWS(nnd_train({empty}, 10 * kSecond));
}

TEST_CASE("nnd: threshold is the largest leave-one-out distance times the safety factor")
{
    const auto train = counted_windows({10, 12, 15}, 10 * kSecond);
    CHECK(nnd_train({train}, 10 * kSecond).threshold == doctest::Approx(3.0));
    CHECK(nnd_train({train}, 10 * kSecond, 2.0).threshold == doctest::Approx(6.0));

    // Traffic from an unseen pair lands in the extra dimension.
    auto model = nnd_train({counted_windows({10, 10}, 10 * kSecond)}, 10 * kSecond);
    auto live = counted_windows({10}, 10 * kSecond);
    auto extra = packet(1, kSecond);
    extra.dst = kC;
    live.packets.push_back(extra);
    CHECK(nnd_detect(model, live)[0].flagged);
}

TEST_CASE("nnd: removing fewer packets than the threshold never flags")
{
    for (std::uint64_t seed = 1; seed <= 200; ++seed)
    {
        sim::SeededRng rng(seed);
        std::vector<int> counts;
        const auto n = rng.uniform_int(3, 8);
        for (std::int64_t i = 0; i < n; ++i)
        {
            counts.push_back(static_cast<int>(rng.uniform_int(20, 60)));
        }
        const auto model = nnd_train({counted_windows(counts, 10 * kSecond)}, 10 * kSecond);
        const auto budget = static_cast<int>(std::ceil(model.threshold)) - 1;
        if (budget < 1)
        {
            continue;
        }
        auto live = counts;
        const auto victim = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
        live[victim] -= static_cast<int>(rng.uniform_int(1, budget));
        CAPTURE(seed);
        for (const auto& v : nnd_detect(model, counted_windows(live, 10 * kSecond)))
        {
            REQUIRE_FALSE(v.flagged);
        }
    }
}

TEST_CASE("detano: replay is clean, unknown ids and unseen bigrams flag")
{
    const auto train = cyclic(60 * kSecond);
    const auto model = detano_train({train}, 10 * kSecond);
    CHECK(model.trained);
    for (const auto& v : detano_detect(model, train))
    {
        CHECK_FALSE(v.flagged);
    }
    // Transition probabilities per source id sum to 1.
    std::map<sniper::MetadataId, double> mass;
    for (const auto& [bigram, lp] : model.log_prob)
    {
        mass[bigram.first] += std::exp(lp);
    }
    for (const auto& [id, m] : mass)
    {
        CHECK(m == doctest::Approx(1.0));
    }

    auto live = cyclic(30 * kSecond);
    live.packets[150].wire_length = 999;
    auto v = detano_detect(model, live);
    REQUIRE(v.size() == 3);
    CHECK_FALSE(v[0].flagged);
    CHECK(v[1].flagged);
    CHECK_FALSE(v[2].flagged);

    live = cyclic(30 * kSecond);
    std::swap(live.packets[250].wire_length, live.packets[251].wire_length);
    std::swap(live.packets[250].src, live.packets[251].src);
    std::swap(live.packets[250].dst, live.packets[251].dst);
    v = detano_detect(model, live);
    CHECK(v[2].flagged);

    CHECK_THROWS(detano_detect(AutomatonModel{}, live));
    CHECK_THROWS(detano_train({CaptureTrace{}}, 10 * kSecond));
}

TEST_CASE("detano: an unseen bigram split by a window edge is not scored")
{
    const auto model = detano_train({cyclic(60 * kSecond)}, 10 * kSecond);
    // 38 packets ending ...,1,2 then 1,2,3,4,... 100 ms later: the bigram 2->1 never occurs in training.
    auto build = [](SimTime first_burst) {
        CaptureTrace t;
        std::uint32_t id = 1;
        SimTime at = first_burst;
        for (int i = 0; i < 38; ++i, at += 100 * kMillisecond)
        {
            t.packets.push_back(packet(id, at));
            id = id % 4 + 1;
        }
        id = 1;
        for (int i = 0; i < 40; ++i, at += 100 * kMillisecond)
        {
            t.packets.push_back(packet(id, at));
            id = id % 4 + 1;
        }
        t.capture_end = 20 * kSecond;
        return t;
    };
    for (const auto& v : detano_detect(model, build(10 * kSecond - 38 * 100 * kMillisecond)))
    {
        CHECK_FALSE(v.flagged);
    }
    // The same bigram inside a window, without a silence, is flagged.
    const auto inside = detano_detect(model, build(0));
    CHECK(inside[0].flagged);
}

TEST_CASE("pad: baseline invariants, consistency on training, pinned count")
{
    const auto& log = profile_run().log;
    const auto inv = pad_mine(log);
    CHECK(inv.rules.size() == 498);

    bool found = false;
    for (const auto& r : inv.rules)
    {
        found = found || inv.str(r) == "MV101.Status=Open -> P2.State!=S21";
        REQUIRE(inv.atoms[r.lhs].field != inv.atoms[r.rhs].field);
        REQUIRE(r.support >= 10);
    }
    CHECK(found);
    for (const auto& v : pad_check(inv, log))
    {
        REQUIRE_FALSE(v.flagged);
    }
    CHECK_THROWS(pad_mine({}));
}

TEST_CASE("pad: held-out benign cycle raises no flags")
{
    const auto inv = pad_mine(profile_run().log);
    scenario::ScenarioConfig cfg;
    const auto held = scenario::run_benign(cfg, 1, 0, cfg.plant.cycle_period(), 2, true);
    const auto v = pad_check(inv, held.log);
    CHECK(v.size() == held.log.size());
    CHECK(std::none_of(v.begin(), v.end(), [](const Verdict& x) { return x.flagged; }));
}

TEST_CASE("evaluate: rates, delay and quantization")
{
    std::vector<Verdict> v{{0, 600 * kSecond, false}, {600 * kSecond, 1200 * kSecond, true},
                           {1200 * kSecond, 1800 * kSecond, false}};
    const auto e = evaluate(v, {true, true, false}, 100 * kSecond);
    CHECK(e.tpr == 0.5);
    CHECK(e.fpr == 0.0);
    REQUIRE(e.delay_s.has_value());
    CHECK(*e.delay_s == doctest::Approx(1100.0));
    CHECK(e.positives == 2);
    CHECK(e.negatives == 1);

    for (auto& x : v)
    {
        x.flagged = false;
    }
    const auto none = evaluate(v, {true, true, false}, 100 * kSecond);
    CHECK(none.tpr == 0.0);
    CHECK_FALSE(none.delay_s.has_value());

    v[0].flagged = v[1].flagged = true;
    const auto all = evaluate(v, {true, true, false}, 100 * kSecond);
    CHECK(all.tpr == 1.0);
    CHECK(all.fpr == 0.0);
    CHECK_THROWS(evaluate(v, {true}, 0));

    for (std::uint64_t seed = 1; seed <= 500; ++seed)
    {
        sim::SeededRng rng(seed);
        const SimTime size = rng.uniform_int(1, 120) * kSecond;
        const auto windows = tile(0, 2 * kHour, size);
        std::vector<Verdict> verdicts;
        for (const auto& w : windows)
        {
            verdicts.push_back({w.start, w.end, rng.uniform01() < 0.2});
        }
        const SimTime start = rng.uniform_int(0, 2 * kHour - 1);
        const auto labels = label_by_interval(verdicts, start, 2 * kHour);
        const auto ev = evaluate(verdicts, labels, start);
        REQUIRE(ev.tpr >= 0.0);
        REQUIRE(ev.tpr <= 1.0);
        REQUIRE(ev.fpr >= 0.0);
        REQUIRE(ev.fpr <= 1.0);
        REQUIRE(ev.positives + ev.negatives == verdicts.size());
        if (ev.delay_s)
        {
            const SimTime containing_end = (start / size + 1) * size;
            REQUIRE(*ev.delay_s >= to_seconds(std::min<SimTime>(containing_end, 2 * kHour) - start) - 1e-9);
        }
    }
}

TEST_CASE("labels: by contained event and by interval")
{
    std::vector<Verdict> v{{0, 10, false}, {10, 20, false}, {20, 30, false}};
    CHECK(label_by_events(v, {12, 15}) == std::vector<bool>{false, true, false});
    CHECK(label_by_interval(v, 15, 30) == std::vector<bool>{false, true, false});
}
