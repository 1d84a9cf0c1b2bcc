#include "ibh/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>

namespace ibh::detect
{
    std::vector<Window> tile(SimTime from, SimTime to, SimTime size)
    {
        if (size <= 0)
        {
            throw std::invalid_argument("window size must be positive");
        }
        std::vector<Window> out;
        for (SimTime s = from; s < to; s += size)
        {
            out.push_back({s, std::min(s + size, to)});
        }
        return out;
    }

    CaptureTrace egress_view(const CaptureTrace& capture)
    {
        CaptureTrace out;
        out.capture_start = capture.capture_start;
        out.capture_end = capture.capture_end;
        out.packets.reserve(capture.packets.size());
        for (const auto& p : capture.packets)
        {
            if (!p.truth.dropped_by_adversary)
            {
                out.packets.push_back(p);
            }
        }
        return out;
    }

    namespace
    {
        // Calls fn(window_index, packet) for every packet inside the tiled span.
        template <class Fn>
        std::vector<Window> for_each_windowed(const CaptureTrace& t, SimTime size, Fn fn)
        {
            auto windows = tile(t.capture_start, t.capture_end, size);
            for (const auto& p : t.packets)
            {
                if (p.capture_time < t.capture_start || p.capture_time >= t.capture_end)
                {
                    continue;
                }
                fn(static_cast<std::size_t>((p.capture_time - t.capture_start) / size), p);
            }
            return windows;
        }

        std::vector<std::vector<double>> count_vectors(const CaptureTrace& t, SimTime size,
                                                       const std::vector<std::pair<Ipv4, Ipv4>>& pairs,
                                                       std::vector<Window>& windows)
        {
            std::map<std::pair<Ipv4, Ipv4>, std::size_t> index;
            for (std::size_t i = 0; i < pairs.size(); ++i)
            {
                index.emplace(pairs[i], i);
            }
            std::vector<std::vector<double>> vec;
            windows = for_each_windowed(t, size, [&](std::size_t w, const PacketMeta& p) {
                if (p.retransmission)
                {
                    return;
                }
                if (vec.size() <= w)
                {
                    vec.resize(w + 1, std::vector<double>(pairs.size() + 1, 0.0));
                }
                auto it = index.find({p.src, p.dst});
                vec[w][it == index.end() ? pairs.size() : it->second] += 1.0;
            });
            vec.resize(windows.size(), std::vector<double>(pairs.size() + 1, 0.0));
            return vec;
        }

        double distance(const std::vector<double>& a, const std::vector<double>& b)
        {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i)
            {
                const double d = a[i] - b[i];
                s += d * d;
            }
            return std::sqrt(s);
        }
    }

    NndModel nnd_train(const std::vector<CaptureTrace>& benign, SimTime window, double safety_factor)
    {
        std::set<std::pair<Ipv4, Ipv4>> pairs;
        std::size_t packets = 0;
        for (const auto& t : benign)
        {
            for (const auto& p : t.packets)
            {
                pairs.emplace(p.src, p.dst);
                ++packets;
            }
        }
        if (packets == 0)
        {
            throw std::invalid_argument("nnd: empty training traffic");
        }
        NndModel m;
        m.window = window;
        m.pairs.assign(pairs.begin(), pairs.end());

        std::map<std::vector<double>, std::size_t> multiplicity;
        for (const auto& t : benign)
        {
            std::vector<Window> w;
            for (auto& v : count_vectors(t, window, m.pairs, w))
            {
                ++multiplicity[v];
            }
        }
        for (const auto& [v, n] : multiplicity)
        {
            m.vectors.push_back(v);
        }
        // Leave-one-out: a vector seen twice has a neighbour at distance 0.
        double worst = 0.0;
        std::size_t i = 0;
        for (const auto& [v, n] : multiplicity)
        {
            if (n < 2 && m.vectors.size() > 1)
            {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < m.vectors.size(); ++j)
                {
                    if (j != i)
                    {
                        best = std::min(best, distance(v, m.vectors[j]));
                    }
                }
                worst = std::max(worst, best);
            }
            ++i;
        }
        m.threshold = worst * safety_factor;
        return m;
    }

    std::vector<Verdict> nnd_detect(const NndModel& model, const CaptureTrace& live)
    {
        if (model.vectors.empty())
        {
            throw std::logic_error("nnd: untrained model");
        }
        std::vector<Window> windows;
        const auto vecs = count_vectors(live, model.window, model.pairs, windows);
        std::vector<Verdict> out;
        out.reserve(windows.size());
        for (std::size_t w = 0; w < windows.size(); ++w)
        {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& t : model.vectors)
            {
                best = std::min(best, distance(vecs[w], t));
                if (best <= model.threshold)
                {
                    break;
                }
            }
            out.push_back({windows[w].start, windows[w].end, best > model.threshold});
        }
        return out;
    }

    namespace
    {
        struct WindowSymbols
        {
            std::vector<sniper::MetadataId> ids;
            std::vector<SimTime> times;
        };

        std::vector<WindowSymbols> symbolize(const CaptureTrace& t, SimTime size, sniper::IdMap& ids, bool intern,
                                             std::vector<Window>& windows)
        {
            std::vector<WindowSymbols> out;
            windows = for_each_windowed(t, size, [&](std::size_t w, const PacketMeta& p) {
                if (p.retransmission)
                {
                    return;
                }
                if (out.size() <= w)
                {
                    out.resize(w + 1);
                }
                const auto tup = sniper::tuple_of(p);
                out[w].ids.push_back(intern ? ids.intern(tup) : ids.lookup(tup));
                out[w].times.push_back(p.capture_time);
            });
            out.resize(windows.size());
            return out;
        }
    }

    AutomatonModel detano_train(const std::vector<CaptureTrace>& benign, SimTime window, double tolerance,
                                SimTime gap_split)
    {
        AutomatonModel m;
        m.window = window;
        m.tolerance = tolerance;
        m.gap_split = gap_split;
        std::map<std::pair<sniper::MetadataId, sniper::MetadataId>, double> counts;
        std::map<sniper::MetadataId, double> from_counts;
        std::vector<std::vector<WindowSymbols>> all;
        for (const auto& t : benign)
        {
            std::vector<Window> w;
            all.push_back(symbolize(t, window, m.ids, true, w));
            for (const auto& ws : all.back())
            {
                for (std::size_t i = 1; i < ws.ids.size(); ++i)
                {
                    if (ws.times[i] - ws.times[i - 1] > gap_split)
                    {
                        continue;
                    }
                    counts[{ws.ids[i - 1], ws.ids[i]}] += 1.0;
                    from_counts[ws.ids[i - 1]] += 1.0;
                }
            }
        }
        if (m.ids.size() == 0)
        {
            throw std::invalid_argument("detano: empty training traffic");
        }
        for (const auto& [bg, c] : counts)
        {
            m.log_prob[bg] = std::log(c / from_counts[bg.first]);
        }
        m.trained = true;
        double min_ll = 0.0;
        for (const auto& trace_windows : all)
        {
            for (const auto& ws : trace_windows)
            {
                double sum = 0.0;
                std::size_t n = 0;
                for (std::size_t i = 1; i < ws.ids.size(); ++i)
                {
                    if (ws.times[i] - ws.times[i - 1] <= gap_split)
                    {
                        sum += m.log_prob.at({ws.ids[i - 1], ws.ids[i]});
                        ++n;
                    }
                }
                if (n)
                {
                    min_ll = std::min(min_ll, sum / static_cast<double>(n));
                }
            }
        }
        m.min_mean_log_likelihood = min_ll;
        return m;
    }

    std::vector<Verdict> detano_detect(const AutomatonModel& model, const CaptureTrace& live)
    {
        if (!model.trained)
        {
            throw std::logic_error("detano: untrained model");
        }
        auto ids = model.ids;
        std::vector<Window> windows;
        const auto symbols = symbolize(live, model.window, ids, false, windows);
        std::vector<Verdict> out;
        out.reserve(windows.size());
        for (std::size_t w = 0; w < windows.size(); ++w)
        {
            const auto& ws = symbols[w];
            bool flagged = std::find(ws.ids.begin(), ws.ids.end(), sniper::MetadataId{0}) != ws.ids.end();
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 1; i < ws.ids.size() && !flagged; ++i)
            {
                if (ws.times[i] - ws.times[i - 1] > model.gap_split)
                {
                    continue;
                }
                auto it = model.log_prob.find({ws.ids[i - 1], ws.ids[i]});
                if (it == model.log_prob.end())
                {
                    flagged = true;
                    break;
                }
                sum += it->second;
                ++n;
            }
            if (!flagged && n > 0 && sum / static_cast<double>(n) < model.min_mean_log_likelihood - model.tolerance)
            {
                flagged = true;
            }
            out.push_back({windows[w].start, windows[w].end, flagged});
        }
        return out;
    }

    bool Atom::holds(const plant::LogEntry& e) const
    {
        const double v = e.values[field];
        switch (kind)
        {
        case Kind::eq:
            return v == value;
        case Kind::neq:
            return v != value;
        case Kind::ge:
            return v >= value;
        }
        return false;
    }

    std::string Atom::str() const
    {
        const auto& f = plant::log_schema()[field];
        switch (kind)
        {
        case Kind::eq:
            return f.name + "=" + f.labels.at(static_cast<std::size_t>(value));
        case Kind::neq:
            return f.name + "!=" + f.labels.at(static_cast<std::size_t>(value));
        case Kind::ge: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%g", value);
            return f.name + ">=" + buf;
        }
        }
        return "?";
    }

    std::string InvariantSet::str(const Rule& r) const { return atoms.at(r.lhs).str() + " -> " + atoms.at(r.rhs).str(); }

    InvariantSet pad_mine(const std::vector<plant::LogEntry>& training, const PadOptions& opt)
    {
        if (training.empty())
        {
            throw std::invalid_argument("pad: empty training log");
        }
        InvariantSet inv;
        const auto& schema = plant::log_schema();
        for (std::size_t f = 0; f < schema.size(); ++f)
        {
            if (schema[f].categorical)
            {
                for (std::size_t v = 0; v < schema[f].labels.size(); ++v)
                {
                    inv.atoms.push_back({f, Atom::Kind::eq, static_cast<double>(v)});
                    inv.atoms.push_back({f, Atom::Kind::neq, static_cast<double>(v)});
                }
            }
        }
        for (const auto& name : opt.level_fields)
        {
            const auto f = plant::field_index(name);
            for (const double mark : opt.level_marks)
            {
                inv.atoms.push_back({f, Atom::Kind::ge, mark});
            }
        }

        // Truth table as bitsets over entries, one per atom.
        const std::size_t n = training.size();
        const std::size_t words = (n + 63) / 64;
        std::vector<std::vector<std::uint64_t>> truth(inv.atoms.size(), std::vector<std::uint64_t>(words, 0));
        std::vector<std::size_t> support(inv.atoms.size(), 0);
        for (std::size_t a = 0; a < inv.atoms.size(); ++a)
        {
            for (std::size_t i = 0; i < n; ++i)
            {
                if (inv.atoms[a].holds(training[i]))
                {
                    truth[a][i / 64] |= std::uint64_t{1} << (i % 64);
                    ++support[a];
                }
            }
        }
        for (std::size_t a = 0; a < inv.atoms.size(); ++a)
        {
            if (support[a] < opt.min_support)
            {
                continue;
            }
            for (std::size_t b = 0; b < inv.atoms.size(); ++b)
            {
                if (inv.atoms[a].field == inv.atoms[b].field)
                {
                    continue;
                }
                bool implied = true;
                for (std::size_t w = 0; w < words && implied; ++w)
                {
                    implied = (truth[a][w] & ~truth[b][w]) == 0;
                }
                if (implied)
                {
                    inv.rules.push_back({a, b, support[a]});
                }
            }
        }
        return inv;
    }

    std::vector<Verdict> pad_check(const InvariantSet& inv, const std::vector<plant::LogEntry>& live)
    {
        std::vector<Verdict> out;
        out.reserve(live.size());
        std::vector<char> holds(inv.atoms.size());
        for (const auto& e : live)
        {
            for (std::size_t a = 0; a < inv.atoms.size(); ++a)
            {
                holds[a] = inv.atoms[a].holds(e) ? 1 : 0;
            }
            bool violated = false;
            for (const auto& r : inv.rules)
            {
                if (holds[r.lhs] && !holds[r.rhs])
                {
                    violated = true;
                    break;
                }
            }
            out.push_back({e.time, e.time, violated});
        }
        return out;
    }

    std::vector<bool> label_by_events(const std::vector<Verdict>& verdicts, const std::vector<SimTime>& events)
    {
        auto sorted = events;
        std::sort(sorted.begin(), sorted.end());
        std::vector<bool> out;
        out.reserve(verdicts.size());
        for (const auto& v : verdicts)
        {
            auto it = std::lower_bound(sorted.begin(), sorted.end(), v.start);
            out.push_back(it != sorted.end() && *it < v.end);
        }
        return out;
    }

    std::vector<bool> label_by_interval(const std::vector<Verdict>& verdicts, SimTime from, SimTime to)
    {
        std::vector<bool> out;
        out.reserve(verdicts.size());
        for (const auto& v : verdicts)
        {
            out.push_back(v.end >= from && v.end < to);
        }
        return out;
    }

    Evaluation evaluate(const std::vector<Verdict>& verdicts, const std::vector<bool>& attack, SimTime attack_start)
    {
        if (verdicts.size() != attack.size())
        {
            throw std::invalid_argument("evaluate: one label per verdict required");
        }
        Evaluation e;
        for (std::size_t i = 0; i < verdicts.size(); ++i)
        {
            const bool f = verdicts[i].flagged;
            if (attack[i])
            {
                ++e.positives;
                e.true_positives += f ? 1 : 0;
            }
            else
            {
                ++e.negatives;
                e.false_positives += f ? 1 : 0;
            }
            if (f && !e.delay_s)
            {
                const auto& v = verdicts[i];
                // Windows must reach past the attack start; point verdicts may coincide with it.
                const bool after = v.end > v.start ? v.end > attack_start : v.end >= attack_start;
                if (after)
                {
                    e.delay_s = to_seconds(v.end - attack_start);
                }
            }
        }
        e.tpr = e.positives ? static_cast<double>(e.true_positives) / static_cast<double>(e.positives) : 0.0;
        e.fpr = e.negatives ? static_cast<double>(e.false_positives) / static_cast<double>(e.negatives) : 0.0;
        return e;
    }
}
