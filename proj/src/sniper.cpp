#include "ibh/sniper.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace ibh::sniper
{
    namespace
    {
        std::uint64_t flow_key(const PacketMeta& p) { return (std::uint64_t{p.src.value} << 32) | p.dst.value; }

        std::vector<std::string> split(const std::string& line, char sep)
        {
            std::vector<std::string> out;
            std::string cell;
            std::istringstream is(line);
            while (std::getline(is, cell, sep))
            {
                out.push_back(cell);
            }
            if (!line.empty() && line.back() == sep)
            {
                out.emplace_back();
            }
            return out;
        }

        double mean_gap(const std::vector<PacketMeta>& pkts, std::size_t first, std::size_t last)
        {
            if (last <= first + 1)
            {
                return 0.0;
            }
            return static_cast<double>(pkts[last - 1].capture_time - pkts[first].capture_time) /
                   static_cast<double>(last - first - 1);
        }
    }

    MetadataId IdMap::intern(const Tuple& t)
    {
        auto it = index_.find(t);
        if (it != index_.end())
        {
            return it->second;
        }
        tuples_.push_back(t);
        const auto id = static_cast<MetadataId>(tuples_.size());
        index_.emplace(t, id);
        return id;
    }

    MetadataId IdMap::lookup(const Tuple& t) const
    {
        auto it = index_.find(t);
        return it == index_.end() ? 0 : it->second;
    }

    const Tuple& IdMap::tuple(MetadataId id) const
    {
        if (id == 0 || id > tuples_.size())
        {
            throw std::out_of_range("metadata id " + std::to_string(id) + " not assigned");
        }
        return tuples_[id - 1];
    }

    std::size_t Lts::expanded_length() const
    {
        std::size_t n = 0;
        for (const auto& p : states)
        {
            n += p.ids.size() * static_cast<std::size_t>(p.repetitions);
        }
        return n;
    }

    MetadataSequence Lts::expand() const
    {
        MetadataSequence out;
        out.reserve(expanded_length());
        for (const auto& p : states)
        {
            for (std::int64_t r = 0; r < p.repetitions; ++r)
            {
                out.insert(out.end(), p.ids.begin(), p.ids.end());
            }
        }
        return out;
    }

    std::vector<CaptureTrace> segment_cycles(const CaptureTrace& trace, const SegmentOptions& opt)
    {
        const auto& pkts = trace.packets;
        // Segment bounds as [first, last) packet index ranges.
        std::vector<std::pair<std::size_t, std::size_t>> bounds;
        std::size_t start = 0;
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 1; i < pkts.size(); ++i)
        {
            const auto gap = static_cast<double>(pkts[i].capture_time - pkts[i - 1].capture_time);
            if (count >= opt.min_gaps && gap > opt.gap_factor * (sum / static_cast<double>(count)))
            {
                bounds.emplace_back(start, i);
                start = i;
                sum = 0.0;
                count = 0;
                continue;
            }
            sum += gap;
            ++count;
        }
        if (!pkts.empty())
        {
            bounds.emplace_back(start, pkts.size());
        }

        auto silent_for = [&](double silence, std::size_t first, std::size_t last) {
            const double m = mean_gap(pkts, first, last);
            return last - first > opt.min_gaps && silence > opt.gap_factor * m;
        };

        bool any_boundary = bounds.size() > 1;
        std::vector<CaptureTrace> cycles;
        for (std::size_t k = 0; k < bounds.size(); ++k)
        {
            const auto [first, last] = bounds[k];
            bool complete = true;
            if (k == 0)
            {
                const bool lead = silent_for(static_cast<double>(pkts[first].capture_time - trace.capture_start),
                                             first, last);
                any_boundary = any_boundary || lead;
                complete = lead;
            }
            if (k + 1 == bounds.size())
            {
                const bool trail =
                    silent_for(static_cast<double>(trace.capture_end - pkts[last - 1].capture_time), first, last);
                any_boundary = any_boundary || trail;
                complete = complete && trail;
            }
            if (!complete)
            {
                continue;
            }
            CaptureTrace c;
            c.capture_start = pkts[first].capture_time;
            c.capture_end = pkts[last - 1].capture_time;
            c.packets.assign(pkts.begin() + static_cast<std::ptrdiff_t>(first),
                             pkts.begin() + static_cast<std::ptrdiff_t>(last));
            cycles.push_back(std::move(c));
        }
        if (!any_boundary)
        {
            throw SniperError("no_cycle_boundary", "no cycle boundary detected");
        }
        return cycles;
    }

    CaptureTrace dedup_retransmissions(const CaptureTrace& cycle)
    {
        CaptureTrace out;
        out.capture_start = cycle.capture_start;
        out.capture_end = cycle.capture_end;
        out.packets.reserve(cycle.packets.size());
        std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
        for (const auto& p : cycle.packets)
        {
            if (seen.emplace(flow_key(p), p.seq).second)
            {
                out.packets.push_back(p);
            }
        }
        return out;
    }

    MetadataSequence assign_ids(const CaptureTrace& cycle, IdMap& ids)
    {
        MetadataSequence seq;
        seq.reserve(cycle.packets.size());
        for (const auto& p : cycle.packets)
        {
            seq.push_back(ids.intern(tuple_of(p)));
        }
        return seq;
    }

    ProfiledSequence consistent_sequence(const std::vector<CaptureTrace>& cycles)
    {
        if (cycles.size() < 2)
        {
            throw SniperError("insufficient_cycles", "need at least two complete cycles to confirm a sequence");
        }
        std::vector<std::vector<Tuple>> tuples;
        tuples.reserve(cycles.size());
        for (const auto& c : cycles)
        {
            std::vector<Tuple> t;
            t.reserve(c.packets.size());
            for (const auto& p : c.packets)
            {
                t.push_back(tuple_of(p));
            }
            tuples.push_back(std::move(t));
        }
        for (std::size_t i = 0; i < tuples.size(); ++i)
        {
            for (std::size_t j = i + 1; j < tuples.size(); ++j)
            {
                if (!tuples[i].empty() && tuples[i] == tuples[j])
                {
                    ProfiledSequence out;
                    out.cycle_index = i;
                    out.sequence = assign_ids(cycles[i], out.ids);
                    return out;
                }
            }
        }
        throw SniperError("no_agreement", "no two captured cycles agree; capture more cycles");
    }

    std::vector<Pattern> mine_patterns(const MetadataSequence& seq)
    {
        const std::size_t len = seq.size();
        if (len % 2 != 0)
        {
            throw SniperError("undecomposable", "undecomposable sequence: odd length " + std::to_string(len));
        }
        const auto* s = seq.data();
        auto block_equal = [s](std::size_t a, std::size_t b, std::size_t n) { return std::equal(s + a, s + a + n, s + b); };

        struct Frame
        {
            std::size_t pos;
            std::size_t n;
            std::int64_t reps;
        };
        std::vector<Frame> stack;
        std::size_t pos = 0;
        std::size_t min_n = 2;
        while (pos < len)
        {
            std::size_t found = 0;
            for (std::size_t n = min_n; pos + 2 * n <= len; n += 2)
            {
                if (block_equal(pos, pos + n, n))
                {
                    found = n;
                    break;
                }
            }
            if (found != 0)
            {
                std::int64_t reps = 2;
                while (pos + static_cast<std::size_t>(reps + 1) * found <= len &&
                       block_equal(pos, pos + static_cast<std::size_t>(reps) * found, found))
                {
                    ++reps;
                }
                stack.push_back({pos, found, reps});
                pos += static_cast<std::size_t>(reps) * found;
                min_n = 2;
                continue;
            }
            // Residual: give back one repetition of the last pattern and look for a longer
            // pattern where it used to end. A pattern is never kept with one repetition.
            if (stack.empty())
            {
                throw SniperError("undecomposable", "undecomposable sequence: residual of " +
                                                        std::to_string(len - pos) + " ids at position " +
                                                        std::to_string(pos));
            }
            auto& top = stack.back();
            min_n = top.n + 2;
            if (top.reps > 2)
            {
                --top.reps;
                pos = top.pos + static_cast<std::size_t>(top.reps) * top.n;
            }
            else
            {
                pos = top.pos;
                stack.pop_back();
            }
        }

        std::vector<Pattern> out;
        out.reserve(stack.size());
        for (const auto& f : stack)
        {
            out.push_back({MetadataSequence(s + f.pos, s + f.pos + f.n), f.reps});
        }
        return out;
    }

    std::vector<Lts> merge_candidates(const std::vector<Pattern>& patterns)
    {
        const std::size_t t = patterns.size();
        struct Region
        {
            std::size_t first;
            std::size_t count; // tokens covered
        };
        std::vector<Region> regions;
        for (std::size_t i = 0; i < t;)
        {
            bool found = false;
            for (std::size_t b = 2; i + 2 * b <= t; ++b)
            {
                if (std::equal(patterns.begin() + static_cast<std::ptrdiff_t>(i),
                               patterns.begin() + static_cast<std::ptrdiff_t>(i + b),
                               patterns.begin() + static_cast<std::ptrdiff_t>(i + b)))
                {
                    std::size_t copies = 2;
                    while (i + (copies + 1) * b <= t &&
                           std::equal(patterns.begin() + static_cast<std::ptrdiff_t>(i),
                                      patterns.begin() + static_cast<std::ptrdiff_t>(i + b),
                                      patterns.begin() + static_cast<std::ptrdiff_t>(i + copies * b)))
                    {
                        ++copies;
                    }
                    regions.push_back({i, copies * b});
                    i += copies * b;
                    found = true;
                    break;
                }
            }
            if (!found)
            {
                ++i;
            }
        }

        // Cap the subset enumeration; beyond this only the base and the full merge.
        constexpr std::size_t kMaxRegions = 16;
        std::vector<std::uint32_t> masks;
        if (regions.size() <= kMaxRegions)
        {
            for (std::uint32_t m = 0; m < (1u << regions.size()); ++m)
            {
                masks.push_back(m);
            }
        }
        else
        {
            masks = {0u, ~0u};
        }

        std::map<std::size_t, Lts> by_count;
        for (const auto mask : masks)
        {
            Lts lts;
            std::size_t r = 0;
            for (std::size_t i = 0; i < t;)
            {
                while (r < regions.size() && regions[r].first + regions[r].count <= i)
                {
                    ++r;
                }
                if (r < regions.size() && regions[r].first == i && (mask >> r & 1u))
                {
                    Pattern merged;
                    merged.repetitions = 1;
                    for (std::size_t k = i; k < i + regions[r].count; ++k)
                    {
                        for (std::int64_t rep = 0; rep < patterns[k].repetitions; ++rep)
                        {
                            merged.ids.insert(merged.ids.end(), patterns[k].ids.begin(), patterns[k].ids.end());
                        }
                    }
                    lts.states.push_back(std::move(merged));
                    i += regions[r].count;
                    continue;
                }
                lts.states.push_back(patterns[i]);
                ++i;
            }
            by_count.emplace(lts.states.size(), std::move(lts));
        }
        std::vector<Lts> out;
        for (auto& [n, lts] : by_count)
        {
            out.push_back(std::move(lts));
        }
        return out;
    }

    void write_lts_csv(std::ostream& out, const Lts& lts)
    {
        out << "state_index,repetitions,ids_colon_separated\n";
        for (std::size_t i = 0; i < lts.states.size(); ++i)
        {
            out << i << ',' << lts.states[i].repetitions << ',';
            const auto& ids = lts.states[i].ids;
            for (std::size_t k = 0; k < ids.size(); ++k)
            {
                out << (k ? ":" : "") << ids[k];
            }
            out << '\n';
        }
    }

    Lts read_lts_csv(std::istream& in)
    {
        std::string line;
        if (!std::getline(in, line) || line != "state_index,repetitions,ids_colon_separated")
        {
            throw std::runtime_error("lts csv: unexpected header");
        }
        Lts lts;
        while (std::getline(in, line))
        {
            if (line.empty())
            {
                continue;
            }
            const auto c = split(line, ',');
            if (c.size() != 3 || std::stoul(c[0]) != lts.states.size())
            {
                throw std::runtime_error("lts csv: malformed row '" + line + "'");
            }
            Pattern p;
            p.repetitions = std::stoll(c[1]);
            for (const auto& id : split(c[2], ':'))
            {
                p.ids.push_back(static_cast<MetadataId>(std::stoul(id)));
            }
            lts.states.push_back(std::move(p));
        }
        return lts;
    }

    void write_idmap_csv(std::ostream& out, const IdMap& ids)
    {
        out << "id,length_bytes,src,dst\n";
        for (MetadataId id = 1; id <= ids.size(); ++id)
        {
            const auto& t = ids.tuple(id);
            out << id << ',' << t.length << ',' << t.src.str() << ',' << t.dst.str() << '\n';
        }
    }

    IdMap read_idmap_csv(std::istream& in)
    {
        std::string line;
        if (!std::getline(in, line) || line != "id,length_bytes,src,dst")
        {
            throw std::runtime_error("idmap csv: unexpected header");
        }
        IdMap ids;
        while (std::getline(in, line))
        {
            if (line.empty())
            {
                continue;
            }
            const auto c = split(line, ',');
            if (c.size() != 4)
            {
                throw std::runtime_error("idmap csv: malformed row '" + line + "'");
            }
            const auto id = ids.intern({static_cast<std::uint32_t>(std::stoul(c[1])), Ipv4::parse(c[2]),
                                        Ipv4::parse(c[3])});
            if (id != std::stoul(c[0]))
            {
                throw std::runtime_error("idmap csv: ids must be dense and ordered");
            }
        }
        return ids;
    }

    OnlineTracker::OnlineTracker(const Lts& lts, const IdMap& ids, std::size_t target_state)
        : lts_(lts), ids_(ids), target_(target_state)
    {
        if (target_state >= lts.states.size())
        {
            throw std::out_of_range("tracker: target state outside the LTS");
        }
        for (const auto& p : lts.states)
        {
            if (p.ids.empty() || p.repetitions < 1)
            {
                throw std::invalid_argument("tracker: LTS state without ids or repetitions");
            }
        }
    }

    bool OnlineTracker::at_signal_point() const
    {
        return !finished_ && pos_.state == target_ && pos_.offset == 0 &&
               pos_.repetition == lts_.states[target_].repetitions - 1;
    }

    TrackEvent OnlineTracker::feed(const PacketMeta& pkt)
    {
        if (!seen_.emplace(flow_key(pkt), pkt.seq).second)
        {
            return TrackEvent::none;
        }
        if (signal_time_)
        {
            after_signal_.push_back(pkt);
        }
        if (lost_ || finished_ || signal_time_)
        {
            return TrackEvent::none;
        }
        const auto id = ids_.lookup(tuple_of(pkt));
        const auto& state = lts_.states[pos_.state];
        if (id == 0 || id != state.ids[pos_.offset])
        {
            lost_ = true;
            lost_time_ = pkt.capture_time;
            return TrackEvent::lost;
        }
        if (++pos_.offset == state.ids.size())
        {
            pos_.offset = 0;
            if (++pos_.repetition == state.repetitions)
            {
                pos_.repetition = 0;
                if (++pos_.state == lts_.states.size())
                {
                    finished_ = true;
                    return TrackEvent::finished;
                }
            }
        }
        if (at_signal_point())
        {
            signal_time_ = pkt.capture_time;
            return TrackEvent::signal;
        }
        return TrackEvent::none;
    }

    DropRule::DropRule(std::size_t target_state, std::set<Tuple> match, SimTime start, SimTime duration)
        : target_(target_state), match_(std::move(match)), start_(start), duration_(duration)
    {
        if (duration < 0)
        {
            throw std::invalid_argument("drop rule: negative duration");
        }
    }

    bool DropRule::matches(const PacketMeta& pkt, SimTime now) const
    {
        return now >= start_ && now < start_ + duration_ && match_.count(tuple_of(pkt)) != 0;
    }

    std::shared_ptr<DropRule> make_drop_rule(const Lts& lts, const IdMap& ids, std::size_t target_state, SimTime start,
                                             SimTime duration)
    {
        std::set<Tuple> match;
        for (const auto id : lts.states.at(target_state).ids)
        {
            match.insert(ids.tuple(id));
        }
        return std::make_shared<DropRule>(target_state, std::move(match), start, duration);
    }

    std::vector<PacketMeta> dropped_set(const CaptureTrace& trace)
    {
        std::vector<PacketMeta> out;
        std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
        for (const auto& p : trace.packets)
        {
            if (p.truth.dropped_by_adversary && seen.emplace(flow_key(p), p.seq).second)
            {
                out.push_back(p);
            }
        }
        return out;
    }

    Deviation assess_deviation(const Lts& lts, const IdMap& ids, const std::vector<PacketMeta>& stream,
                               TrackPosition from)
    {
        Deviation d;
        if (lts.states.empty())
        {
            return d;
        }
        auto pos = from;
        for (const auto& p : stream)
        {
            const auto& state = lts.states.at(pos.state);
            if (ids.lookup(tuple_of(p)) != state.ids.at(pos.offset))
            {
                d.deviated = true;
                d.first_divergence = p.capture_time;
                return d;
            }
            if (++pos.offset == state.ids.size())
            {
                pos.offset = 0;
                if (++pos.repetition == state.repetitions)
                {
                    pos.repetition = 0;
                    // The next cycle restarts the model.
                    pos.state = (pos.state + 1) % lts.states.size();
                }
            }
        }
        return d;
    }

    Score score(const CaptureTrace& trace, int plc_state, std::int64_t repetition)
    {
        // Unique packets of the repetition; a packet counts as dropped if any copy was.
        std::map<std::pair<std::uint64_t, std::uint64_t>, std::pair<bool, bool>> packets; // critical, dropped
        for (const auto& p : trace.packets)
        {
            if (p.truth.plc_state != plc_state || p.truth.repetition != repetition)
            {
                continue;
            }
            auto& e = packets[{flow_key(p), p.seq}];
            e.first = e.first || p.truth.critical;
            e.second = e.second || p.truth.dropped_by_adversary;
        }
        Score s;
        for (const auto& [k, e] : packets)
        {
            s.critical_total += e.first ? 1 : 0;
            s.dropped_total += e.second ? 1 : 0;
            s.critical_dropped += (e.first && e.second) ? 1 : 0;
        }
        s.recall = s.critical_total ? static_cast<double>(s.critical_dropped) / static_cast<double>(s.critical_total)
                                    : 0.0;
        if (s.dropped_total)
        {
            s.precision = static_cast<double>(s.critical_dropped) / static_cast<double>(s.dropped_total);
        }
        return s;
    }
}
