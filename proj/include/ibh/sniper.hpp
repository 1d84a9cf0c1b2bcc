#pragma once

#include "ibh/packet.hpp"
#include "ibh/simkernel.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ibh::sniper
{
    /// Profiling or tracking failure. `kind()` is a short machine-readable class.
    class SniperError : public std::runtime_error
    {
    public:
        SniperError(std::string kind, const std::string& what) : std::runtime_error(what), kind_(std::move(kind)) {}
        const std::string& kind() const noexcept { return kind_; }

    private:
        std::string kind_;
    };

    /// What an on-path observer can read from an encrypted packet.
    struct Tuple
    {
        std::uint32_t length = 0;
        Ipv4 src;
        Ipv4 dst;

        friend auto operator<=>(const Tuple&, const Tuple&) = default;
    };

    inline Tuple tuple_of(const PacketMeta& p) { return {p.wire_length, p.src, p.dst}; }

    using MetadataId = std::uint32_t;
    using MetadataSequence = std::vector<MetadataId>;

    /// Bijection between small integer ids (from 1) and tuples.
    class IdMap
    {
    public:
        /// Existing id or a fresh one.
        MetadataId intern(const Tuple& t);
        /// 0 when the tuple was never seen.
        MetadataId lookup(const Tuple& t) const;
        const Tuple& tuple(MetadataId id) const;
        std::size_t size() const noexcept { return tuples_.size(); }

    private:
        std::vector<Tuple> tuples_;
        std::map<Tuple, MetadataId> index_;
    };

    struct Pattern
    {
        std::vector<MetadataId> ids;
        std::int64_t repetitions = 0;

        friend bool operator==(const Pattern&, const Pattern&) = default;
    };

    struct Lts
    {
        std::vector<Pattern> states;

        std::size_t expanded_length() const;
        MetadataSequence expand() const;
    };

    struct SegmentOptions
    {
        double gap_factor = 50.0; // boundary = gap > factor * running mean gap
        std::size_t min_gaps = 16; // gaps needed before the running mean is trusted
    };

    /// Complete operational cycles found in a capture, split at idle gaps.
    std::vector<CaptureTrace> segment_cycles(const CaptureTrace& trace, const SegmentOptions& opt = {});

    /// First copy per (flow, seq).
    CaptureTrace dedup_retransmissions(const CaptureTrace& cycle);

    /// Ids in first-occurrence order over the given (deduped) trace.
    MetadataSequence assign_ids(const CaptureTrace& cycle, IdMap& ids);

    struct ProfiledSequence
    {
        MetadataSequence sequence;
        IdMap ids;
        std::size_t cycle_index = 0; // first of the agreeing cycles
    };

    /// Picks the first cycle whose tuple sequence another cycle reproduces exactly.
    ProfiledSequence consistent_sequence(const std::vector<CaptureTrace>& deduped_cycles);

    /// Shortest-first repeated-pattern decomposition with backtracking on residuals.
    std::vector<Pattern> mine_patterns(const MetadataSequence& seq);

    /// Base decomposition plus merged alternatives, ascending by state count, one per count.
    std::vector<Lts> merge_candidates(const std::vector<Pattern>& patterns);

    void write_lts_csv(std::ostream& out, const Lts& lts);
    Lts read_lts_csv(std::istream& in);
    void write_idmap_csv(std::ostream& out, const IdMap& ids);
    IdMap read_idmap_csv(std::istream& in);

    struct TrackPosition
    {
        std::size_t state = 0;
        std::int64_t repetition = 0; // 0-based
        std::size_t offset = 0;
    };

    enum class TrackEvent
    {
        none,
        signal, // the target's penultimate repetition just completed
        lost,
        finished,
    };

    /// Follows a live capture through an LTS, one deduped packet at a time.
    class OnlineTracker
    {
    public:
        OnlineTracker(const Lts& lts, const IdMap& ids, std::size_t target_state);

        TrackEvent feed(const PacketMeta& pkt);

        const TrackPosition& position() const noexcept { return pos_; }
        bool signaled() const noexcept { return signal_time_.has_value(); }
        std::optional<SimTime> signal_time() const noexcept { return signal_time_; }
        bool lost() const noexcept { return lost_; }
        std::optional<SimTime> lost_time() const noexcept { return lost_time_; }
        /// Deduped packets seen after the signal, for deviation assessment.
        const std::vector<PacketMeta>& after_signal() const noexcept { return after_signal_; }

    private:
        bool at_signal_point() const;

        const Lts& lts_;
        const IdMap& ids_;
        std::size_t target_;
        TrackPosition pos_;
        bool finished_ = false;
        bool lost_ = false;
        std::optional<SimTime> signal_time_;
        std::optional<SimTime> lost_time_;
        std::set<std::pair<std::uint64_t, std::uint64_t>> seen_; // (flow, seq)
        std::vector<PacketMeta> after_signal_;
    };

    /// Adversary filter: drops every packet whose tuple belongs to the target pattern
    /// while now is inside [start, start + duration).
    class DropRule : public sim::PacketFilter
    {
    public:
        DropRule(std::size_t target_state, std::set<Tuple> match, SimTime start, SimTime duration);

        bool matches(const PacketMeta& pkt, SimTime now) const override;

        std::size_t target_state() const noexcept { return target_; }
        SimTime start() const noexcept { return start_; }
        SimTime end() const noexcept { return start_ + duration_; }
        const std::set<Tuple>& match_set() const noexcept { return match_; }

    private:
        std::size_t target_;
        std::set<Tuple> match_;
        SimTime start_;
        SimTime duration_;
    };

    std::shared_ptr<DropRule> make_drop_rule(const Lts& lts, const IdMap& ids, std::size_t target_state, SimTime start,
                                             SimTime duration);

    /// Packets the adversary dropped, first copy per (flow, seq).
    std::vector<PacketMeta> dropped_set(const CaptureTrace& trace);

    struct Deviation
    {
        bool deviated = false;
        std::optional<SimTime> first_divergence;
    };

    /// Walks `stream` (deduped) against the LTS from `from`; reports the first mismatch.
    Deviation assess_deviation(const Lts& lts, const IdMap& ids, const std::vector<PacketMeta>& stream,
                               TrackPosition from);

    struct Score
    {
        double recall = 0.0;
        std::optional<double> precision; // empty when nothing was dropped
        std::size_t critical_total = 0;
        std::size_t critical_dropped = 0;
        std::size_t dropped_total = 0;
    };

    /// Recall/precision over the unique packets of one repetition of one plant state.
    Score score(const CaptureTrace& trace, int plc_state, std::int64_t repetition);
}
