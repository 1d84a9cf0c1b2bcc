#pragma once

#include "ibh/packet.hpp"
#include "ibh/plant.hpp"
#include "ibh/sniper.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ibh::detect
{
    struct Window
    {
        SimTime start = 0;
        SimTime end = 0;
    };

    /// Tumbling windows from `from`; the last one is cut at `to`.
    std::vector<Window> tile(SimTime from, SimTime to, SimTime size);

    /// One decision per window (NND/Detano) or per log entry (PAD, start == end).
    struct Verdict
    {
        SimTime start = 0;
        SimTime end = 0; // verdict timestamp
        bool flagged = false;
    };

    /// Traffic forwarded by X1: the capture minus what the adversary discarded.
    CaptureTrace egress_view(const CaptureTrace& capture);

    struct NndModel
    {
        SimTime window = 0;
        std::vector<std::pair<Ipv4, Ipv4>> pairs; // feature order; one extra slot counts unknown pairs
        std::vector<std::vector<double>> vectors; // distinct training vectors
        double threshold = 0.0;
    };

    NndModel nnd_train(const std::vector<CaptureTrace>& benign, SimTime window, double safety_factor = 1.0);
    std::vector<Verdict> nnd_detect(const NndModel& model, const CaptureTrace& live);

    struct AutomatonModel
    {
        SimTime window = 0;
        sniper::IdMap ids;
        std::map<std::pair<sniper::MetadataId, sniper::MetadataId>, double> log_prob;
        double min_mean_log_likelihood = 0.0;
        double tolerance = 0.5;
        SimTime gap_split = 1 * kSecond;
        bool trained = false;
    };

    /// Bigram automaton over metadata ids of first transmissions. Bigrams that span a
    /// window edge or a silence longer than gap_split are not scored.
    AutomatonModel detano_train(const std::vector<CaptureTrace>& benign, SimTime window, double tolerance = 0.5,
                                SimTime gap_split = 1 * kSecond);
    std::vector<Verdict> detano_detect(const AutomatonModel& model, const CaptureTrace& live);

    struct Atom
    {
        enum class Kind
        {
            eq,
            neq,
            ge,
        };
        std::size_t field = 0;
        Kind kind = Kind::eq;
        double value = 0.0;

        bool holds(const plant::LogEntry& e) const;
        std::string str() const;
        friend bool operator==(const Atom&, const Atom&) = default;
    };

    struct Rule
    {
        std::size_t lhs = 0; // atom indices
        std::size_t rhs = 0;
        std::size_t support = 0;
    };

    struct InvariantSet
    {
        std::vector<Atom> atoms;
        std::vector<Rule> rules;

        std::string str(const Rule& r) const;
    };

    struct PadOptions
    {
        std::size_t min_support = 10;
        std::vector<double> level_marks{800.0, 900.0, 1000.0};
        std::vector<std::string> level_fields{"LIT101", "LIT201"};
    };

    /// All single-atom implications A -> B (different fields) with confidence 1.
    InvariantSet pad_mine(const std::vector<plant::LogEntry>& training, const PadOptions& opt = {});
    std::vector<Verdict> pad_check(const InvariantSet& inv, const std::vector<plant::LogEntry>& live);

    struct Evaluation
    {
        double tpr = 0.0;
        double fpr = 0.0;
        std::optional<double> delay_s; // empty: never flagged after the attack started
        std::size_t positives = 0;
        std::size_t negatives = 0;
        std::size_t true_positives = 0;
        std::size_t false_positives = 0;
    };

    /// Windows that contain at least one of the given instants.
    std::vector<bool> label_by_events(const std::vector<Verdict>& verdicts, const std::vector<SimTime>& events);
    /// Verdicts whose timestamp lies in [from, to).
    std::vector<bool> label_by_interval(const std::vector<Verdict>& verdicts, SimTime from, SimTime to);

    Evaluation evaluate(const std::vector<Verdict>& verdicts, const std::vector<bool>& attack, SimTime attack_start);
}
