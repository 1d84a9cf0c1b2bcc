#pragma once

#include "ibh/detectors.hpp"
#include "ibh/plant.hpp"
#include "ibh/sniper.hpp"
#include "ibh/wire.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ibh::scenario
{
    /// Failure reported to the CLI as "error: <kind>: <message>".
    class ScenarioError : public std::runtime_error
    {
    public:
        ScenarioError(std::string kind, const std::string& what) : std::runtime_error(what), kind_(std::move(kind)) {}
        const std::string& kind() const noexcept { return kind_; }

    private:
        std::string kind_;
    };

    enum class Kind
    {
        baseline,
        profile,
        process_delay,
        tank_overflow,
        detector_sweep,
    };

    std::string to_string(Kind k);
    Kind parse_kind(const std::string& s);

    struct ScenarioConfig
    {
        Kind kind = Kind::baseline;
        std::uint64_t seed = 1;
        plant::PlantConfig plant = plant::default_plant_config();
        bool t2_initial_pinned = false; // otherwise derived from the schedules on change
        wire::WireConfig wire;
        plant::FluctuationSettings fluctuations;

        int profile_cycles = 3;
        int fluctuation_cycle = 0;   // profiled cycle that gets benign fluctuations
        SimTime lead_in = 1800 * kSecond; // capture starts before the first cycle
        SimTime run_horizon = 2 * kHour;  // baseline and attack runs
        bool attack_fluctuations = false; // benign fluctuations during baseline/attack runs too

        std::optional<SimTime> drop_duration;
        std::vector<SimTime> detector_windows{30 * kSecond, 60 * kSecond, 120 * kSecond,
                                              300 * kSecond, 600 * kSecond, 1800 * kSecond};
        std::vector<SimTime> process_delay_drops{2 * kMinute, 4 * kMinute, 10 * kMinute};
        std::vector<SimTime> tank_overflow_drops{4 * kMinute, 10 * kMinute, 15 * kMinute};
        double nnd_safety_factor = 1.0;
        double detano_tolerance = 0.5;
        std::size_t pad_min_support = 10;

        std::filesystem::path out_dir = "out";
        bool emit_ground_truth = false;
        std::string lts_file;   // optional pre-mined model; profiling runs when empty
        std::string idmap_file;
    };

    /// Applies one `key = value` setting; throws ScenarioError("config", ...) on unknown keys or bad values.
    void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value);
    /// Flat `key = value` lines; `#` starts a comment.
    void apply_config(ScenarioConfig& cfg, std::istream& in);
    void apply_config_file(ScenarioConfig& cfg, const std::filesystem::path& path);
    void validate(const ScenarioConfig& cfg);

    /// Every setting in a fixed order, as parseable `key = value` lines.
    std::string canonical_text(const ScenarioConfig& cfg);
    std::uint64_t config_hash(const ScenarioConfig& cfg);

    struct ProfileResult
    {
        sniper::Lts lts; // fewest-state candidate
        sniper::IdMap ids;
        std::vector<sniper::Lts> candidates;
        std::size_t complete_cycles = 0;
        std::size_t sequence_length = 0;
    };

    /// Runs the profiling emulation and mines the LTS from its capture.
    ProfileResult profile_from(const CaptureTrace& capture);

    struct AttackResult
    {
        std::size_t target_state = 0;
        SimTime drop_duration = 0;
        std::optional<SimTime> signal_time;
        bool tracker_lost = false;
        sniper::Score score;
        std::size_t dropped_unique = 0;
        sniper::Deviation deviation;
    };

    struct RunArtifacts
    {
        CaptureTrace trace;
        std::vector<plant::LogEntry> log;
        std::vector<plant::LevelSample> levels;
        std::vector<plant::TransitionRecord> transitions;
        std::optional<SimTime> production_start;
        std::optional<SimTime> overflow_time;
        std::optional<SimTime> lockout_time;
        double max_t1 = 0.0;
        double final_output = 0.0;
        SimTime horizon = 0;
        std::size_t fluctuation_windows = 0;
    };

    struct DetectorRow
    {
        std::string detector;
        double window_size_s = 0.0;
        std::string attack; // benign, process-delay, tank-overflow
        double drop_duration_s = 0.0;
        detect::Evaluation eval;
    };

    struct Report
    {
        std::vector<std::pair<std::string, std::string>> entries; // key, value in output order
        std::vector<DetectorRow> detectors;

        const std::string* find(const std::string& key) const;
    };

    struct Outcome
    {
        Report report;
        RunArtifacts run; // trace/log/levels written next to the report
        std::optional<ProfileResult> profile;
    };

    /// Runs one scenario end to end. Pure function of the config.
    Outcome run_scenario(const ScenarioConfig& cfg);

    /// Writes report.csv, trace.csv, plant_log.csv, levels.csv and, when present,
    /// lts.csv, idmap.csv and detectors.csv into cfg.out_dir.
    void emit_report(const ScenarioConfig& cfg, const Outcome& outcome);

    void write_report_csv(std::ostream& out, const Report& report);
    void write_detectors_csv(std::ostream& out, const std::vector<DetectorRow>& rows);

    // Building blocks shared with the tests and bindings.
    RunArtifacts run_profile_emulation(const ScenarioConfig& cfg, std::uint64_t fluctuation_seed);
    RunArtifacts run_benign(const ScenarioConfig& cfg, int cycles, SimTime lead_in, SimTime horizon,
                            std::uint64_t fluctuation_seed, bool fluctuations);
    std::pair<RunArtifacts, AttackResult> run_attack(const ScenarioConfig& cfg, const ProfileResult& profile,
                                                     std::size_t target_state, SimTime drop_duration);
}
