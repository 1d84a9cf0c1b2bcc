#pragma once

#include "ibh/packet.hpp"
#include "ibh/simkernel.hpp"
#include "ibh/wire.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ibh::plant
{
    // P1 state indices double as ground-truth plc_state tags on packets.
    enum class P1State : int
    {
        S11 = 0,
        S12 = 1,
        S13 = 2,
        Idle = 3,
    };

    enum class P2State : int
    {
        S21 = 0,
        S22 = 1,
        S23 = 2,
    };

    const char* label(P1State s);
    const char* label(P2State s);

    enum class SlotRole : std::uint8_t
    {
        plain,
        readiness_query, // P1 -> peer: are you ready to start the batch?
        readiness_reply,
        fill_query, // P1 -> P2: is T2 full?
        fill_reply, // the "T2 full" message
        demand_query, // P1 -> P2: can T2 accept water?
        demand_reply,
        batch_query, // P1 -> SCADA: may the batch end?
        batch_reply,
    };

    struct MessageSlot
    {
        Ipv4 sender;
        Ipv4 receiver;
        std::uint32_t payload_length = 0;
        SlotRole role = SlotRole::plain;
        bool critical = false; // in the final repetition

        bool is_request() const noexcept;
    };

    struct StateSchedule
    {
        std::string label;
        std::vector<MessageSlot> slots;
        std::int64_t repetitions = 0; // repetitions before the guard fires in an undisturbed cycle
    };

    struct PlantConfig
    {
        Ipv4 p1 = make_ipv4(192, 168, 1, 10);
        Ipv4 p2 = make_ipv4(192, 168, 2, 20);
        Ipv4 p3 = make_ipv4(192, 168, 3, 30);
        Ipv4 p4 = make_ipv4(192, 168, 4, 40);
        Ipv4 scada = make_ipv4(192, 168, 0, 100);
        SimTime link_latency = 10 * kMillisecond;

        SimTime operational_duration = 8 * kHour; // nominal; the schedules fix the actual length
        SimTime cycle_idle_gap = 2 * kHour;
        SimTime cycle_period() const { return operational_duration + cycle_idle_gap; }

        double tank_capacity_level = 1000.0;
        double functional_max_level = 800.0;
        double risky_level = 900.0;

        SimTime slot_gap = 50 * kMillisecond;
        SimTime repetition_gap = 275 * kMillisecond;
        std::array<StateSchedule, 3> schedules;

        // Peers report ready from this S11 repetition on.
        std::int64_t readiness_repetition = 3;
        // SCADA ends the batch at this S13 repetition.
        std::int64_t batch_repetitions = 15226;

        // Level rates in cm/s.
        double t1_initial = 600.0;
        double t2_initial = 0.0;
        double inflow_rate = 2.0;   // MV101
        double transfer_rate = 2.0; // P101 into T2 through MV201
        double t2_outflow_rate = 1.0; // P201 towards the downstream stages
        double t2_high = 450.0;
        double t2_low = 100.0;
        double downstream_start_volume = 0.0;
        double production_rate = 0.5;

        SimTime coordination_timeout = 300 * kSecond;
        SimTime guard_delta_t = 30 * kSecond;

        SimTime physics_tick = 100 * kMillisecond;
        SimTime log_period = 1 * kSecond;

        SimTime repetition_duration(int state) const;
        /// Offset of P1's S12 entry from the cycle start in an undisturbed cycle.
        SimTime nominal_s12_entry() const;
        /// Offset of the last S13 repetition boundary (P1 goes idle).
        SimTime nominal_operational_span() const;
    };

    /// Default schedules, payload lengths, rates and the calibrated constants.
    PlantConfig default_plant_config();
    std::array<StateSchedule, 3> default_schedules(const PlantConfig& cfg);
    /// T2 start level that puts the high mark inside P1's second-to-last S12 repetition.
    double fill_start_level(const PlantConfig& cfg);
    /// Throws std::invalid_argument when thresholds or schedules are inconsistent.
    void validate(const PlantConfig& cfg);

    struct Actuators
    {
        bool mv101_open = false;
        bool p101_on = false;
        bool mv201_open = false;
        bool p201_on = false;
    };

    struct PhysicsRates
    {
        double inflow = 2.0;
        double transfer = 2.0;
        double t2_outflow = 1.0;
        double production = 0.5;
        double capacity = 1000.0;
        double start_volume = 0.0;
    };

    struct TankState
    {
        double level = 0.0;
        bool overflowed = false;
    };

    struct ProcessState
    {
        TankState t1;
        TankState t2;
        double buffer = 0.0; // downstream aggregate, cm of T2 level equivalent
        double output = 0.0; // purified-water output level
        bool producing = false;
        // Mass accounting in level units.
        double removed_from_t1 = 0.0;
        double delivered_to_t2 = 0.0;
        // Flow rates over the last integration step.
        double fit101 = 0.0;
        double fit201 = 0.0;
        double fit301 = 0.0;
    };

    /// Linear level dynamics. Pumps move at most what the source tank holds, so levels
    /// never go negative; the T1 overflow flag latches above capacity.
    void integrate_physics(ProcessState& state, const Actuators& act, const PhysicsRates& rates, double dt_s);

    /// Last-received-value store used when a message is late or lost.
    template <class T>
    class TolerantValue
    {
    public:
        explicit TolerantValue(T fallback) : fallback_(fallback) {}

        void update(T v, SimTime now)
        {
            value_ = v;
            received_at_ = now;
        }

        T read(SimTime now)
        {
            if (value_)
            {
                max_staleness_ = std::max(max_staleness_, now - received_at_);
                return *value_;
            }
            return fallback_;
        }

        bool ever_received() const noexcept { return value_.has_value(); }
        SimTime staleness(SimTime now) const { return value_ ? now - received_at_ : -1; }
        SimTime max_staleness() const noexcept { return max_staleness_; }

        void reset()
        {
            value_.reset();
            max_staleness_ = 0;
        }

    private:
        T fallback_;
        std::optional<T> value_;
        SimTime received_at_ = 0;
        SimTime max_staleness_ = 0;
    };

    inline constexpr std::size_t kLogFields = 21;

    struct FieldSpec
    {
        std::string name;
        bool categorical = false;
        std::vector<std::string> labels; // code i <-> labels[i]
    };

    const std::array<FieldSpec, kLogFields>& log_schema();
    std::size_t field_index(const std::string& name);

    struct LogEntry
    {
        SimTime time = 0;
        std::array<double, kLogFields> values{};
    };

    void write_log_csv(std::ostream& out, const std::vector<LogEntry>& log);
    std::vector<LogEntry> read_log_csv(std::istream& in);

    struct LevelSample
    {
        SimTime time = 0;
        double t1 = 0.0;
        double t2 = 0.0;
        double output = 0.0;
    };

    void write_levels_csv(std::ostream& out, const std::vector<LevelSample>& levels);
    std::vector<LevelSample> read_levels_csv(std::istream& in);

    struct TransitionRecord
    {
        SimTime time = 0;
        std::string plc;
        std::string from;
        std::string to;
        std::int64_t repetitions = 0; // repetitions completed in `from`
    };

    /// P1 with its peers (P2, P3/P4 proxies, SCADA), the two tanks and the downstream
    /// aggregate. Drives its own schedule on the simulator; physics advances on ticks.
    class Plant
    {
    public:
        Plant(sim::Simulator& simulator, wire::Network& network, PlantConfig config);

        const PlantConfig& config() const noexcept { return cfg_; }

        /// Adds one link per directed slot endpoint pair.
        static void add_links(wire::Network& network, const PlantConfig& cfg);

        /// Resets process and controller state and starts P1's schedule at `at`.
        void begin_cycle(SimTime at);

        /// Physics up to `now` plus level-driven P2 transitions.
        void tick(SimTime now);

        LogEntry log_snapshot(SimTime now);
        LevelSample level_sample(SimTime now);
        double output_volume(SimTime now);

        P1State p1_state() const noexcept { return p1_; }
        P2State p2_state() const noexcept { return p2_; }
        std::int64_t p1_repetition() const noexcept { return p1_rep_; }
        const ProcessState& process() const noexcept { return proc_; }
        const Actuators& actuators() const noexcept { return act_; }
        bool p2_locked_out() const noexcept { return p2_locked_; }

        const std::vector<TransitionRecord>& transitions() const noexcept { return transitions_; }
        /// Application messages emitted per P1 state, summed over all cycles.
        const std::array<std::uint64_t, 3>& emitted() const noexcept { return emitted_; }
        std::optional<SimTime> overflow_time() const noexcept { return overflow_time_; }
        std::optional<SimTime> production_start() const noexcept { return production_start_; }
        double max_t1_level() const noexcept { return max_t1_; }
        std::optional<SimTime> lockout_time() const noexcept { return lockout_time_; }

    private:
        struct QueryStamp
        {
            int state = -1;
            std::int64_t rep = -1;
            bool matches(int s, std::int64_t r) const noexcept { return state == s && rep == r; }
        };

        void reset_process();
        void start_repetition(SimTime now);
        void emit(int state, std::int64_t rep, int slot, std::uint64_t epoch);
        void on_receive(const wire::AppMessage& msg, SimTime at);
        void repetition_boundary(int state, std::int64_t rep, std::uint64_t epoch);
        void enter_p1_state(P1State s, SimTime now);
        void apply_p1_actuators(SimTime now);
        void enter_p2_state(P2State s, SimTime now);
        void peers_ready(SimTime now, std::uint64_t epoch);
        int peer_index(Ipv4 ip) const;
        PhysicsRates rates() const;

        sim::Simulator& sim_;
        wire::Network& net_;
        PlantConfig cfg_;
        std::array<std::uint64_t, 3> required_replies_{}; // bitmask over slots per state

        std::uint64_t epoch_ = 0; // bumps every cycle; stale events compare against it
        SimTime cycle_start_ = 0;
        SimTime last_physics_ = 0;

        P1State p1_ = P1State::Idle;
        std::int64_t p1_rep_ = 0;
        std::uint64_t reply_mask_ = 0;
        TolerantValue<bool> demand_{true};

        P2State p2_ = P2State::S21;
        bool p2_locked_ = false;
        bool p2_seen_s13_ = false;
        std::uint64_t s23_entries_ = 0;
        std::array<bool, 3> peer_ready_{}; // P2, P3, P4
        std::array<QueryStamp, 3> readiness_query_{};
        QueryStamp fill_query_;
        QueryStamp batch_query_;

        ProcessState proc_;
        Actuators act_;

        std::vector<TransitionRecord> transitions_;
        std::array<std::uint64_t, 3> emitted_{};
        std::optional<SimTime> overflow_time_;
        std::optional<SimTime> production_start_;
        std::optional<SimTime> lockout_time_;
        double max_t1_ = 0.0;
    };

    struct FluctuationSettings
    {
        int count = 5;
        // Window placement inside each affected operational phase, relative to the cycle start.
        SimTime span_begin = 15 * kMinute;
        SimTime span_end = 7 * kHour + 30 * kMinute;
        SimTime extra_delay = 150 * kMillisecond;
        std::vector<int> cycles; // 0-based cycle indices that get fluctuations
    };

    struct EmulationConfig
    {
        PlantConfig plant = default_plant_config();
        wire::WireConfig wire;
        std::uint64_t seed = 1;
        int cycles = 1;
        SimTime lead_in = 0; // silence before the first cycle
        std::optional<SimTime> horizon; // defaults to lead_in + cycles * cycle period
        FluctuationSettings fluctuations;
        bool record_log = true;
    };

    /// Simulator + network + plant for a number of consecutive cycles.
    class Emulation
    {
    public:
        explicit Emulation(EmulationConfig config);

        sim::Simulator& simulator() noexcept { return sim_; }
        wire::Network& network() noexcept { return net_; }
        Plant& plant() noexcept { return plant_; }
        const EmulationConfig& config() const noexcept { return cfg_; }

        SimTime horizon() const noexcept { return horizon_; }
        SimTime cycle_start(int cycle) const noexcept;

        void run();

        const CaptureTrace& trace() const noexcept { return net_.trace(); }
        const std::vector<LogEntry>& log() const noexcept { return log_; }
        const std::vector<LevelSample>& levels() const noexcept { return levels_; }
        const std::vector<sim::FluctuationWindow>& fluctuation_windows() const noexcept { return windows_; }

    private:
        void schedule_tick(SimTime at);
        void schedule_log(SimTime at);

        EmulationConfig cfg_;
        sim::Simulator sim_;
        wire::Network net_;
        Plant plant_;
        SimTime horizon_ = 0;
        std::vector<sim::FluctuationWindow> windows_;
        std::vector<LogEntry> log_;
        std::vector<LevelSample> levels_;
    };
}
