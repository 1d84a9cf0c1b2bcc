#include "ibh/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace ibh::scenario
{
    std::string to_string(Kind k)
    {
        switch (k)
        {
        case Kind::baseline:
            return "baseline";
        case Kind::profile:
            return "profile";
        case Kind::process_delay:
            return "process-delay";
        case Kind::tank_overflow:
            return "tank-overflow";
        case Kind::detector_sweep:
            return "detector-sweep";
        }
        return "?";
    }

    Kind parse_kind(const std::string& s)
    {
        for (auto k : {Kind::baseline, Kind::profile, Kind::process_delay, Kind::tank_overflow, Kind::detector_sweep})
        {
            if (to_string(k) == s)
            {
                return k;
            }
        }
        throw ScenarioError("config", "unknown scenario '" + s + "'");
    }

    namespace
    {
        std::string trim(const std::string& s)
        {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string::npos)
            {
                return {};
            }
            const auto e = s.find_last_not_of(" \t\r\n");
            return s.substr(b, e - b + 1);
        }

        std::string fmt(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return buf;
        }

        std::string fmt_seconds(SimTime t) { return fmt(to_seconds(t)); }

        // Compact form for config echo: integers stay integers.
        std::string fmt_compact(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.10g", v);
            return buf;
        }

        double parse_double(const std::string& key, const std::string& v)
        {
            double out = 0.0;
            const auto* end = v.data() + v.size();
            auto [p, ec] = std::from_chars(v.data(), end, out);
            if (ec != std::errc{} || p != end || !std::isfinite(out))
            {
                throw ScenarioError("config", "key '" + key + "': expected a number, got '" + v + "'");
            }
            return out;
        }

        std::int64_t parse_int(const std::string& key, const std::string& v)
        {
            std::int64_t out = 0;
            const auto* end = v.data() + v.size();
            auto [p, ec] = std::from_chars(v.data(), end, out);
            if (ec != std::errc{} || p != end)
            {
                throw ScenarioError("config", "key '" + key + "': expected an integer, got '" + v + "'");
            }
            return out;
        }

        bool parse_bool(const std::string& key, const std::string& v)
        {
            if (v == "true" || v == "1" || v == "yes")
            {
                return true;
            }
            if (v == "false" || v == "0" || v == "no")
            {
                return false;
            }
            throw ScenarioError("config", "key '" + key + "': expected true/false, got '" + v + "'");
        }

        SimTime parse_time(const std::string& key, const std::string& v, SimTime unit)
        {
            return static_cast<SimTime>(std::llround(parse_double(key, v) * static_cast<double>(unit)));
        }

        std::string fmt_time(SimTime t, SimTime unit)
        {
            return fmt_compact(static_cast<double>(t) / static_cast<double>(unit));
        }

        std::vector<SimTime> parse_time_list(const std::string& key, const std::string& v, SimTime unit)
        {
            std::vector<SimTime> out;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ','))
            {
                out.push_back(parse_time(key, trim(item), unit));
            }
            return out;
        }

        std::string fmt_time_list(const std::vector<SimTime>& ts, SimTime unit)
        {
            std::string out;
            for (std::size_t i = 0; i < ts.size(); ++i)
            {
                out += (i ? "," : "") + fmt_time(ts[i], unit);
            }
            return out;
        }

        struct Setting
        {
            std::string key;
            std::function<std::string(const ScenarioConfig&)> get;
            std::function<void(ScenarioConfig&, const std::string&, const std::string&)> set;
            bool reschedule = false; // changes the message schedules or the fill level
        };

        template <class T>
        Setting real(std::string key, T ScenarioConfig::*outer, double T::*field, bool reschedule = false)
        {
            return {std::move(key), [=](const ScenarioConfig& c) { return fmt_compact((c.*outer).*field); },
                    [=](ScenarioConfig& c, const std::string& k, const std::string& v) {
                        (c.*outer).*field = parse_double(k, v);
                    },
                    reschedule};
        }

        template <class T>
        Setting duration(std::string key, T ScenarioConfig::*outer, SimTime T::*field, SimTime unit,
                         bool reschedule = false)
        {
            return {std::move(key), [=](const ScenarioConfig& c) { return fmt_time((c.*outer).*field, unit); },
                    [=](ScenarioConfig& c, const std::string& k, const std::string& v) {
                        (c.*outer).*field = parse_time(k, v, unit);
                    },
                    reschedule};
        }

        Setting top_duration(std::string key, SimTime ScenarioConfig::*field, SimTime unit)
        {
            return {std::move(key), [=](const ScenarioConfig& c) { return fmt_time(c.*field, unit); },
                    [=](ScenarioConfig& c, const std::string& k, const std::string& v) {
                        c.*field = parse_time(k, v, unit);
                    }};
        }

        Setting top_list(std::string key, std::vector<SimTime> ScenarioConfig::*field, SimTime unit)
        {
            return {std::move(key), [=](const ScenarioConfig& c) { return fmt_time_list(c.*field, unit); },
                    [=](ScenarioConfig& c, const std::string& k, const std::string& v) {
                        c.*field = parse_time_list(k, v, unit);
                    }};
        }

        Setting top_real(std::string key, double ScenarioConfig::*field)
        {
            return {std::move(key), [=](const ScenarioConfig& c) { return fmt_compact(c.*field); },
                    [=](ScenarioConfig& c, const std::string& k, const std::string& v) {
                        c.*field = parse_double(k, v);
                    }};
        }

        Setting top_bool(std::string key, bool ScenarioConfig::*field)
        {
            return {std::move(key), [=](const ScenarioConfig& c) { return std::string(c.*field ? "true" : "false"); },
                    [=](ScenarioConfig& c, const std::string& k, const std::string& v) {
                        c.*field = parse_bool(k, v);
                    }};
        }

        const std::vector<Setting>& settings()
        {
            using PC = plant::PlantConfig;
            using C = ScenarioConfig;
            static const std::vector<Setting> table = [] {
                std::vector<Setting> t;
                t.push_back({"scenario", [](const C& c) { return to_string(c.kind); },
                             [](C& c, const std::string&, const std::string& v) { c.kind = parse_kind(v); }});
                t.push_back({"seed", [](const C& c) { return std::to_string(c.seed); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 const auto s = parse_int(k, v);
                                 if (s < 0)
                                 {
                                     throw ScenarioError("config", "seed must be non-negative");
                                 }
                                 c.seed = static_cast<std::uint64_t>(s);
                             }});
                t.push_back({"drop_duration_s",
                             [](const C& c) { return c.drop_duration ? fmt_time(*c.drop_duration, kSecond) : ""; },
                             [](C& c, const std::string& k, const std::string& v) {
                                 if (v.empty())
                                 {
                                     c.drop_duration.reset();
                                 }
                                 else
                                 {
                                     c.drop_duration = parse_time(k, v, kSecond);
                                 }
                             }});
                t.push_back({"out", [](const C& c) { return c.out_dir.generic_string(); },
                             [](C& c, const std::string&, const std::string& v) { c.out_dir = v; }});
                t.push_back(top_bool("emit_ground_truth", &C::emit_ground_truth));
                t.push_back({"lts_file", [](const C& c) { return c.lts_file; },
                             [](C& c, const std::string&, const std::string& v) { c.lts_file = v; }});
                t.push_back({"idmap_file", [](const C& c) { return c.idmap_file; },
                             [](C& c, const std::string&, const std::string& v) { c.idmap_file = v; }});

                t.push_back({"profile_cycles", [](const C& c) { return std::to_string(c.profile_cycles); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.profile_cycles = static_cast<int>(parse_int(k, v));
                             }});
                t.push_back({"fluctuation_cycle", [](const C& c) { return std::to_string(c.fluctuation_cycle); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.fluctuation_cycle = static_cast<int>(parse_int(k, v));
                             }});
                t.push_back(top_duration("lead_in_s", &C::lead_in, kSecond));
                t.push_back(top_duration("run_horizon_s", &C::run_horizon, kSecond));
                t.push_back(top_bool("attack_fluctuations", &C::attack_fluctuations));
                t.push_back({"fluctuation_count", [](const C& c) { return std::to_string(c.fluctuations.count); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.fluctuations.count = static_cast<int>(parse_int(k, v));
                             }});
                t.push_back(duration("fluctuation_span_begin_s", &C::fluctuations,
                                     &plant::FluctuationSettings::span_begin, kSecond));
                t.push_back(duration("fluctuation_span_end_s", &C::fluctuations,
                                     &plant::FluctuationSettings::span_end, kSecond));
                t.push_back(duration("fluctuation_extra_delay_ms", &C::fluctuations,
                                     &plant::FluctuationSettings::extra_delay, kMillisecond));

                t.push_back(top_list("detector_windows_s", &C::detector_windows, kSecond));
                t.push_back(top_list("process_delay_drops_s", &C::process_delay_drops, kSecond));
                t.push_back(top_list("tank_overflow_drops_s", &C::tank_overflow_drops, kSecond));
                t.push_back(top_real("nnd_safety_factor", &C::nnd_safety_factor));
                t.push_back(top_real("detano_tolerance", &C::detano_tolerance));
                t.push_back({"pad_min_support", [](const C& c) { return std::to_string(c.pad_min_support); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 const auto n = parse_int(k, v);
                                 if (n < 1)
                                 {
                                     throw ScenarioError("config", "pad_min_support must be at least 1");
                                 }
                                 c.pad_min_support = static_cast<std::size_t>(n);
                             }});

                t.push_back(duration("link_latency_ms", &C::plant, &PC::link_latency, kMillisecond));
                t.push_back(duration("operational_duration_s", &C::plant, &PC::operational_duration, kSecond));
                t.push_back(duration("cycle_idle_gap_s", &C::plant, &PC::cycle_idle_gap, kSecond));
                t.push_back(duration("slot_gap_ms", &C::plant, &PC::slot_gap, kMillisecond, true));
                t.push_back(duration("repetition_gap_ms", &C::plant, &PC::repetition_gap, kMillisecond, true));
                t.push_back({"readiness_repetition",
                             [](const C& c) { return std::to_string(c.plant.readiness_repetition); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.plant.readiness_repetition = parse_int(k, v);
                             },
                             true});
                t.push_back({"batch_repetitions", [](const C& c) { return std::to_string(c.plant.batch_repetitions); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.plant.batch_repetitions = parse_int(k, v);
                             },
                             true});
                t.push_back(real("tank_capacity_cm", &C::plant, &PC::tank_capacity_level));
                t.push_back(real("functional_max_cm", &C::plant, &PC::functional_max_level));
                t.push_back(real("risky_level_cm", &C::plant, &PC::risky_level));
                t.push_back(real("t1_initial_cm", &C::plant, &PC::t1_initial));
                t.push_back({"t2_initial_cm", [](const C& c) { return fmt_compact(c.plant.t2_initial); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.plant.t2_initial = parse_double(k, v);
                                 c.t2_initial_pinned = true;
                             }});
                t.push_back(real("inflow_rate", &C::plant, &PC::inflow_rate));
                t.push_back(real("transfer_rate", &C::plant, &PC::transfer_rate, true));
                t.push_back(real("t2_outflow_rate", &C::plant, &PC::t2_outflow_rate));
                t.push_back(real("t2_high_cm", &C::plant, &PC::t2_high, true));
                t.push_back(real("t2_low_cm", &C::plant, &PC::t2_low));
                t.push_back(real("downstream_start_volume", &C::plant, &PC::downstream_start_volume));
                t.push_back(real("production_rate", &C::plant, &PC::production_rate));
                t.push_back(duration("coordination_timeout_s", &C::plant, &PC::coordination_timeout, kSecond));
                t.push_back(duration("guard_delta_t_s", &C::plant, &PC::guard_delta_t, kSecond));
                t.push_back(duration("physics_tick_ms", &C::plant, &PC::physics_tick, kMillisecond));
                t.push_back(duration("log_period_ms", &C::plant, &PC::log_period, kMillisecond));

                t.push_back({"record_overhead_bytes", [](const C& c) { return std::to_string(c.wire.overhead); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 const auto n = parse_int(k, v);
                                 if (n < 0)
                                 {
                                     throw ScenarioError("config", "record_overhead_bytes must be non-negative");
                                 }
                                 c.wire.overhead = static_cast<std::uint32_t>(n);
                             }});
                t.push_back(duration("rto_ms", &C::wire, &wire::WireConfig::rto, kMillisecond));
                t.push_back({"max_retries", [](const C& c) { return std::to_string(c.wire.max_retries); },
                             [](C& c, const std::string& k, const std::string& v) {
                                 c.wire.max_retries = static_cast<int>(parse_int(k, v));
                             }});
                return t;
            }();
            return table;
        }
    }

    void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value)
    {
        const auto& table = settings();
        auto it = std::find_if(table.begin(), table.end(), [&](const Setting& s) { return s.key == key; });
        if (it == table.end())
        {
            throw ScenarioError("config", "unknown key '" + key + "'");
        }
        it->set(cfg, key, value);
        if (it->reschedule)
        {
            cfg.plant.schedules = plant::default_schedules(cfg.plant);
            if (!cfg.t2_initial_pinned)
            {
                cfg.plant.t2_initial = plant::fill_start_level(cfg.plant);
            }
        }
    }

    void apply_config(ScenarioConfig& cfg, std::istream& in)
    {
        std::string line;
        int lineno = 0;
        while (std::getline(in, line))
        {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
            {
                line.erase(hash);
            }
            line = trim(line);
            if (line.empty())
            {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
            {
                throw ScenarioError("config", "line " + std::to_string(lineno) + ": expected 'key = value'");
            }
            apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    void apply_config_file(ScenarioConfig& cfg, const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw ScenarioError("io", "cannot read config file '" + path.string() + "'");
        }
        apply_config(cfg, in);
    }

    void validate(const ScenarioConfig& cfg)
    {
        try
        {
            plant::validate(cfg.plant);
        }
        catch (const std::invalid_argument& e)
        {
            throw ScenarioError("config", e.what());
        }
        const bool attack = cfg.kind == Kind::process_delay || cfg.kind == Kind::tank_overflow;
        if (attack && (!cfg.drop_duration || *cfg.drop_duration <= 0))
        {
            throw ScenarioError("config", "attack scenarios need drop_duration_s > 0");
        }
        if (cfg.profile_cycles < 2)
        {
            throw ScenarioError("config", "profile_cycles must be at least 2");
        }
        if (cfg.fluctuation_cycle < 0 || cfg.fluctuation_cycle >= cfg.profile_cycles)
        {
            throw ScenarioError("config", "fluctuation_cycle must index a profiled cycle");
        }
        if (cfg.fluctuations.count < 0)
        {
            throw ScenarioError("config", "fluctuation_count must be non-negative");
        }
        if (cfg.lead_in < 0 || cfg.run_horizon <= 0)
        {
            throw ScenarioError("config", "lead_in_s must be >= 0 and run_horizon_s > 0");
        }
        if (cfg.wire.rto <= 0 || cfg.wire.max_retries < 0)
        {
            throw ScenarioError("config", "rto_ms must be > 0 and max_retries >= 0");
        }
        if (cfg.nnd_safety_factor < 1.0 || cfg.detano_tolerance < 0.0)
        {
            throw ScenarioError("config", "nnd_safety_factor must be >= 1 and detano_tolerance >= 0");
        }
        for (const auto* list : {&cfg.detector_windows, &cfg.process_delay_drops, &cfg.tank_overflow_drops})
        {
            for (const auto t : *list)
            {
                if (t <= 0)
                {
                    throw ScenarioError("config", "window sizes and drop durations must be positive");
                }
            }
        }
        if (cfg.lts_file.empty() != cfg.idmap_file.empty())
        {
            throw ScenarioError("config", "lts_file and idmap_file go together");
        }
    }

    std::string canonical_text(const ScenarioConfig& cfg)
    {
        std::string out;
        for (const auto& s : settings())
        {
            out += s.key + " = " + s.get(cfg) + "\n";
        }
        return out;
    }

    std::uint64_t config_hash(const ScenarioConfig& cfg)
    {
        // FNV-1a over the canonical text, minus the output location.
        std::uint64_t h = 0xcbf29ce484222325ULL;
        std::stringstream ss(canonical_text(cfg));
        std::string line;
        while (std::getline(ss, line))
        {
            if (line.rfind("out = ", 0) == 0)
            {
                continue;
            }
            for (const unsigned char ch : line + "\n")
            {
                h ^= ch;
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    const std::string* Report::find(const std::string& key) const
    {
        for (const auto& [k, v] : entries)
        {
            if (k == key)
            {
                return &v;
            }
        }
        return nullptr;
    }

    ProfileResult profile_from(const CaptureTrace& capture)
    {
        const auto cycles = sniper::segment_cycles(capture);
        std::vector<CaptureTrace> deduped;
        deduped.reserve(cycles.size());
        for (const auto& c : cycles)
        {
            deduped.push_back(sniper::dedup_retransmissions(c));
        }
        auto seq = sniper::consistent_sequence(deduped);
        ProfileResult r;
        r.complete_cycles = cycles.size();
        r.sequence_length = seq.sequence.size();
        r.candidates = sniper::merge_candidates(sniper::mine_patterns(seq.sequence));
        r.lts = r.candidates.front();
        r.ids = std::move(seq.ids);
        return r;
    }

    namespace
    {
        plant::EmulationConfig emulation_config(const ScenarioConfig& cfg, int cycles, SimTime lead_in,
                                                std::optional<SimTime> horizon, std::uint64_t seed,
                                                std::vector<int> fluct_cycles)
        {
            plant::EmulationConfig ec;
            ec.plant = cfg.plant;
            ec.wire = cfg.wire;
            ec.seed = seed;
            ec.cycles = cycles;
            ec.lead_in = lead_in;
            ec.horizon = horizon;
            ec.fluctuations = cfg.fluctuations;
            ec.fluctuations.cycles = std::move(fluct_cycles);
            return ec;
        }

        RunArtifacts collect(plant::Emulation& em)
        {
            RunArtifacts a;
            a.trace = em.trace();
            a.log = em.log();
            a.levels = em.levels();
            const auto& p = em.plant();
            a.transitions = p.transitions();
            a.production_start = p.production_start();
            a.overflow_time = p.overflow_time();
            a.lockout_time = p.lockout_time();
            a.max_t1 = p.max_t1_level();
            a.final_output = em.plant().output_volume(em.horizon());
            a.horizon = em.horizon();
            a.fluctuation_windows = em.fluctuation_windows().size();
            return a;
        }
    }

    RunArtifacts run_benign(const ScenarioConfig& cfg, int cycles, SimTime lead_in, SimTime horizon,
                            std::uint64_t fluctuation_seed, bool fluctuations)
    {
        std::vector<int> fc;
        if (fluctuations)
        {
            fc.push_back(0);
        }
        plant::Emulation em(emulation_config(cfg, cycles, lead_in, horizon, fluctuation_seed, fc));
        em.run();
        return collect(em);
    }

    RunArtifacts run_profile_emulation(const ScenarioConfig& cfg, std::uint64_t fluctuation_seed)
    {
        plant::Emulation em(emulation_config(cfg, cfg.profile_cycles, cfg.lead_in, std::nullopt, fluctuation_seed,
                                             {cfg.fluctuation_cycle}));
        em.run();
        return collect(em);
    }

    std::pair<RunArtifacts, AttackResult> run_attack(const ScenarioConfig& cfg, const ProfileResult& profile,
                                                     std::size_t target_state, SimTime drop_duration)
    {
        std::vector<int> fc;
        if (cfg.attack_fluctuations)
        {
            fc.push_back(0);
        }
        plant::Emulation em(emulation_config(cfg, 1, 0, cfg.run_horizon, cfg.seed, fc));
        sniper::OnlineTracker tracker(profile.lts, profile.ids, target_state);
        auto& net = em.network();
        net.set_tap_observer([&](const PacketMeta& pkt) {
            if (tracker.feed(pkt) == sniper::TrackEvent::signal)
            {
                net.set_adversary_rule(
                    sniper::make_drop_rule(profile.lts, profile.ids, target_state, pkt.capture_time, drop_duration));
            }
        });
        em.run();

        AttackResult r;
        r.target_state = target_state;
        r.drop_duration = drop_duration;
        r.signal_time = tracker.signal_time();
        r.tracker_lost = tracker.lost();
        const auto& sched = cfg.plant.schedules.at(target_state);
        r.score = sniper::score(em.trace(), static_cast<int>(target_state), sched.repetitions);
        r.dropped_unique = sniper::dropped_set(em.trace()).size();
        if (r.signal_time)
        {
            const auto& st = profile.lts.states.at(target_state);
            r.deviation = sniper::assess_deviation(profile.lts, profile.ids, tracker.after_signal(),
                                                   {target_state, st.repetitions - 1, 0});
        }
        return {collect(em), r};
    }

    namespace
    {
        using Entries = std::vector<std::pair<std::string, std::string>>;

        void put(Entries& e, std::string key, std::string value) { e.emplace_back(std::move(key), std::move(value)); }

        void put_opt_time(Entries& e, std::string key, std::optional<SimTime> t)
        {
            put(e, std::move(key), t ? fmt_seconds(*t) : "");
        }

        std::optional<SimTime> first_exit(const RunArtifacts& a, const std::string& from)
        {
            for (const auto& t : a.transitions)
            {
                if (t.plc == "P1" && t.from == from)
                {
                    return t.time;
                }
            }
            return std::nullopt;
        }

        std::optional<std::int64_t> exit_repetitions(const RunArtifacts& a, const std::string& from)
        {
            for (const auto& t : a.transitions)
            {
                if (t.plc == "P1" && t.from == from)
                {
                    return t.repetitions;
                }
            }
            return std::nullopt;
        }

        void put_run(Entries& e, const RunArtifacts& a)
        {
            put(e, "simulated_s", fmt_seconds(a.horizon));
            put(e, "packets_captured", std::to_string(a.trace.packets.size()));
            put(e, "fluctuation_windows", std::to_string(a.fluctuation_windows));
            for (const char* s : {"S11", "S12", "S13"})
            {
                put_opt_time(e, std::string("p1_") + s + "_exit_s", first_exit(a, s));
            }
            put_opt_time(e, "production_start_s", a.production_start);
            put(e, "output_level_cm", fmt(a.final_output));
            put(e, "t1_max_cm", fmt(a.max_t1));
            put(e, "overflow", a.overflow_time ? "true" : "false");
            put_opt_time(e, "overflow_time_s", a.overflow_time);
            put(e, "p2_lockout", a.lockout_time ? "true" : "false");
        }

        std::string state_label(std::size_t target) { return plant::label(static_cast<plant::P1State>(target)); }

        ProfileResult load_or_profile(const ScenarioConfig& cfg, std::optional<RunArtifacts>* profile_run)
        {
            if (!cfg.lts_file.empty())
            {
                std::ifstream lin(cfg.lts_file);
                std::ifstream iin(cfg.idmap_file);
                if (!lin || !iin)
                {
                    throw ScenarioError("io", "cannot read lts_file/idmap_file");
                }
                ProfileResult r;
                r.lts = sniper::read_lts_csv(lin);
                r.ids = sniper::read_idmap_csv(iin);
                r.candidates = {r.lts};
                return r;
            }
            auto run = run_profile_emulation(cfg, cfg.seed);
            auto r = profile_from(run.trace);
            if (profile_run)
            {
                *profile_run = std::move(run);
            }
            return r;
        }

        Outcome attack_scenario(const ScenarioConfig& cfg, std::size_t target, Entries& e)
        {
            Outcome out;
            out.profile = load_or_profile(cfg, nullptr);
            const auto& prof = *out.profile;
            if (target >= prof.lts.states.size())
            {
                throw ScenarioError("profile", "mined model has no state " + std::to_string(target));
            }
            auto base = run_benign(cfg, 1, 0, cfg.run_horizon, cfg.seed, cfg.attack_fluctuations);
            auto [run, atk] = run_attack(cfg, prof, target, *cfg.drop_duration);
            const auto label = state_label(target);

            put(e, "target_state", label);
            put(e, "drop_duration_s", fmt_seconds(atk.drop_duration));
            put_opt_time(e, "attack_start_s", atk.signal_time);
            put_opt_time(e, "attack_end_s",
                         atk.signal_time ? std::optional<SimTime>(*atk.signal_time + atk.drop_duration) : std::nullopt);
            put(e, "tracker_lost", atk.tracker_lost ? "true" : "false");
            put(e, "recall", fmt(atk.score.recall));
            put(e, "precision", atk.score.precision ? fmt(*atk.score.precision) : "");
            put(e, "critical_in_repetition", std::to_string(atk.score.critical_total));
            put(e, "dropped_in_repetition", std::to_string(atk.score.dropped_total));
            put(e, "dropped_unique_total", std::to_string(atk.dropped_unique));
            put(e, "deviated", atk.deviation.deviated ? "true" : "false");
            put_opt_time(e, "first_divergence_s", atk.deviation.first_divergence);

            const auto t_attack = first_exit(run, label);
            const auto t_base = first_exit(base, label);
            put_opt_time(e, "transition_time_s", t_attack);
            put_opt_time(e, "baseline_transition_time_s", t_base);
            put(e, "transition_delay_s", t_attack && t_base ? fmt_seconds(*t_attack - *t_base) : "");
            const auto reps = exit_repetitions(run, label);
            put(e, "transition_repetitions", reps ? std::to_string(*reps) : "");
            put_opt_time(e, "baseline_production_start_s", base.production_start);
            put(e, "fill_delay_s",
                run.production_start && base.production_start
                    ? fmt_seconds(*run.production_start - *base.production_start)
                    : "");
            put(e, "baseline_output_level_cm", fmt(base.final_output));
            put(e, "output_reduction_pct",
                base.final_output > 0 ? fmt(100.0 * (base.final_output - run.final_output) / base.final_output) : "");
            put_run(e, run);
            out.run = std::move(run);
            return out;
        }

        void sweep_rows(const ScenarioConfig& cfg, const std::vector<detect::NndModel>& nnd,
                        const std::vector<detect::AutomatonModel>& detano, const detect::InvariantSet& pad,
                        const std::string& attack, SimTime drop, const RunArtifacts& run,
                        std::optional<SimTime> attack_start, const std::vector<SimTime>& drop_times,
                        std::vector<DetectorRow>& rows)
        {
            const auto egress = detect::egress_view(run.trace);
            const SimTime start = attack_start.value_or(run.horizon);
            for (std::size_t i = 0; i < cfg.detector_windows.size(); ++i)
            {
                const double w = to_seconds(cfg.detector_windows[i]);
                for (int d = 0; d < 2; ++d)
                {
                    const auto verdicts = d == 0 ? detect::nnd_detect(nnd[i], egress)
                                                 : detect::detano_detect(detano[i], egress);
                    const auto labels = detect::label_by_events(verdicts, drop_times);
                    rows.push_back({d == 0 ? "NND" : "Detano", w, attack, to_seconds(drop),
                                    detect::evaluate(verdicts, labels, start)});
                }
            }
            const auto verdicts = detect::pad_check(pad, run.log);
            const auto labels = attack_start ? detect::label_by_interval(verdicts, *attack_start, run.horizon + 1)
                                             : std::vector<bool>(verdicts.size(), false);
            rows.push_back({"PAD", to_seconds(cfg.plant.log_period), attack, to_seconds(drop),
                            detect::evaluate(verdicts, labels, start)});
        }

        Outcome sweep_scenario(const ScenarioConfig& cfg, Entries& e)
        {
            Outcome out;
            std::optional<RunArtifacts> training;
            out.profile = load_or_profile(cfg, &training);
            if (!training)
            {
                training = run_profile_emulation(cfg, cfg.seed);
            }
            const auto train_egress = detect::egress_view(training->trace);

            std::vector<detect::NndModel> nnd;
            std::vector<detect::AutomatonModel> detano;
            for (const auto w : cfg.detector_windows)
            {
                nnd.push_back(detect::nnd_train({train_egress}, w, cfg.nnd_safety_factor));
                detano.push_back(detect::detano_train({train_egress}, w, cfg.detano_tolerance));
            }
            detect::PadOptions po;
            po.min_support = cfg.pad_min_support;
            const auto pad = detect::pad_mine(training->log, po);
            put(e, "pad_rules", std::to_string(pad.rules.size()));
            for (std::size_t i = 0; i < cfg.detector_windows.size(); ++i)
            {
                const auto w = fmt_time(cfg.detector_windows[i], kSecond);
                put(e, "nnd_threshold_" + w + "s", fmt(nnd[i].threshold));
                put(e, "detano_min_mean_ll_" + w + "s", fmt(detano[i].min_mean_log_likelihood));
            }

            // Held-out benign cycle: different fluctuation draw, same plant.
            auto held = run_benign(cfg, 1, 0, cfg.plant.cycle_period(), cfg.seed + 1, true);
            sweep_rows(cfg, nnd, detano, pad, "benign", 0, held, std::nullopt, {}, out.report.detectors);

            const std::pair<std::size_t, const std::vector<SimTime>*> attacks[] = {
                {0, &cfg.process_delay_drops}, {1, &cfg.tank_overflow_drops}};
            for (const auto& [target, drops] : attacks)
            {
                for (const auto drop : *drops)
                {
                    auto [run, atk] = run_attack(cfg, *out.profile, target, drop);
                    std::vector<SimTime> times;
                    for (const auto& p : sniper::dropped_set(run.trace))
                    {
                        times.push_back(p.capture_time);
                    }
                    sweep_rows(cfg, nnd, detano, pad, target == 0 ? "process-delay" : "tank-overflow", drop, run,
                               atk.signal_time, times, out.report.detectors);
                }
            }
            put(e, "detector_rows", std::to_string(out.report.detectors.size()));
            put_run(e, held);
            out.run = std::move(held);
            return out;
        }
    }

    Outcome run_scenario(const ScenarioConfig& cfg)
    {
        validate(cfg);
        Entries e;
        put(e, "scenario", to_string(cfg.kind));
        put(e, "seed", std::to_string(cfg.seed));
        char hash[32];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
        put(e, "config_hash", hash);

        Outcome out;
        try
        {
            switch (cfg.kind)
            {
            case Kind::baseline: {
                out.run = run_benign(cfg, 1, 0, cfg.run_horizon, cfg.seed, cfg.attack_fluctuations);
                put_run(e, out.run);
                break;
            }
            case Kind::profile: {
                std::optional<RunArtifacts> run;
                out.profile = load_or_profile(cfg, &run);
                if (!run)
                {
                    throw ScenarioError("config", "the profile scenario mines its own model; drop lts_file");
                }
                const auto& p = *out.profile;
                put(e, "complete_cycles", std::to_string(p.complete_cycles));
                put(e, "sequence_length", std::to_string(p.sequence_length));
                put(e, "lts_states", std::to_string(p.lts.states.size()));
                std::string counts;
                for (const auto& c : p.candidates)
                {
                    counts += (counts.empty() ? "" : ":") + std::to_string(c.states.size());
                }
                put(e, "candidate_state_counts", counts);
                for (std::size_t i = 0; i < p.lts.states.size(); ++i)
                {
                    put(e, "state_" + std::to_string(i) + "_length", std::to_string(p.lts.states[i].ids.size()));
                    put(e, "state_" + std::to_string(i) + "_repetitions",
                        std::to_string(p.lts.states[i].repetitions));
                }
                std::size_t retx = 0;
                for (const auto& pk : run->trace.packets)
                {
                    retx += pk.retransmission ? 1 : 0;
                }
                put(e, "retransmissions", std::to_string(retx));
                // Repetitions at each P1 exit, per cycle, colon separated.
                std::string reps;
                for (const auto& t : run->transitions)
                {
                    if (t.plc == "P1")
                    {
                        reps += (reps.empty() ? "" : (t.from == "S11" ? ";" : ":")) + std::to_string(t.repetitions);
                    }
                }
                put(e, "p1_exit_repetitions", reps);
                put_run(e, *run);
                out.run = std::move(*run);
                break;
            }
            case Kind::process_delay:
                out = attack_scenario(cfg, 0, e);
                break;
            case Kind::tank_overflow:
                out = attack_scenario(cfg, 1, e);
                break;
            case Kind::detector_sweep:
                out = sweep_scenario(cfg, e);
                break;
            }
        }
        catch (const sniper::SniperError& err)
        {
            throw ScenarioError(err.kind(), err.what());
        }
        out.report.entries = std::move(e);
        return out;
    }

    void write_report_csv(std::ostream& out, const Report& report)
    {
        out << "key,value\n";
        for (const auto& [k, v] : report.entries)
        {
            out << k << ',' << v << '\n';
        }
    }

    void write_detectors_csv(std::ostream& out, const std::vector<DetectorRow>& rows)
    {
        out << "detector,window_size_s,attack,drop_duration_s,tpr,fpr,delay_s\n";
        for (const auto& r : rows)
        {
            out << r.detector << ',' << fmt_compact(r.window_size_s) << ',' << r.attack << ','
                << fmt_compact(r.drop_duration_s) << ',' << fmt(r.eval.tpr) << ',' << fmt(r.eval.fpr) << ','
                << (r.eval.delay_s ? fmt(*r.eval.delay_s) : "") << '\n';
        }
    }

    namespace
    {
        template <class Fn>
        void write_file(const std::filesystem::path& path, Fn fn)
        {
            std::ofstream out(path, std::ios::binary);
            if (!out)
            {
                throw ScenarioError("io", "cannot write '" + path.string() + "'");
            }
            fn(out);
            out.flush();
            if (!out)
            {
                throw ScenarioError("io", "write failed for '" + path.string() + "'");
            }
        }
    }

    void emit_report(const ScenarioConfig& cfg, const Outcome& outcome)
    {
        std::error_code ec;
        std::filesystem::create_directories(cfg.out_dir, ec);
        if (ec)
        {
            throw ScenarioError("io", "cannot create output directory '" + cfg.out_dir.string() + "': " + ec.message());
        }
        const auto& dir = cfg.out_dir;
        write_file(dir / "report.csv", [&](std::ostream& o) { write_report_csv(o, outcome.report); });
        write_file(dir / "trace.csv",
                   [&](std::ostream& o) { wire::write_trace_csv(o, outcome.run.trace, cfg.emit_ground_truth); });
        write_file(dir / "plant_log.csv", [&](std::ostream& o) { plant::write_log_csv(o, outcome.run.log); });
        write_file(dir / "levels.csv", [&](std::ostream& o) { plant::write_levels_csv(o, outcome.run.levels); });
        if (outcome.profile)
        {
            write_file(dir / "lts.csv", [&](std::ostream& o) { sniper::write_lts_csv(o, outcome.profile->lts); });
            write_file(dir / "idmap.csv", [&](std::ostream& o) { sniper::write_idmap_csv(o, outcome.profile->ids); });
        }
        if (cfg.kind == Kind::detector_sweep)
        {
            write_file(dir / "detectors.csv",
                       [&](std::ostream& o) { write_detectors_csv(o, outcome.report.detectors); });
        }
    }
}
