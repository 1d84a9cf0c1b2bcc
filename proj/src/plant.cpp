#include "ibh/plant.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace ibh::plant
{
    const char* label(P1State s)
    {
        switch (s)
        {
        case P1State::S11:
            return "S11";
        case P1State::S12:
            return "S12";
        case P1State::S13:
            return "S13";
        case P1State::Idle:
            return "IDLE";
        }
        return "?";
    }

    const char* label(P2State s)
    {
        switch (s)
        {
        case P2State::S21:
            return "S21";
        case P2State::S22:
            return "S22";
        case P2State::S23:
            return "S23";
        }
        return "?";
    }

    bool MessageSlot::is_request() const noexcept
    {
        return role == SlotRole::readiness_query || role == SlotRole::fill_query || role == SlotRole::demand_query ||
               role == SlotRole::batch_query;
    }

    SimTime PlantConfig::repetition_duration(int state) const
    {
        return static_cast<SimTime>(schedules.at(static_cast<std::size_t>(state)).slots.size()) * slot_gap +
               repetition_gap;
    }

    SimTime PlantConfig::nominal_s12_entry() const { return schedules[0].repetitions * repetition_duration(0); }

    SimTime PlantConfig::nominal_operational_span() const
    {
        SimTime span = 0;
        for (int s = 0; s < 3; ++s)
        {
            span += schedules[static_cast<std::size_t>(s)].repetitions * repetition_duration(s);
        }
        return span;
    }

    std::array<StateSchedule, 3> default_schedules(const PlantConfig& cfg)
    {
        // Every slot is its own message kind; lengths are a permutation of 40..200 so
        // no two kinds share a ciphertext length.
        int kind = 0;
        auto next_length = [&kind] { return static_cast<std::uint32_t>(40 + (37 * kind++) % 161); };
        auto pair = [&](std::vector<MessageSlot>& v, Ipv4 peer, SlotRole q, SlotRole r, bool critical) {
            v.push_back({cfg.p1, peer, next_length(), q, critical});
            v.push_back({peer, cfg.p1, next_length(), r, critical});
        };
        auto plain_pair = [&](std::vector<MessageSlot>& v, Ipv4 peer) {
            pair(v, peer, SlotRole::plain, SlotRole::plain, false);
        };

        std::array<StateSchedule, 3> s;

        s[0].label = "S11";
        s[0].repetitions = cfg.readiness_repetition;
        auto& a = s[0].slots;
        plain_pair(a, cfg.scada);
        pair(a, cfg.p2, SlotRole::readiness_query, SlotRole::readiness_reply, true);
        plain_pair(a, cfg.p2);
        pair(a, cfg.p3, SlotRole::readiness_query, SlotRole::readiness_reply, true);
        plain_pair(a, cfg.p2);
        pair(a, cfg.p4, SlotRole::readiness_query, SlotRole::readiness_reply, true);
        plain_pair(a, cfg.p2);
        plain_pair(a, cfg.p2);
        plain_pair(a, cfg.p2);
        plain_pair(a, cfg.scada);
        plain_pair(a, cfg.p3);
        plain_pair(a, cfg.p4);
        plain_pair(a, cfg.scada);

        s[1].label = "S12";
        s[1].repetitions = 125;
        auto& b = s[1].slots;
        pair(b, cfg.p2, SlotRole::fill_query, SlotRole::fill_reply, true);
        const Ipv4 others[] = {cfg.scada, cfg.p3, cfg.p4};
        for (int i = 0; i < 7; ++i)
        {
            plain_pair(b, cfg.p2);
            plain_pair(b, others[i % 3]);
        }

        s[2].label = "S13";
        s[2].repetitions = cfg.batch_repetitions;
        auto& c = s[2].slots;
        pair(c, cfg.scada, SlotRole::batch_query, SlotRole::batch_reply, true);
        for (int i = 0; i < 6; ++i)
        {
            plain_pair(c, cfg.p2);
            plain_pair(c, others[i % 3]);
        }
        c.push_back({cfg.p1, cfg.p2, next_length(), SlotRole::plain, false});
        c.push_back({cfg.p1, cfg.scada, next_length(), SlotRole::plain, false});
        pair(c, cfg.p2, SlotRole::demand_query, SlotRole::demand_reply, false);
        plain_pair(c, cfg.p3);
        return s;
    }

    double fill_start_level(const PlantConfig& cfg)
    {
        // T2 starts low enough that P101 fills it to the high mark halfway through
        // P1's second-to-last S12 repetition.
        const double fill_s =
            (static_cast<double>(cfg.schedules[1].repetitions) - 1.5) * to_seconds(cfg.repetition_duration(1));
        return cfg.t2_high - cfg.transfer_rate * fill_s;
    }

    PlantConfig default_plant_config()
    {
        PlantConfig cfg;
        cfg.schedules = default_schedules(cfg);
        cfg.t2_initial = fill_start_level(cfg);
        // Calibrated so an undisturbed cycle starts producing ~1590 s before the 2 h mark.
        cfg.downstream_start_volume = 3600.0;
        return cfg;
    }

    void validate(const PlantConfig& cfg)
    {
        if (!(0.0 < cfg.functional_max_level && cfg.functional_max_level < cfg.risky_level &&
              cfg.risky_level < cfg.tank_capacity_level))
        {
            throw std::invalid_argument("plant: require 0 < functional max < risky < capacity");
        }
        if (cfg.slot_gap <= 0 || cfg.repetition_gap < 0 || cfg.physics_tick <= 0 || cfg.log_period <= 0 ||
            cfg.guard_delta_t <= 0 || cfg.coordination_timeout <= 0 || cfg.link_latency <= 0)
        {
            throw std::invalid_argument("plant: timing constants must be positive");
        }
        if (cfg.t2_low >= cfg.t2_high || cfg.t1_initial < 0 || cfg.t2_initial < 0)
        {
            throw std::invalid_argument("plant: inconsistent tank levels");
        }
        if (cfg.readiness_repetition < 1 || cfg.batch_repetitions < 1)
        {
            throw std::invalid_argument("plant: repetition counts must be positive");
        }
        std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> kinds;
        for (const auto& s : cfg.schedules)
        {
            if (s.slots.empty() || s.slots.size() % 2 != 0 || s.slots.size() > 64)
            {
                throw std::invalid_argument("plant: schedule " + s.label + " must have an even slot count <= 64");
            }
            for (const auto& slot : s.slots)
            {
                if (slot.payload_length == 0)
                {
                    throw std::invalid_argument("plant: zero payload length in " + s.label);
                }
                if (slot.sender != cfg.p1 && slot.receiver != cfg.p1)
                {
                    throw std::invalid_argument("plant: every slot must involve P1");
                }
                if (!kinds.insert({slot.payload_length, slot.sender.value, slot.receiver.value}).second)
                {
                    throw std::invalid_argument("plant: two slots share a (length, src, dst) tuple");
                }
            }
        }
    }

    void integrate_physics(ProcessState& st, const Actuators& act, const PhysicsRates& r, double dt)
    {
        if (dt <= 0.0)
        {
            return;
        }
        const double in1 = act.mv101_open ? r.inflow * dt : 0.0;
        double t1 = st.t1.level + in1;
        const double xfer = (act.p101_on && act.mv201_open) ? std::min(r.transfer * dt, t1) : 0.0;
        t1 -= xfer;
        st.removed_from_t1 += xfer;
        st.delivered_to_t2 += xfer;
        double t2 = st.t2.level + xfer;
        const double out2 = act.p201_on ? std::min(r.t2_outflow * dt, t2) : 0.0;
        t2 -= out2;
        st.buffer += out2;
        if (!st.producing && st.buffer >= r.start_volume)
        {
            st.producing = true;
        }
        const double prod = st.producing ? std::min(r.production * dt, st.buffer) : 0.0;
        st.buffer -= prod;
        st.output += prod;

        st.t1.level = t1;
        st.t2.level = t2;
        if (t1 > r.capacity)
        {
            st.t1.overflowed = true;
        }
        if (t2 > r.capacity)
        {
            st.t2.overflowed = true;
        }
        st.fit101 = in1 / dt;
        st.fit201 = xfer / dt;
        st.fit301 = out2 / dt;
    }

    namespace
    {
        std::array<FieldSpec, kLogFields> make_schema()
        {
            const std::vector<std::string> onoff{"Off", "On"};
            const std::vector<std::string> valve{"Closed", "Open"};
            const std::vector<std::string> yesno{"No", "Yes"};
            return {{
                {"P1.State", true, {"S11", "S12", "S13", "IDLE"}},
                {"P2.State", true, {"S21", "S22", "S23"}},
                {"MV101.Status", true, valve},
                {"P101.Status", true, onoff},
                {"MV201.Status", true, valve},
                {"P201.Status", true, onoff},
                {"LIT101", false, {}},
                {"LIT201", false, {}},
                {"FIT101", false, {}},
                {"FIT201", false, {}},
                {"FIT301", false, {}},
                {"DS.Buffer", false, {}},
                {"OUT.Level", false, {}},
                {"LIT101.AHH", true, {"Normal", "Alarm"}},
                {"P2.Ready", true, yesno},
                {"P3.Ready", true, yesno},
                {"P4.Ready", true, yesno},
                {"P6.Producing", true, yesno},
                {"P1.Demand", true, {"Hold", "Accept"}},
                {"AIT201", false, {}},
                {"AIT202", false, {}},
            }};
        }

        std::vector<std::string> split(const std::string& line)
        {
            std::vector<std::string> out;
            std::string cell;
            std::istringstream is(line);
            while (std::getline(is, cell, ','))
            {
                out.push_back(cell);
            }
            if (!line.empty() && line.back() == ',')
            {
                out.emplace_back();
            }
            return out;
        }

        std::string fixed(double v, int digits)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.*f", digits, v);
            // Avoid "-0.0000" so re-runs compare byte-wise regardless of rounding sign.
            std::string s(buf);
            if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-')
            {
                s.erase(0, 1);
            }
            return s;
        }
    }

    const std::array<FieldSpec, kLogFields>& log_schema()
    {
        static const auto schema = make_schema();
        return schema;
    }

    std::size_t field_index(const std::string& name)
    {
        const auto& schema = log_schema();
        for (std::size_t i = 0; i < schema.size(); ++i)
        {
            if (schema[i].name == name)
            {
                return i;
            }
        }
        throw std::out_of_range("unknown log field " + name);
    }

    void write_log_csv(std::ostream& out, const std::vector<LogEntry>& log)
    {
        const auto& schema = log_schema();
        out << "t_s";
        for (const auto& f : schema)
        {
            out << ',' << f.name;
        }
        out << '\n';
        for (const auto& e : log)
        {
            out << fixed(to_seconds(e.time), 3);
            for (std::size_t i = 0; i < kLogFields; ++i)
            {
                out << ',';
                if (schema[i].categorical)
                {
                    out << schema[i].labels.at(static_cast<std::size_t>(e.values[i]));
                }
                else
                {
                    out << fixed(e.values[i], 4);
                }
            }
            out << '\n';
        }
    }

    std::vector<LogEntry> read_log_csv(std::istream& in)
    {
        const auto& schema = log_schema();
        std::string line;
        if (!std::getline(in, line))
        {
            throw std::runtime_error("log csv: empty input");
        }
        const auto header = split(line);
        if (header.size() != kLogFields + 1 || header[0] != "t_s")
        {
            throw std::runtime_error("log csv: unexpected header");
        }
        for (std::size_t i = 0; i < kLogFields; ++i)
        {
            if (header[i + 1] != schema[i].name)
            {
                throw std::runtime_error("log csv: column " + std::to_string(i + 1) + " is " + header[i + 1] +
                                         ", expected " + schema[i].name);
            }
        }
        std::vector<LogEntry> log;
        while (std::getline(in, line))
        {
            if (line.empty())
            {
                continue;
            }
            const auto c = split(line);
            if (c.size() != kLogFields + 1)
            {
                throw std::runtime_error("log csv: row with " + std::to_string(c.size()) + " fields");
            }
            LogEntry e;
            e.time = from_seconds(std::stod(c[0]));
            for (std::size_t i = 0; i < kLogFields; ++i)
            {
                const auto& cell = c[i + 1];
                if (schema[i].categorical)
                {
                    const auto& labels = schema[i].labels;
                    const auto it = std::find(labels.begin(), labels.end(), cell);
                    if (it == labels.end())
                    {
                        throw std::runtime_error("log csv: bad label '" + cell + "' for " + schema[i].name);
                    }
                    e.values[i] = static_cast<double>(it - labels.begin());
                }
                else
                {
                    e.values[i] = std::stod(cell);
                }
            }
            log.push_back(e);
        }
        return log;
    }

    void write_levels_csv(std::ostream& out, const std::vector<LevelSample>& levels)
    {
        out << "t_s,T1_level_cm,T2_level_cm,output_level_cm\n";
        for (const auto& l : levels)
        {
            out << fixed(to_seconds(l.time), 3) << ',' << fixed(l.t1, 4) << ',' << fixed(l.t2, 4) << ','
                << fixed(l.output, 4) << '\n';
        }
    }

    std::vector<LevelSample> read_levels_csv(std::istream& in)
    {
        std::string line;
        if (!std::getline(in, line) || line != "t_s,T1_level_cm,T2_level_cm,output_level_cm")
        {
            throw std::runtime_error("levels csv: unexpected header");
        }
        std::vector<LevelSample> out;
        while (std::getline(in, line))
        {
            if (line.empty())
            {
                continue;
            }
            const auto c = split(line);
            if (c.size() != 4)
            {
                throw std::runtime_error("levels csv: bad row");
            }
            out.push_back({from_seconds(std::stod(c[0])), std::stod(c[1]), std::stod(c[2]), std::stod(c[3])});
        }
        return out;
    }

    Plant::Plant(sim::Simulator& simulator, wire::Network& network, PlantConfig config)
        : sim_(simulator), net_(network), cfg_(std::move(config))
    {
        validate(cfg_);
        for (std::size_t s = 0; s < 3; ++s)
        {
            const auto& slots = cfg_.schedules[s].slots;
            for (std::size_t i = 0; i < slots.size(); ++i)
            {
                const auto role = slots[i].role;
                if (slots[i].critical && (role == SlotRole::readiness_reply || role == SlotRole::fill_reply ||
                                          role == SlotRole::batch_reply))
                {
                    required_replies_[s] |= std::uint64_t{1} << i;
                }
            }
        }
        reset_process();
    }

    void Plant::add_links(wire::Network& network, const PlantConfig& cfg)
    {
        for (const auto& s : cfg.schedules)
        {
            for (const auto& slot : s.slots)
            {
                if (!network.has_link(slot.sender, slot.receiver))
                {
                    sim::LinkModel link;
                    link.src = slot.sender;
                    link.dst = slot.receiver;
                    link.base_latency = cfg.link_latency;
                    network.add_link(std::move(link), true);
                }
            }
        }
    }

    PhysicsRates Plant::rates() const
    {
        PhysicsRates r;
        r.inflow = cfg_.inflow_rate;
        r.transfer = cfg_.transfer_rate;
        r.t2_outflow = cfg_.t2_outflow_rate;
        r.production = cfg_.production_rate;
        r.capacity = cfg_.tank_capacity_level;
        r.start_volume = cfg_.downstream_start_volume;
        return r;
    }

    void Plant::reset_process()
    {
        proc_ = ProcessState{};
        proc_.t1.level = cfg_.t1_initial;
        proc_.t2.level = cfg_.t2_initial;
        act_ = Actuators{};
        p1_ = P1State::Idle;
        p1_rep_ = 0;
        reply_mask_ = 0;
        demand_.reset();
        p2_ = P2State::S21;
        p2_locked_ = false;
        p2_seen_s13_ = false;
        peer_ready_.fill(false);
        readiness_query_.fill(QueryStamp{});
        fill_query_ = QueryStamp{};
        batch_query_ = QueryStamp{};
        max_t1_ = std::max(max_t1_, proc_.t1.level);
    }

    void Plant::begin_cycle(SimTime at)
    {
        sim_.schedule(at, [this, at] {
            tick(at);
            ++epoch_;
            cycle_start_ = at;
            reset_process();
            last_physics_ = at;
            const auto epoch = epoch_;
            const SimTime ready_at = at + (cfg_.readiness_repetition - 1) * cfg_.repetition_duration(0);
            sim_.schedule(ready_at, [this, epoch, ready_at] { peers_ready(ready_at, epoch); });
            enter_p1_state(P1State::S11, at);
            start_repetition(at);
        });
    }

    void Plant::peers_ready(SimTime now, std::uint64_t epoch)
    {
        if (epoch != epoch_)
        {
            return;
        }
        tick(now);
        peer_ready_.fill(true);
        if (p2_ == P2State::S21)
        {
            enter_p2_state(P2State::S22, now);
        }
    }

    void Plant::start_repetition(SimTime now)
    {
        ++p1_rep_;
        reply_mask_ = 0;
        const int state = static_cast<int>(p1_);
        const auto rep = p1_rep_;
        const auto epoch = epoch_;
        const auto& slots = cfg_.schedules[static_cast<std::size_t>(state)].slots;
        for (std::size_t i = 0; i < slots.size(); ++i)
        {
            sim_.schedule(now + static_cast<SimTime>(i) * cfg_.slot_gap,
                          [this, state, rep, i, epoch] { emit(state, rep, static_cast<int>(i), epoch); });
        }
        sim_.schedule(now + cfg_.repetition_duration(state),
                      [this, state, rep, epoch] { repetition_boundary(state, rep, epoch); });
    }

    int Plant::peer_index(Ipv4 ip) const
    {
        if (ip == cfg_.p2)
        {
            return 0;
        }
        if (ip == cfg_.p3)
        {
            return 1;
        }
        if (ip == cfg_.p4)
        {
            return 2;
        }
        return -1;
    }

    void Plant::emit(int state, std::int64_t rep, int slot_index, std::uint64_t epoch)
    {
        if (epoch != epoch_)
        {
            return;
        }
        const auto& sched = cfg_.schedules[static_cast<std::size_t>(state)];
        const auto& slot = sched.slots[static_cast<std::size_t>(slot_index)];
        std::int64_t value = 0;
        switch (slot.role)
        {
        case SlotRole::plain:
            break;
        case SlotRole::readiness_query:
        case SlotRole::fill_query:
        case SlotRole::demand_query:
        case SlotRole::batch_query:
            value = rep;
            break;
        case SlotRole::readiness_reply: {
            const int peer = peer_index(slot.sender);
            value = (peer >= 0 && peer_ready_[static_cast<std::size_t>(peer)] &&
                     readiness_query_[static_cast<std::size_t>(peer)].matches(state, rep))
                        ? 1
                        : 0;
            break;
        }
        case SlotRole::fill_reply:
            value = (p2_ == P2State::S23 && fill_query_.matches(state, rep)) ? 1 : 0;
            break;
        case SlotRole::demand_reply:
            if (p2_locked_)
            {
                return; // a locked-out P2 no longer answers
            }
            value = (p2_ == P2State::S22 && act_.mv201_open) ? 1 : 0;
            break;
        case SlotRole::batch_reply:
            value = (batch_query_.matches(state, rep) && rep >= cfg_.batch_repetitions) ? 1 : 0;
            break;
        }

        wire::AppMessage msg;
        msg.src = slot.sender;
        msg.dst = slot.receiver;
        msg.payload_length = slot.payload_length;
        msg.kind = state * 64 + slot_index;
        msg.critical = slot.critical && rep >= sched.repetitions;
        msg.emit_time = sim_.now();
        msg.value = value;
        msg.plc_state = state;
        msg.repetition = rep;
        msg.slot = slot_index;
        ++emitted_[static_cast<std::size_t>(state)];
        net_.transmit(msg, [this, epoch](const wire::AppMessage& m, SimTime at) {
            if (epoch == epoch_)
            {
                on_receive(m, at);
            }
        });
    }

    void Plant::on_receive(const wire::AppMessage& msg, SimTime at)
    {
        if (msg.dst == cfg_.p2 && msg.plc_state == static_cast<int>(P1State::S13))
        {
            p2_seen_s13_ = true;
        }
        const auto& slot =
            cfg_.schedules[static_cast<std::size_t>(msg.plc_state)].slots[static_cast<std::size_t>(msg.slot)];
        const bool current = msg.plc_state == static_cast<int>(p1_) && msg.repetition == p1_rep_;
        switch (slot.role)
        {
        case SlotRole::plain:
            break;
        case SlotRole::readiness_query: {
            const int peer = peer_index(msg.dst);
            if (peer >= 0)
            {
                readiness_query_[static_cast<std::size_t>(peer)] = {msg.plc_state, msg.repetition};
            }
            break;
        }
        case SlotRole::fill_query:
            fill_query_ = {msg.plc_state, msg.repetition};
            break;
        case SlotRole::batch_query:
            batch_query_ = {msg.plc_state, msg.repetition};
            break;
        case SlotRole::demand_query:
            break;
        case SlotRole::readiness_reply:
        case SlotRole::fill_reply:
        case SlotRole::batch_reply:
            if (current && msg.value == 1)
            {
                reply_mask_ |= std::uint64_t{1} << msg.slot;
            }
            break;
        case SlotRole::demand_reply:
            demand_.update(msg.value == 1, at);
            if (p1_ == P1State::S13)
            {
                apply_p1_actuators(at);
            }
            break;
        }
    }

    void Plant::repetition_boundary(int state, std::int64_t rep, std::uint64_t epoch)
    {
        if (epoch != epoch_ || state != static_cast<int>(p1_) || rep != p1_rep_)
        {
            return;
        }
        const SimTime now = sim_.now();
        const auto required = required_replies_[static_cast<std::size_t>(state)];
        if ((reply_mask_ & required) == required)
        {
            const auto from = p1_;
            const auto to = static_cast<P1State>(state + 1);
            transitions_.push_back({now, "P1", label(from), label(to), rep});
            enter_p1_state(to, now);
            if (to == P1State::Idle)
            {
                return;
            }
        }
        start_repetition(now);
    }

    void Plant::enter_p1_state(P1State s, SimTime now)
    {
        tick(now);
        p1_ = s;
        p1_rep_ = 0;
        reply_mask_ = 0;
        apply_p1_actuators(now);
    }

    void Plant::apply_p1_actuators(SimTime now)
    {
        tick(now);
        switch (p1_)
        {
        case P1State::S11:
        case P1State::Idle:
            act_.mv101_open = false;
            act_.p101_on = false;
            break;
        case P1State::S12:
            act_.mv101_open = false;
            act_.p101_on = true;
            break;
        case P1State::S13: {
            const bool accept = demand_.read(now);
            act_.mv101_open = accept;
            act_.p101_on = accept;
            break;
        }
        }
    }

    void Plant::enter_p2_state(P2State s, SimTime now)
    {
        const auto from = p2_;
        p2_ = s;
        transitions_.push_back({now, "P2", label(from), label(s), 0});
        switch (s)
        {
        case P2State::S21:
            act_.mv201_open = false;
            act_.p201_on = false;
            break;
        case P2State::S22:
            act_.mv201_open = true;
            act_.p201_on = false;
            break;
        case P2State::S23: {
            act_.mv201_open = false;
            act_.p201_on = true;
            p2_seen_s13_ = false;
            const auto entry = ++s23_entries_;
            const auto epoch = epoch_;
            sim_.schedule(now + cfg_.coordination_timeout, [this, entry, epoch] {
                if (epoch == epoch_ && entry == s23_entries_ && p2_ == P2State::S23 && !p2_seen_s13_ && !p2_locked_)
                {
                    p2_locked_ = true;
                    lockout_time_ = sim_.now();
                }
            });
            break;
        }
        }
    }

    void Plant::tick(SimTime now)
    {
        if (now > last_physics_)
        {
            const bool was_producing = proc_.producing;
            const bool was_overflowed = proc_.t1.overflowed;
            integrate_physics(proc_, act_, rates(), to_seconds(now - last_physics_));
            last_physics_ = now;
            if (proc_.producing && !was_producing && !production_start_)
            {
                production_start_ = now;
            }
            if (proc_.t1.overflowed && !was_overflowed && !overflow_time_)
            {
                overflow_time_ = now;
            }
            max_t1_ = std::max(max_t1_, proc_.t1.level);
        }
        if (p2_ == P2State::S22 && proc_.t2.level >= cfg_.t2_high)
        {
            enter_p2_state(P2State::S23, now);
        }
        else if (p2_ == P2State::S23 && !p2_locked_ && proc_.t2.level <= cfg_.t2_low)
        {
            enter_p2_state(P2State::S22, now);
        }
    }

    LogEntry Plant::log_snapshot(SimTime now)
    {
        tick(now);
        LogEntry e;
        e.time = now;
        auto& v = e.values;
        auto b = [](bool x) { return x ? 1.0 : 0.0; };
        v[0] = static_cast<double>(static_cast<int>(p1_));
        v[1] = static_cast<double>(static_cast<int>(p2_));
        v[2] = b(act_.mv101_open);
        v[3] = b(act_.p101_on);
        v[4] = b(act_.mv201_open);
        v[5] = b(act_.p201_on);
        v[6] = proc_.t1.level;
        v[7] = proc_.t2.level;
        v[8] = proc_.fit101;
        v[9] = proc_.fit201;
        v[10] = proc_.fit301;
        v[11] = proc_.buffer;
        v[12] = proc_.output;
        v[13] = b(proc_.t1.overflowed);
        v[14] = b(peer_ready_[0]);
        v[15] = b(peer_ready_[1]);
        v[16] = b(peer_ready_[2]);
        v[17] = b(proc_.producing);
        v[18] = b(demand_.read(now));
        v[19] = 240.0 + 0.02 * proc_.t2.level;
        v[20] = 7.0 + (act_.p201_on ? 0.2 : 0.0);
        return e;
    }

    LevelSample Plant::level_sample(SimTime now)
    {
        tick(now);
        return {now, proc_.t1.level, proc_.t2.level, proc_.output};
    }

    double Plant::output_volume(SimTime now)
    {
        tick(now);
        return proc_.output;
    }

    Emulation::Emulation(EmulationConfig config)
        : cfg_(std::move(config)), net_(sim_, cfg_.wire), plant_(sim_, net_, cfg_.plant)
    {
        if (cfg_.cycles < 1)
        {
            throw std::invalid_argument("emulation: at least one cycle");
        }
        Plant::add_links(net_, cfg_.plant);
        horizon_ = cfg_.horizon.value_or(cfg_.lead_in + cfg_.cycles * cfg_.plant.cycle_period());
        net_.trace().capture_start = 0;
        net_.trace().capture_end = horizon_;

        sim::SeededRng rng(cfg_.seed);
        const auto& f = cfg_.fluctuations;
        for (const int c : f.cycles)
        {
            if (c < 0 || c >= cfg_.cycles)
            {
                throw std::invalid_argument("emulation: fluctuation cycle index out of range");
            }
            const SimTime c0 = cycle_start(c);
            auto w = sim::inject_fluctuations(c0 + f.span_begin, c0 + f.span_end, f.count, rng, f.extra_delay);
            windows_.insert(windows_.end(), w.begin(), w.end());
        }
        net_.set_fluctuations(windows_);
    }

    SimTime Emulation::cycle_start(int cycle) const noexcept
    {
        return cfg_.lead_in + static_cast<SimTime>(cycle) * cfg_.plant.cycle_period();
    }

    void Emulation::schedule_tick(SimTime at)
    {
        if (at > horizon_)
        {
            return;
        }
        sim_.schedule(at, [this, at] {
            plant_.tick(at);
            schedule_tick(at + cfg_.plant.physics_tick);
        });
    }

    void Emulation::schedule_log(SimTime at)
    {
        // Samples cover [0, horizon): a 2 h run logs 7200 entries at 1 s.
        if (at >= horizon_)
        {
            return;
        }
        sim_.schedule(at, [this, at] {
            if (cfg_.record_log)
            {
                log_.push_back(plant_.log_snapshot(at));
            }
            levels_.push_back(plant_.level_sample(at));
            schedule_log(at + cfg_.plant.log_period);
        });
    }

    void Emulation::run()
    {
        for (int c = 0; c < cfg_.cycles; ++c)
        {
            const SimTime c0 = cycle_start(c);
            if (c0 < horizon_)
            {
                plant_.begin_cycle(c0);
            }
        }
        schedule_tick(0);
        schedule_log(0);
        sim_.run_until(horizon_);
    }
}
