#include "ibh/scenario.hpp"
#include "ibh/sniper.hpp"
#include "ibh/wire.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>


namespace py = pybind11;
namespace sc = ibh::scenario;
namespace sn = ibh::sniper;

namespace
{
    using PyPattern = std::pair<std::vector<std::uint32_t>, std::int64_t>;

    std::vector<PyPattern> to_py(const std::vector<sn::Pattern>& ps)
    {
        std::vector<PyPattern> out;
        for (const auto& p : ps)
        {
            out.emplace_back(p.ids, p.repetitions);
        }
        return out;
    }

    py::dict run(const std::string& scenario, std::uint64_t seed, std::optional<double> drop_duration_s,
                 std::optional<std::string> out_dir, const std::map<std::string, std::string>& settings)
    {
        sc::ScenarioConfig cfg;
        for (const auto& [k, v] : settings)
        {
            sc::apply_setting(cfg, k, v);
        }
        cfg.kind = sc::parse_kind(scenario);
        cfg.seed = seed;
        if (drop_duration_s)
        {
            cfg.drop_duration = ibh::from_seconds(*drop_duration_s);
        }
        sc::Outcome outcome;
        {
            py::gil_scoped_release release;
            outcome = sc::run_scenario(cfg);
            if (out_dir)
            {
                cfg.out_dir = *out_dir;
                sc::emit_report(cfg, outcome);
            }
        }
        py::dict report;
        for (const auto& [k, v] : outcome.report.entries)
        {
            report[py::str(k)] = v;
        }
        py::list rows;
        for (const auto& r : outcome.report.detectors)
        {
            py::dict row;
            row["detector"] = r.detector;
            row["window_size_s"] = r.window_size_s;
            row["attack"] = r.attack;
            row["drop_duration_s"] = r.drop_duration_s;
            row["tpr"] = r.eval.tpr;
            row["fpr"] = r.eval.fpr;
            row["delay_s"] = r.eval.delay_s;
            rows.append(row);
        }
        py::dict result;
        result["report"] = report;
        result["detectors"] = rows;
        return result;
    }
}

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Targeted blackhole attack emulation on an encrypted ICS network";

    py::register_exception<sn::SniperError>(m, "SniperError", PyExc_ValueError);
    py::register_exception<sc::ScenarioError>(m, "ScenarioError", PyExc_RuntimeError);

    m.def(
        "ciphertext_length",
        [](std::uint32_t payload, std::uint32_t overhead) { return ibh::wire::ciphertext_length(payload, overhead); },
        py::arg("payload_length"), py::arg("overhead") = 29, "On-wire length of a record carrying the given payload.");

    m.def(
        "mine_patterns",
        [](const std::vector<std::uint32_t>& seq) { return to_py(sn::mine_patterns(seq)); }, py::arg("sequence"),
        "Decompose a metadata-id sequence into (pattern, repetitions) pairs.");

    m.def(
        "merge_candidates",
        [](const std::vector<PyPattern>& patterns) {
            std::vector<sn::Pattern> ps;
            for (const auto& [ids, reps] : patterns)
            {
                ps.push_back({ids, reps});
            }
            std::vector<std::vector<PyPattern>> out;
            for (const auto& lts : sn::merge_candidates(ps))
            {
                out.push_back(to_py(lts.states));
            }
            return out;
        },
        py::arg("patterns"), "Candidate models, fewest states first.");

    m.def(
        "score",
        [](const std::vector<py::dict>& packets, int plc_state, std::int64_t repetition) {
            ibh::CaptureTrace trace;
            for (const auto& d : packets)
            {
                ibh::PacketMeta p;
                p.src = ibh::Ipv4::parse(d["src"].cast<std::string>());
                p.dst = ibh::Ipv4::parse(d["dst"].cast<std::string>());
                p.seq = d["seq"].cast<std::uint64_t>();
                p.truth.critical = d.contains("critical") && d["critical"].cast<bool>();
                p.truth.dropped_by_adversary = d.contains("dropped") && d["dropped"].cast<bool>();
                p.truth.plc_state = d["plc_state"].cast<int>();
                p.truth.repetition = d["repetition"].cast<std::int64_t>();
                trace.packets.push_back(p);
            }
            const auto s = sn::score(trace, plc_state, repetition);
            py::dict out;
            out["recall"] = s.recall;
            out["precision"] = s.precision;
            out["critical_total"] = s.critical_total;
            out["critical_dropped"] = s.critical_dropped;
            out["dropped_total"] = s.dropped_total;
            return out;
        },
        py::arg("packets"), py::arg("plc_state"), py::arg("repetition"),
        "Recall/precision over the unique packets of one repetition. Each packet is a dict with src, dst, seq, "
        "plc_state, repetition and optional critical/dropped flags.");

    m.def("run_scenario", &run, py::arg("scenario"), py::arg("seed") = 1, py::arg("drop_duration_s") = py::none(),
          py::arg("out_dir") = py::none(), py::arg("settings") = std::map<std::string, std::string>{},
          "Run one scenario; returns the report entries and detector rows.");
}
