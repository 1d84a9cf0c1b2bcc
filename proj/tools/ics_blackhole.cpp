// Scenario runner: ics-blackhole --scenario profile --out runs/profile
#include "ibh/scenario.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>
#include <string>

namespace sc = ibh::scenario;

int main(int argc, char** argv)
{
    CLI::App app{"Targeted packet-drop attack emulation on a simulated water-treatment plant"};
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string scenario;
    std::optional<double> drop_s;
    std::string out;
    bool ground_truth = false;
    bool print_config = false;
    app.add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "RNG seed");
    app.add_option("--scenario", scenario, "baseline | profile | process-delay | tank-overflow | detector-sweep");
    app.add_option("--drop-duration-s", drop_s, "adversary drop duration for attack scenarios");
    app.add_option("--out", out, "output directory");
    app.add_flag("--emit-ground-truth", ground_truth, "add critical/dropped columns to trace.csv");
    app.add_flag("--print-config", print_config, "print the effective config and exit");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        if (e.get_exit_code() == 0)
        {
            return app.exit(e);
        }
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try
    {
        sc::ScenarioConfig cfg;
        if (!config_path.empty())
        {
            sc::apply_config_file(cfg, config_path);
        }
        if (seed)
        {
            cfg.seed = *seed;
        }
        if (!scenario.empty())
        {
            cfg.kind = sc::parse_kind(scenario);
        }
        if (drop_s)
        {
            sc::apply_setting(cfg, "drop_duration_s", std::to_string(*drop_s));
        }
        if (!out.empty())
        {
            cfg.out_dir = out;
        }
        if (ground_truth)
        {
            cfg.emit_ground_truth = true;
        }
        if (print_config)
        {
            std::cout << sc::canonical_text(cfg);
            return 0;
        }
        const auto outcome = sc::run_scenario(cfg);
        sc::emit_report(cfg, outcome);
        for (const auto& [k, v] : outcome.report.entries)
        {
            std::cout << k << " = " << v << '\n';
        }
        return 0;
    }
    catch (const sc::ScenarioError& e)
    {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 1;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 3;
    }
}
