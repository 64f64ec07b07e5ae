// vrbctl: simulate scenarios, print gain tables, check stability, calibrate rho boxes.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "vrb/analysis.hpp"
#include "vrb/config.hpp"
#include "vrb/controller.hpp"
#include "vrb/log.hpp"
#include "vrb/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSynthesis = 3;

vrb::GainSchedule schedule_for(const vrb::ScenarioConfig& cfg) {
    return vrb::synthesize(vrb::resolve_box(cfg), cfg.tau, cfg.synthesis);
}

int cmd_simulate(const std::string& config, const std::string& out_path) {
    const auto cfg = vrb::load_config(config);
    const auto gs = schedule_for(cfg);
    const auto run = vrb::run_scenario(cfg, gs);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw vrb::ConfigError("cannot write " + out_path);
    vrb::write_csv(out, run.records);
    vrb::logger().info("{} records, target {}, rho clamps {}, plant clamps {}", run.records.size(),
                       run.reached_target ? "reached" : "not reached", run.rho_clamps, run.plant_clamps);
    return kExitOk;
}

int cmd_gains(const std::string& config) {
    const auto cfg = vrb::load_config(config);
    std::cout << vrb::format_gain_table(schedule_for(cfg));
    return kExitOk;
}

void print_matrix(const char* name, const vrb::Matrix<3, 3>& m) {
    fmt::print("{} =\n", name);
    for (std::size_t r = 0; r < 3; ++r) fmt::print("  {:>16.9g} {:>16.9g} {:>16.9g}\n", m(r, 0), m(r, 1), m(r, 2));
}

int cmd_analyze(const std::string& config) {
    const auto cfg = vrb::load_config(config);
    const auto gs = schedule_for(cfg);

    // Controllability along the scenario's own rho trajectory.
    const auto run = vrb::run_scenario(cfg, gs);
    long pairs = 0, full_rank = 0;
    for (std::size_t k = 1; k < run.records.size(); ++k) {
        if (run.records[k].shutoff || run.records[k - 1].shutoff) continue;
        vrb::Rho r0, r1;
        r0.v = run.records[k - 1].rho;
        r1.v = run.records[k].rho;
        ++pairs;
        if (vrb::controllability_check(r0, r1, cfg.tau) == 2) ++full_rank;
    }
    fmt::print("controllability: {}/{} consecutive rho pairs with rank 2 ({})\n", full_rank, pairs,
               full_rank == pairs ? "controllable" : "rank deficient along trajectory");

    double worst = 0.0;
    for (double r : gs.spectral_radius) worst = std::max(worst, r);
    fmt::print("vertex closed loops: 32 Schur, max spectral radius {:.12g}\n", worst);

    const double w_bar = std::abs(cfg.I_s) * (1.0 + cfg.k_range);
    const auto cert = vrb::certify(gs, w_bar, cfg.X_s, cfg.paper_literal_feedback);
    fmt::print("transform: {} (condition {:.3g})\n", cert.transform.degenerate ? "identity fallback" : "eigenbasis",
               cert.transform.condition);
    print_matrix("V", cert.transform.V);
    print_matrix("Lambda", cert.lambda.Lambda);
    fmt::print("Perron root: {:.9g}\n", cert.lambda.perron);
    fmt::print("max pair spectral radius: {:.9g} (vertex {}, gain {})\n", cert.lambda.max_pair_radius,
               cert.lambda.worst_j, cert.lambda.worst_l);
    if (cert.zeta_bar) {
        const auto& z = *cert.zeta_bar;
        fmt::print("zeta_bar = ({:.9g}, {:.9g}, {:.9g}) for w_bar={:.6g}, r_bar={:.6g}\n", z(0, 0), z(1, 0), z(2, 0),
                   w_bar, cfg.X_s);
        fmt::print("schur: yes\n");
        return kExitOk;
    }
    fmt::print("schur: no, ultimate bound undefined\n");
    return kExitSynthesis;
}

int cmd_sweep(const std::string& config, const std::string& out_path) {
    const auto cfg = vrb::load_config(config);
    const auto sweep = vrb::sweep_rho_box(cfg, cfg.sweep);
    vrb::logger().info("{} rho samples", sweep.samples);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw vrb::ConfigError("cannot write " + out_path);
    out << vrb::format_rho_box(sweep.box);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vanadium flow battery LPV flow-rate control toolkit"};
    app.require_subcommand(1);
    std::string config, out;

    auto* sim = app.add_subcommand("simulate", "Run a closed-loop scenario and write the CSV log");
    sim->add_option("--config", config, "Scenario config file")->required();
    sim->add_option("--out", out, "CSV output path")->required();

    auto* gains = app.add_subcommand("gains", "Print the 32 vertex gains");
    gains->add_option("--config", config, "Scenario config file")->required();

    auto* analyze = app.add_subcommand("analyze", "Controllability and Lambda/ultimate-bound check");
    analyze->add_option("--config", config, "Scenario config file")->required();

    auto* sweep = app.add_subcommand("sweep-bounds", "Calibrate the rho box and write it as [rho_box]");
    sweep->add_option("--config", config, "Scenario config file")->required();
    sweep->add_option("--out", out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*sim) return cmd_simulate(config, out);
        if (*gains) return cmd_gains(config);
        if (*analyze) return cmd_analyze(config);
        if (*sweep) return cmd_sweep(config, out);
    } catch (const vrb::ConfigError& e) {
        vrb::logger().error("{}", e.what());
        return kExitConfig;
    } catch (const vrb::Error& e) {
        vrb::logger().error("{}", e.what());
        return kExitSynthesis;
    }
    return kExitOk;
}
