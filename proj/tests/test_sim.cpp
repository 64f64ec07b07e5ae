#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "vrb/config.hpp"
#include "vrb/sim.hpp"

using namespace vrb;
using vrb::testing::charging_config;
using vrb::testing::discharging_config;
using vrb::testing::swept_box;
using vrb::testing::swept_schedule;
using vrb::testing::with_box;

namespace {

std::string csv_of(const RunResult& run) {
    std::ostringstream os;
    write_csv(os, run.records);
    return os.str();
}

ScenarioConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

Errc parse_error(const std::string& text) {
    try {
        (void)parse(text);
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::NonConvergence;
}

}  // namespace

TEST(InitState, Examples) {
    ScenarioConfig cfg;
    const auto c = init_state(cfg);
    EXPECT_NEAR(c.cell[0], 0.16, 1e-15);
    EXPECT_NEAR(c.cell[3], 0.16, 1e-15);
    EXPECT_NEAR(c.cell[1], 1.44, 1e-15);
    EXPECT_NEAR(c.cell[2], 1.44, 1e-15);
    EXPECT_EQ(c.cell, c.tank);
    cfg.soc0 = 0.9;
    EXPECT_NEAR(init_state(cfg).tank[0], 1.44, 1e-15);
    const auto x = state_from_conc(init_state(cfg));
    EXPECT_EQ(conversion_per_pass(x, Mode::Charging), 0.0);
}

TEST(CurrentProfile, ConstantWithoutFluctuation) {
    ScenarioConfig cfg;
    cfg.k_range = 0.0;
    CurrentProfile prof(cfg, 3);
    for (double t = 0; t < 5000; t += 37.0) EXPECT_EQ(prof.at(t), 20.0);
}

TEST(CurrentProfile, RangeAndPiecewiseConstant) {
    ScenarioConfig cfg;
    cfg.k_range = 0.25;
    CurrentProfile prof(cfg, 11);
    double first = 0.0;
    int changes = 0;
    double prev = prof.at(0.0);
    for (long t = 0; t < 60000; ++t) {
        const double i = prof.at(static_cast<double>(t));
        ASSERT_GE(i, 15.0);
        ASSERT_LE(i, 25.0);
        if (t % 600 == 0) first = i;
        EXPECT_EQ(i, first);
        if (i != prev) ++changes;
        prev = i;
    }
    EXPECT_GT(changes, 90);
}

TEST(CurrentProfile, ClampedToCurrentLimits) {
    ScenarioConfig cfg;
    cfg.I_s = 28.0;
    cfg.k_range = 0.5;
    CurrentProfile prof(cfg, 5);
    for (double t = 0; t < 1e5; t += 600.0) EXPECT_LE(prof.at(t), cfg.plant.I_max);
}

TEST(Sweep, SingleBalancedSampleHasZeroTransportRanges) {
    const PlantParams p;
    const Rho r = rho_from_conc(balanced_at_soc(0.4, p), p, Mode::Charging);
    const auto box = bound_samples({r}, Mode::Charging);
    for (std::size_t i : {0u, 2u, 4u}) {
        EXPECT_EQ(box.min[i], -1e-12);
        EXPECT_EQ(box.max[i], 1e-12);
    }
    EXPECT_THROW((void)bound_samples({}, Mode::Charging), Error);
}

TEST(Sweep, MarginInflatesStrictly) {
    const ScenarioConfig cfg = charging_config();
    SweepOptions tight = cfg.sweep;
    tight.margin = 0.0;
    const auto a = sweep_rho_box(cfg, tight);
    const auto b = sweep_rho_box(cfg, cfg.sweep);
    for (std::size_t i = 0; i < kNumRho; ++i) {
        EXPECT_EQ(a.box.min[i], a.raw.min[i]);
        EXPECT_LT(b.box.min[i], a.box.min[i]);
        EXPECT_GT(b.box.max[i], a.box.max[i]);
    }
}

TEST(Sweep, BoxesAreSignDefinite) {
    for (Mode m : {Mode::Charging, Mode::Discharging}) {
        const auto& box = swept_box(m);
        EXPECT_TRUE(box.sign_definite()) << to_string(m);
        EXPECT_GT(box.min[4], 0.0);
        EXPECT_GT(box.min[3], 0.0);
    }
}

TEST(Sweep, NoModeConsistentCurrentIsEmpty) {
    ScenarioConfig cfg = charging_config();
    SweepOptions opts;
    opts.i_grid = {-10.0, 0.0};
    try {
        (void)sweep_rho_box(cfg, opts);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyGrid);
    }
}

TEST(Sweep, ChargingRunStaysInBoxAfterStartup) {
    const ScenarioConfig cfg = with_box(charging_config());
    const auto run = run_scenario(cfg, swept_schedule(Mode::Charging));
    ASSERT_TRUE(run.reached_target);
    // The balanced start has rho1 = rho3 = rho5 = 0, outside the sign-definite box.
    long after_startup = 0;
    for (const auto& r : run.records)
        if (r.t > 2.0 * cfg.tau && !swept_box(Mode::Charging).contains(Rho{r.rho, Mode::Charging})) ++after_startup;
    EXPECT_EQ(after_startup, 0);
    EXPECT_EQ(run.plant_clamps, 0);
}

TEST(Scenario, DeterministicCsv) {
    for (auto base : {charging_config(), discharging_config()}) {
        ScenarioConfig cfg = with_box(base);
        cfg.noise_sd = 2e-4;
        const auto& gs = swept_schedule(cfg.mode);
        EXPECT_EQ(csv_of(run_scenario(cfg, gs)), csv_of(run_scenario(cfg, gs)));
    }
}

TEST(Scenario, SeedChangesTheRun) {
    ScenarioConfig a = with_box(charging_config());
    ScenarioConfig b = a;
    b.seed = 2;
    const auto& gs = swept_schedule(Mode::Charging);
    EXPECT_NE(csv_of(run_scenario(a, gs)), csv_of(run_scenario(b, gs)));
}

TEST(Scenario, RecordInvariants) {
    for (auto base : {charging_config(), discharging_config()}) {
        const ScenarioConfig cfg = with_box(base);
        const auto run = run_scenario(cfg, swept_schedule(cfg.mode));
        ASSERT_TRUE(run.reached_target);
        double prev_t = -1.0;
        for (const auto& r : run.records) {
            EXPECT_GT(r.t, prev_t);
            prev_t = r.t;
            EXPECT_GE(r.Q, cfg.plant.Q_min);
            EXPECT_LE(r.Q, cfg.plant.Q_max);
            EXPECT_EQ(r.saturated, r.Q_unsat < cfg.plant.Q_min || r.Q_unsat > cfg.plant.Q_max);
        }
        const double final_soc = run.records.back().soc;
        if (cfg.mode == Mode::Charging) EXPECT_GE(final_soc, cfg.soc_target);
        else EXPECT_LE(final_soc, cfg.soc_target);
    }
}

TEST(Scenario, FlowFollowsCurrentMagnitude) {
    int steps = 0;
    for (auto base : {charging_config(), discharging_config()}) {
        ScenarioConfig cfg = with_box(base);
        cfg.k_range = 0.1;
        const auto run = run_scenario(cfg, swept_schedule(cfg.mode));
        const auto& rec = run.records;
        for (std::size_t k = 2; k < rec.size(); ++k) {
            if (rec[k].I == rec[k - 1].I || rec[k].saturated || rec[k - 1].saturated || rec[k - 2].saturated)
                continue;
            ++steps;
            // Response relative to the slow drift of the previous step.
            const double trend = rec[k - 1].Q_unsat - rec[k - 2].Q_unsat;
            const double response = rec[k].Q_unsat - rec[k - 1].Q_unsat - trend;
            EXPECT_GT(response * (std::abs(rec[k].I) - std::abs(rec[k - 1].I)), 0.0) << to_string(cfg.mode) << " t=" << rec[k].t;
        }
    }
    EXPECT_GE(steps, 4);
}

TEST(Supervisor, ShutOffHoldsStackIdle) {
    ScenarioConfig cfg = with_box(charging_config());
    cfg.soc_target = 0.95;
    cfg.k_range = 0.0;
    const auto run = run_scenario(cfg, swept_schedule(Mode::Charging));
    EXPECT_TRUE(run.shutoff);
    EXPECT_FALSE(run.reached_target);
    bool seen = false;
    double max_soc = 0.0;
    for (std::size_t k = 0; k < run.records.size(); ++k) {
        const auto& r = run.records[k];
        max_soc = std::max(max_soc, r.soc);
        if (r.shutoff) {
            if (!seen) {
                // One controller period at 25 A moves SOC by well under 1e-3.
                EXPECT_GE(r.soc, 0.9);
                EXPECT_LE(r.soc, 0.9 + 1e-3);
            }
            seen = true;
            EXPECT_EQ(r.Q, cfg.plant.Q_min);
            EXPECT_EQ(r.I, 0.0);
        } else {
            EXPECT_FALSE(seen);
            EXPECT_LT(r.soc, 0.9);
        }
    }
    EXPECT_TRUE(seen);
    // Idle pumping only mixes the converted cell volume back into the tank.
    EXPECT_LE(max_soc, 0.92);
}

TEST(Supervisor, DischargingShutOff) {
    ScenarioConfig cfg = with_box(discharging_config());
    cfg.soc_target = 0.05;
    const auto run = run_scenario(cfg, swept_schedule(Mode::Discharging));
    EXPECT_TRUE(run.shutoff);
    double min_soc = 1.0;
    for (const auto& r : run.records) {
        min_soc = std::min(min_soc, r.soc);
        if (r.shutoff) {
            EXPECT_LE(r.soc, 0.1);
            EXPECT_GE(r.soc, 0.1 - 1e-3);
            break;
        }
    }
    EXPECT_GE(min_soc, 0.1 - 1e-3);
}

TEST(Supervisor, ChargeBookkeepingWithDiffusion) {
    const PlantParams p;
    Concentrations c = balanced_at_soc(0.10, p);
    auto moles2 = [&](const Concentrations& s) { return p.cell_volume() * s.cell[0] + p.V_t * s.tank[0]; };
    const double n0 = moles2(c);
    double t = 0.0;
    while (soc_from_x1(state_from_conc(c).x1) < 0.85) {
        c = integrate_step(c, 0.02, 20.0, p, 1.0).conc;
        t += 1.0;
    }
    const double delivered = p.M_cells * 20.0 * t / (p.n_electrons * p.F);
    // Crossover consumes a few percent of the charge as self-discharge.
    EXPECT_LT(moles2(c) - n0, delivered);
    EXPECT_GT(moles2(c) - n0, 0.95 * delivered);
}

TEST(Scenario, LiteralFeedbackDoesNotTrackWhileCharging) {
    ScenarioConfig cfg = with_box(charging_config());
    cfg.k_range = 0.0;
    cfg.measurement = Measurement::Ideal;
    cfg.paper_literal_feedback = true;
    const auto run = run_scenario(cfg, swept_schedule(Mode::Charging));
    long near = 0;
    for (const auto& r : run.records)
        if (std::abs(r.X - cfg.X_s) <= 1e-3) ++near;
    EXPECT_LT(near, static_cast<long>(run.records.size()) / 20);
}

TEST(Scenario, OnlineControllerRuns) {
    ScenarioConfig cfg = with_box(charging_config());
    cfg.controller = ControllerKind::OnlineLqr;
    const auto run = run_scenario(cfg, swept_schedule(Mode::Charging));
    EXPECT_TRUE(run.reached_target);
    EXPECT_EQ(run.dare_failures, 0);
}

TEST(Scenario, ModeMismatchIsRejected) {
    const ScenarioConfig cfg = with_box(discharging_config());
    EXPECT_THROW((void)run_scenario(cfg, swept_schedule(Mode::Charging)), ConfigError);
}

TEST(Csv, HeaderAndFormat) {
    SimRecord r;
    r.t = 1.0;
    r.soc = 0.123456789123;
    r.X = 1.0 / 3.0;
    r.saturated = true;
    r.clamp_count = 4;
    r.rho = {1e-5, -2.5, 3.0, 4.0, 5.0};
    std::ostringstream os;
    write_csv(os, {r});
    const std::string out = os.str();
    EXPECT_EQ(out.substr(0, out.find('\n')), kCsvHeader);
    EXPECT_EQ(out.find('\r'), std::string::npos);
    const std::string row = out.substr(out.find('\n') + 1);
    EXPECT_EQ(row, "1,0.123456789,0.333333333,0,0,0,0,0,0,0,0,0,1,4,1e-05,-2.5,3,4,5\n");
}

TEST(Config, ParsesAllSections) {
    const auto cfg = parse(R"(
[plant]
V_t = 4.0
c_min = 0.2

[pump]
m_p = 2.0

[controller]
controller = online_lqr
Q_s = 2, 3, 4
R_s = 100
Q_s_3 = 1, 1, 1
R_s_32 = 5
dare_tol = 1e-10
dare_max_iter = 50
paper_literal_rho1 = true
paper_literal_ustar = false
paper_literal_feedback = true

[scenario]
mode = discharging
soc0 = 0.8
soc_target = 0.2
X_s = 0.1
I_s = -15
k_range = 0.5
dwell = 300
tau = 2
seed = 18446744073709551615
measurement = ideal
noise_sd = 0.001
max_duration = 5000
shutoff_hold = 100
max_substep = 0.05
sweep_margin = 0.2
sweep_transient = 120
)");
    EXPECT_EQ(cfg.plant.V_t, 4.0);
    EXPECT_EQ(cfg.plant.c_min, 0.2);
    EXPECT_EQ(cfg.pump.m_p, 2.0);
    EXPECT_EQ(cfg.controller, ControllerKind::OnlineLqr);
    EXPECT_EQ(cfg.synthesis.Q, (Matrix<3, 3>::diagonal({2.0, 3.0, 4.0})));
    EXPECT_EQ(cfg.synthesis.R, 100.0);
    EXPECT_EQ(cfg.synthesis.Q_override.at(3), (Matrix<3, 3>::identity()));
    EXPECT_EQ(cfg.synthesis.R_override.at(32), 5.0);
    EXPECT_EQ(cfg.synthesis.dare.tol, 1e-10);
    EXPECT_EQ(cfg.synthesis.dare.max_iter, 50);
    EXPECT_TRUE(cfg.paper_literal_rho1);
    EXPECT_FALSE(cfg.paper_literal_ustar);
    EXPECT_TRUE(cfg.paper_literal_feedback);
    EXPECT_EQ(cfg.mode, Mode::Discharging);
    EXPECT_EQ(cfg.soc0, 0.8);
    EXPECT_EQ(cfg.I_s, -15.0);
    EXPECT_EQ(cfg.seed, 18446744073709551615ULL);
    EXPECT_EQ(cfg.measurement, Measurement::Ideal);
    EXPECT_EQ(cfg.tau, 2.0);
    EXPECT_EQ(cfg.sweep.margin, 0.2);
    EXPECT_EQ(cfg.sweep.transient, 120.0);
    EXPECT_FALSE(cfg.rho_box.has_value());
}

TEST(Config, Errors) {
    EXPECT_EQ(parse_error("[scenario]\nbogus = 1\n"), Errc::Config);
    EXPECT_EQ(parse_error("[nowhere]\na = 1\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario]\ntau = 1\ntau = 2\n"), Errc::Config);
    EXPECT_EQ(parse_error("tau = 1\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario]\ntau = fast\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario]\ntau = -1\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario]\nmode = sideways\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario]\nX_s = 1.5\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario]\nseed = -3\n"), Errc::Config);
    EXPECT_EQ(parse_error("[controller]\nQ_s = 1, 2\n"), Errc::Config);
    EXPECT_EQ(parse_error("[controller]\nQ_s_33 = 1, 1, 1\n"), Errc::Config);
    EXPECT_EQ(parse_error("[controller]\nR_s_4 = 0\n"), Errc::Config);
    EXPECT_EQ(parse_error("[controller]\npaper_literal_rho1 = yes\n"), Errc::Config);
    EXPECT_EQ(parse_error("[rho_box]\nrho1_min = 1\n"), Errc::Config);
    EXPECT_EQ(parse_error("[plant]\nc_max = 3\n"), Errc::Config);
    EXPECT_EQ(parse_error("[scenario\n"), Errc::Config);
    EXPECT_THROW((void)load_config("/nonexistent/file.ini"), ConfigError);
}

TEST(Config, RhoBoxRoundTrip) {
    const RhoBox& box = swept_box(Mode::Discharging);
    const auto cfg = parse("[scenario]\nmode = discharging\nsoc0 = 0.9\nsoc_target = 0.1\nX_s = 0.1\nI_s = -20\n" +
                           format_rho_box(box));
    ASSERT_TRUE(cfg.rho_box.has_value());
    EXPECT_EQ(cfg.rho_box->min.v, box.min.v);
    EXPECT_EQ(cfg.rho_box->max.v, box.max.v);
    EXPECT_EQ(cfg.rho_box->mode(), Mode::Discharging);
}

TEST(Config, ShippedConfigsLoad) {
    const auto c = load_config(std::string(VRB_CONFIG_DIR) + "/charging.ini");
    EXPECT_EQ(c.mode, Mode::Charging);
    EXPECT_EQ(c.X_s, 0.14);
    const auto d = load_config(std::string(VRB_CONFIG_DIR) + "/discharging.ini");
    EXPECT_EQ(d.mode, Mode::Discharging);
    EXPECT_EQ(d.I_s, -20.0);
}
