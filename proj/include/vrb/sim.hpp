#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "vrb/controller.hpp"
#include "vrb/error.hpp"
#include "vrb/log.hpp"
#include "vrb/lpv.hpp"
#include "vrb/plant.hpp"
#include "vrb/prng.hpp"

namespace vrb {

enum class Measurement { Ideal, BalancedOcv };
enum class ControllerKind { ConvexCombination, OnlineLqr };

struct SweepOptions {
    std::vector<double> soc_grid;  ///< empty: 0.05, 0.10, ..., 0.95
    std::vector<double> q_grid;    ///< empty: {Q_min, Q_max}
    std::vector<double> i_grid;    ///< empty: {I_min, 0, I_max}
    double margin = 0.1;
    double transient = 600.0;  ///< seconds simulated from each balanced grid point
};

struct ScenarioConfig {
    Mode mode = Mode::Charging;
    double soc0 = 0.1;
    double soc_target = 0.85;
    double X_s = 0.14;
    double I_s = 20.0;
    double k_range = 0.25;
    double dwell = 600.0;
    double tau = 1.0;
    std::uint64_t seed = 1;
    Measurement measurement = Measurement::BalancedOcv;
    ControllerKind controller = ControllerKind::ConvexCombination;
    double noise_sd = 0.0;
    std::optional<RhoBox> rho_box;
    PlantParams plant;
    PumpModel pump;
    bool paper_literal_rho1 = false;
    bool paper_literal_ustar = false;
    bool paper_literal_feedback = false;
    double max_duration = 10000.0;
    double shutoff_hold = 600.0;
    double max_substep = 0.1;
    SynthesisOptions synthesis;
    SweepOptions sweep;
};

inline void validate(const ScenarioConfig& cfg) {
    validate(cfg.plant);
    auto frac = [](double v) { return v > 0.0 && v < 1.0; };
    if (!frac(cfg.soc0)) throw ConfigError("soc0 must be in (0, 1)");
    if (!frac(cfg.soc_target)) throw ConfigError("soc_target must be in (0, 1)");
    if (!frac(cfg.X_s)) throw ConfigError("X_s must be in (0, 1)");
    if (!(cfg.dwell > 0.0)) throw ConfigError("dwell must be > 0");
    if (!(cfg.tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(cfg.k_range >= 0.0)) throw ConfigError("k_range must be >= 0");
    if (!(cfg.noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
    if (!(cfg.max_duration > 0.0)) throw ConfigError("max_duration must be > 0");
    if (!(cfg.shutoff_hold >= 0.0)) throw ConfigError("shutoff_hold must be >= 0");
    if (!(cfg.max_substep > 0.0)) throw ConfigError("max_substep must be > 0");
    if (!(cfg.synthesis.R > 0.0)) throw ConfigError("R_s must be > 0");
    if (!(cfg.pump.m_p > 0.0) || !(cfg.pump.Vp_min < cfg.pump.Vp_max)) throw ConfigError("invalid pump model");
    if (!(cfg.sweep.margin >= 0.0) || !(cfg.sweep.transient > 0.0)) throw ConfigError("invalid sweep settings");
    if (cfg.rho_box) {
        for (std::size_t i = 0; i < kNumRho; ++i)
            if (!(cfg.rho_box->min[i] <= cfg.rho_box->max[i]))
                throw ConfigError(fmt::format("rho{}_min > rho{}_max", i + 1, i + 1));
        if (cfg.rho_box->mode() != cfg.mode) throw ConfigError("rho_box mode differs from scenario mode");
    }
}

inline Concentrations init_state(const ScenarioConfig& cfg) { return balanced_at_soc(cfg.soc0, cfg.plant); }

/// Piecewise-constant current (1 + k) I_s, k ~ U[-k_range, k_range] redrawn every dwell seconds.
class CurrentProfile {
public:
    CurrentProfile(const ScenarioConfig& cfg, std::uint64_t seed)
        : I_s_(cfg.I_s), k_range_(cfg.k_range), dwell_(cfg.dwell), I_min_(cfg.plant.I_min), I_max_(cfg.plant.I_max),
          rng_(seed) {}

    double at(double t) {
        const auto window = static_cast<long>(std::floor(t / dwell_ + 1e-9));
        while (window_ < window) {
            const double k = rng_.next_uniform(-k_range_, k_range_);
            current_ = std::clamp((1.0 + k) * I_s_, I_min_, I_max_);
            ++window_;
        }
        return current_;
    }

private:
    double I_s_, k_range_, dwell_, I_min_, I_max_;
    Prng rng_;
    long window_ = -1;
    double current_ = 0.0;
};

struct SimRecord {
    double t = 0;
    double soc = 0;
    double X = 0;
    double X_s = 0;
    double Q = 0;
    double Q_unsat = 0;
    double I = 0;
    double E_in = 0;
    double E_out = 0;
    double x1 = 0;
    double x2 = 0;
    double sigma = 0;
    bool saturated = false;
    long clamp_count = 0;
    std::array<double, kNumRho> rho{};
    bool shutoff = false;  ///< not exported; supervisor holding the stack idle
};

struct RunResult {
    std::vector<SimRecord> records;
    long rho_clamps = 0;
    long plant_clamps = 0;
    long rho3_fallbacks = 0;
    long dare_failures = 0;
    bool reached_target = false;
    bool shutoff = false;
    double pumped_volume = 0.0;  ///< sum of Q tau over applied steps [L]
};

/// Box bound of rho3 nearest zero, used when rho3* vanishes (cell = tank).
inline double rho3_nearest_zero(const RhoBox& box) {
    return std::abs(box.min[2]) < std::abs(box.max[2]) ? box.min[2] : box.max[2];
}

/// Closed-loop run with a given gain schedule.
inline RunResult run_scenario(const ScenarioConfig& cfg, const GainSchedule& gs) {
    validate(cfg);
    if (gs.mode != cfg.mode) throw ConfigError("gain schedule mode differs from scenario mode");
    const PlantParams& p = cfg.plant;
    const bool charging = cfg.mode == Mode::Charging;

    Concentrations c = init_state(cfg);
    CurrentProfile profile(cfg, cfg.seed);
    Prng noise_rng(cfg.seed ^ 0x5DEECE66DULL);
    ControllerState cs{0.0, cfg.mode, false};
    std::optional<OnlineLqr> online;
    if (cfg.controller == ControllerKind::OnlineLqr) online.emplace(gs.box(), cfg.tau, cfg.synthesis);

    ReferenceOptions ropts;
    ropts.literal_ustar = cfg.paper_literal_ustar;
    ropts.literal_rho1 = cfg.paper_literal_rho1;
    const LawOptions law{cfg.paper_literal_feedback};

    RunResult res;
    double shutoff_until = 0.0;
    for (long k = 0;; ++k) {
        const double t = static_cast<double>(k) * cfg.tau;
        if (t > cfg.max_duration + 1e-9) break;

        const OcvPair ocv = measure_ocv(c, p, cfg.noise_sd, noise_rng);
        const LpvState x = cfg.measurement == Measurement::Ideal ? state_from_conc(c) : state_from_ocv(ocv, p);
        const Rho rho = cfg.measurement == Measurement::Ideal
                            ? rho_from_conc(c, p, cfg.mode, cfg.paper_literal_rho1)
                            : rho_from_conc(balanced_conc_from_state(x, p), p, cfg.mode, cfg.paper_literal_rho1);
        const double soc = soc_from_x1(x.x1);
        double I = profile.at(t);

        SimRecord rec;
        rec.t = t;
        rec.soc = soc;
        rec.X = conversion_per_pass(x, cfg.mode);
        rec.X_s = cfg.X_s;
        rec.E_in = ocv.E_in;
        rec.E_out = ocv.E_out;
        rec.x1 = x.x1;
        rec.x2 = x.x2;
        rec.rho = rho.v;

        const bool at_target = charging ? soc >= cfg.soc_target : soc <= cfg.soc_target;
        const bool beyond_limit = charging ? soc >= 0.9 : soc <= 0.1;
        if (!res.shutoff && !at_target && beyond_limit) {
            res.shutoff = true;
            shutoff_until = t + cfg.shutoff_hold;
            logger().info("shut-off at t={} s, SOC={:.4f}", t, soc);
        }

        double Q = 0.0;
        if (res.shutoff) {
            Q = p.Q_min;
            I = 0.0;
            rec.Q_unsat = Q;
            rec.shutoff = true;
        } else {
            ReferencePoint ref;
            try {
                ref = reference(x, cfg.X_s, I, p, cfg.tau, cfg.mode, ropts);
            } catch (const Error& e) {
                if (e.code() != Errc::DegenerateRho) throw;
                ReferenceOptions fallback = ropts;
                fallback.rho3_fallback = rho3_nearest_zero(gs.box());
                ref = reference(x, cfg.X_s, I, p, cfg.tau, cfg.mode, fallback);
                ++res.rho3_fallbacks;
            }
            ControlOutput out;
            if (online) {
                const auto s = online->step(x, rho, I, ref, cs, cfg.X_s, p.Q_min, p.Q_max, law);
                out = s.out;
                if (s.dare_failed) {
                    ++res.dare_failures;
                    logger().warn("online DARE failed at t={} s, previous gain reused", t);
                }
            } else {
                out = control_step(x, rho, I, ref, cs, gs, cfg.X_s, p.Q_min, p.Q_max, law);
            }
            res.rho_clamps += out.rho_clamps;
            cs = out.next;
            Q = out.u;
            rec.Q_unsat = out.u_unsat;
            rec.saturated = cs.saturated;
        }
        rec.Q = Q;
        rec.I = I;
        rec.sigma = cs.sigma;
        rec.clamp_count = res.rho_clamps + res.plant_clamps;
        res.records.push_back(rec);

        if (at_target) {
            res.reached_target = true;
            break;
        }
        if (res.shutoff && t >= shutoff_until - 1e-9) break;

        const StepResult step = integrate_step(c, Q, I, p, cfg.tau, cfg.max_substep);
        c = step.conc;
        res.plant_clamps += step.clamp_events;
        res.pumped_volume += Q * cfg.tau;
    }
    if (res.rho_clamps > 0) logger().info("rho left the box {} times", res.rho_clamps);
    return res;
}

// ---------------------------------------------------------------------------
// rho-box calibration
// ---------------------------------------------------------------------------

/// Componentwise min/max of the samples; zero-width dimensions widened to +-1e-12.
inline RhoBox bound_samples(const std::vector<Rho>& samples, Mode mode) {
    if (samples.empty()) throw Error(Errc::EmptyGrid, "no rho samples");
    RhoBox box;
    box.min = samples.front();
    box.max = samples.front();
    box.min.mode = box.max.mode = mode;
    for (const Rho& r : samples)
        for (std::size_t i = 0; i < kNumRho; ++i) {
            box.min[i] = std::min(box.min[i], r[i]);
            box.max[i] = std::max(box.max[i], r[i]);
        }
    for (std::size_t i = 0; i < kNumRho; ++i)
        if (box.min[i] == box.max[i]) {
            box.min[i] -= 1e-12;
            box.max[i] += 1e-12;
        }
    return box;
}

/// Widens each range by `margin` of its half-width on both sides; a side that
/// would cross zero is instead scaled toward zero by 1/(1+margin).
inline RhoBox inflate_box(const RhoBox& raw, double margin) {
    RhoBox box = raw;
    for (std::size_t i = 0; i < kNumRho; ++i) {
        const double lo = raw.min[i], hi = raw.max[i];
        const double pad = 0.5 * (hi - lo) * margin;
        double a = lo - pad, b = hi + pad;
        if (lo > 0.0 && a <= 0.0) a = lo / (1.0 + margin);
        if (hi < 0.0 && b >= 0.0) b = hi / (1.0 + margin);
        box.min[i] = a;
        box.max[i] = b;
    }
    return box;
}

struct SweepResult {
    RhoBox box;
    RhoBox raw;
    std::size_t samples = 0;
};

/**
 * Samples rho along open-loop transients started from balanced states on the
 * SOC x Q x I grid. Only currents that agree with the mode are used, and only
 * samples with every concentration inside [c_min, c_max] are kept.
 */
inline SweepResult sweep_rho_box(const ScenarioConfig& cfg, const SweepOptions& opts) {
    const PlantParams& p = cfg.plant;
    std::vector<double> socs = opts.soc_grid;
    if (socs.empty())
        for (int k = 1; k <= 19; ++k) socs.push_back(0.05 * k);
    std::vector<double> qs = opts.q_grid.empty() ? std::vector<double>{p.Q_min, p.Q_max} : opts.q_grid;
    std::vector<double> is = opts.i_grid.empty() ? std::vector<double>{p.I_min, 0.0, p.I_max} : opts.i_grid;
    std::erase_if(is, [&](double i) { return cfg.mode == Mode::Charging ? !(i > 0.0) : !(i < 0.0); });
    if (socs.empty() || qs.empty() || is.empty())
        throw Error(Errc::EmptyGrid, "sweep grid has no mode-consistent points");

    auto inside = [&](const Concentrations& c) {
        for (int i = 0; i < 4; ++i)
            for (double v : {c.cell[i], c.tank[i]})
                if (v < p.c_min - 1e-12 || v > p.c_max + 1e-12) return false;
        return true;
    };

    const auto steps = static_cast<long>(std::ceil(opts.transient / cfg.tau));
    std::vector<Rho> samples;
    for (double soc : socs)
        for (double q : qs)
            for (double i : is) {
                Concentrations c = balanced_at_soc(soc, p);
                for (long k = 0; k < steps; ++k) {
                    const StepResult s = integrate_step(c, q, i, p, cfg.tau, cfg.max_substep);
                    if (s.clamp_events > 0) break;
                    c = s.conc;
                    if (inside(c)) samples.push_back(rho_from_conc(c, p, cfg.mode, cfg.paper_literal_rho1));
                }
            }
    SweepResult out;
    out.samples = samples.size();
    out.raw = bound_samples(samples, cfg.mode);
    out.box = inflate_box(out.raw, opts.margin);
    return out;
}

/// The configured box, or the calibrated one when the config has none.
inline RhoBox resolve_box(const ScenarioConfig& cfg) {
    if (cfg.rho_box) return *cfg.rho_box;
    logger().info("no [rho_box] in config, running calibration sweep");
    return sweep_rho_box(cfg, cfg.sweep).box;
}

inline RunResult run_scenario(const ScenarioConfig& cfg) {
    validate(cfg);
    const GainSchedule gs = synthesize(resolve_box(cfg), cfg.tau, cfg.synthesis);
    return run_scenario(cfg, gs);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "t,soc,X,X_s,Q,Q_unsat,I,E_in,E_out,x1,x2,sigma,saturated,clamp_count,rho1,rho2,rho3,rho4,rho5";

inline void write_csv(std::ostream& os, const std::vector<SimRecord>& records) {
    os << kCsvHeader << '\n';
    fmt::memory_buffer buf;
    for (const SimRecord& r : records) {
        buf.clear();
        fmt::format_to(std::back_inserter(buf), "{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},",
                       r.t, r.soc, r.X, r.X_s, r.Q, r.Q_unsat, r.I, r.E_in, r.E_out);
        fmt::format_to(std::back_inserter(buf), "{:.9g},{:.9g},{:.9g},{},{}", r.x1, r.x2, r.sigma,
                       r.saturated ? 1 : 0, r.clamp_count);
        for (double v : r.rho) fmt::format_to(std::back_inserter(buf), ",{:.9g}", v);
        buf.push_back('\n');
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
}

}  // namespace vrb
