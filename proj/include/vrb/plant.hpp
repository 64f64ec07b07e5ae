#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "vrb/error.hpp"
#include "vrb/prng.hpp"

namespace vrb {

/// Pilot-stack constants. Lengths in dm, so volumes come out in litres.
struct PlantParams {
    double L_pe = 3.0;
    double W_pe = 0.03;
    double H_pe = 2.0;
    double k2_d = 3.17e-7;
    double k3_d = 7.16e-8;
    double k4_d = 2.0e-7;
    double k5_d = 1.25e-7;
    double n_electrons = 1.0;
    double F = 96485.0;
    double c_bar = 1.6;
    double c_min = 0.16;
    double c_max = 1.44;
    double M_cells = 9.0;
    double E0_formal = 1.4;
    double R_gas = 8.314;
    double V_t = 3.88;
    double I_min = -30.0;
    double I_max = 30.0;
    double Q_min = 0.013;
    double Q_max = 0.0286;
    double T = 293.15;

    [[nodiscard]] double cell_volume() const { return M_cells * L_pe * W_pe * H_pe; }
    /// n L W H F: converts stack current to a concentration rate in one cell.
    [[nodiscard]] double charge_scale() const { return n_electrons * L_pe * W_pe * H_pe * F; }
    /// RT/(nF).
    [[nodiscard]] double thermal_voltage() const { return R_gas * T / (n_electrons * F); }
};

inline void validate(const PlantParams& p) {
    const std::array<std::pair<const char*, double>, 13> positive{{{"L_pe", p.L_pe},
                                                                    {"W_pe", p.W_pe},
                                                                    {"H_pe", p.H_pe},
                                                                    {"n_electrons", p.n_electrons},
                                                                    {"F", p.F},
                                                                    {"c_bar", p.c_bar},
                                                                    {"c_min", p.c_min},
                                                                    {"M_cells", p.M_cells},
                                                                    {"E0_formal", p.E0_formal},
                                                                    {"R_gas", p.R_gas},
                                                                    {"V_t", p.V_t},
                                                                    {"Q_min", p.Q_min},
                                                                    {"T", p.T}}};
    for (const auto& [name, v] : positive)
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("plant.") + name + " must be > 0");
    for (double k : {p.k2_d, p.k3_d, p.k4_d, p.k5_d})
        if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("plant diffusivities must be >= 0");
    if (!(p.c_min < p.c_max && p.c_max <= p.c_bar)) throw ConfigError("need c_min < c_max <= c_bar");
    if (!(p.Q_min < p.Q_max)) throw ConfigError("need Q_min < Q_max");
    if (!(p.I_min < 0.0 && 0.0 < p.I_max)) throw ConfigError("need I_min < 0 < I_max");
}

/// Species index 0..3 stands for V2+, V3+, V4+ (VO2+), V5+ (VO2+).
struct Concentrations {
    std::array<double, 4> cell{};
    std::array<double, 4> tank{};

    friend bool operator==(const Concentrations&, const Concentrations&) = default;
};

inline Concentrations operator+(const Concentrations& a, const Concentrations& b) {
    Concentrations out;
    for (int i = 0; i < 4; ++i) {
        out.cell[i] = a.cell[i] + b.cell[i];
        out.tank[i] = a.tank[i] + b.tank[i];
    }
    return out;
}

inline Concentrations operator*(double s, const Concentrations& a) {
    Concentrations out;
    for (int i = 0; i < 4; ++i) {
        out.cell[i] = s * a.cell[i];
        out.tank[i] = s * a.tank[i];
    }
    return out;
}

inline double max_abs_diff(const Concentrations& a, const Concentrations& b) {
    double d = 0.0;
    for (int i = 0; i < 4; ++i) {
        d = std::max(d, std::abs(a.cell[i] - b.cell[i]));
        d = std::max(d, std::abs(a.tank[i] - b.tank[i]));
    }
    return d;
}

/// Balanced electrolyte at a given SOC, cell equal to tank.
inline Concentrations balanced_at_soc(double soc, const PlantParams& p) {
    const double hi = p.c_bar * soc;
    const double lo = p.c_bar * (1.0 - soc);
    Concentrations c;
    c.cell = {hi, lo, lo, hi};
    c.tank = c.cell;
    return c;
}

/// Right-hand side of the 8 concentration ODEs: cross-membrane diffusion,
/// cell/tank transport at flow Q, and the Faradaic current term.
inline Concentrations derivatives(const Concentrations& c, double Q, double I, const PlantParams& p) {
    const auto& [cc2, cc3, cc4, cc5] = c.cell;
    const double k2 = p.k2_d, k3 = p.k3_d, k4 = p.k4_d, k5 = p.k5_d;
    const double transport = Q / p.cell_volume();
    const double faradaic = I / p.charge_scale();
    const double w = p.W_pe;

    Concentrations d;
    d.cell[0] = -(k2 * cc2 + k4 * cc4 + 2.0 * k5 * cc5) / w + transport * (c.tank[0] - cc2) + faradaic;
    d.cell[1] = -(k3 * cc3 - 2.0 * k4 * cc4 - 3.0 * k5 * cc5) / w + transport * (c.tank[1] - cc3) - faradaic;
    d.cell[2] = -(-3.0 * k2 * cc2 - 2.0 * k3 * cc3 + k4 * cc4) / w + transport * (c.tank[2] - cc4) - faradaic;
    d.cell[3] = -(2.0 * k2 * cc2 + k3 * cc3 + k5 * cc5) / w + transport * (c.tank[3] - cc5) + faradaic;
    for (int i = 0; i < 4; ++i) d.tank[i] = (c.cell[i] - c.tank[i]) * Q / p.V_t;
    return d;
}

struct StepResult {
    Concentrations conc;
    /// Entries that had to be clamped back into [0, c_bar] by more than 1e-9.
    int clamp_events = 0;
};

namespace detail {
inline void require_finite(const Concentrations& c) {
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(c.cell[i]) || !std::isfinite(c.tank[i]))
            throw Error(Errc::NonFinite, "non-finite concentration during integration");
}
}  // namespace detail

/// Classical RK4 over `duration` with (Q, I) held, then clamped to [0, c_bar].
inline StepResult integrate_step(const Concentrations& c0, double Q, double I, const PlantParams& p, double duration,
                                 double max_substep = 0.1) {
    const auto steps = static_cast<long>(std::ceil(duration / max_substep));
    const double h = duration / static_cast<double>(std::max(steps, 1L));
    Concentrations c = c0;
    for (long s = 0; s < std::max(steps, 1L); ++s) {
        const auto k1 = derivatives(c, Q, I, p);
        const auto k2 = derivatives(c + (h / 2.0) * k1, Q, I, p);
        const auto k3 = derivatives(c + (h / 2.0) * k2, Q, I, p);
        const auto k4 = derivatives(c + h * k3, Q, I, p);
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        detail::require_finite(c);
    }
    StepResult out{c, 0};
    auto clamp = [&](double& v) {
        const double clamped = std::clamp(v, 0.0, p.c_bar);
        if (std::abs(clamped - v) > 1e-9) ++out.clamp_events;
        v = clamped;
    };
    for (int i = 0; i < 4; ++i) {
        clamp(out.conc.cell[i]);
        clamp(out.conc.tank[i]);
    }
    return out;
}

struct OcvPair {
    double E_in = 0.0;   ///< stack inlet, tank electrolyte
    double E_out = 0.0;  ///< stack outlet, cell electrolyte
};

inline OcvPair measure_ocv(const Concentrations& c, const PlantParams& p) {
    for (int i = 0; i < 4; ++i)
        if (!(c.cell[i] > 0.0) || !(c.tank[i] > 0.0))
            throw Error(Errc::NonPositiveConcentration, "OCV needs positive concentrations");
    const double vt = p.thermal_voltage();
    return {p.E0_formal + vt * std::log(c.tank[0] * c.tank[3] / (c.tank[1] * c.tank[2])),
            p.E0_formal + vt * std::log(c.cell[0] * c.cell[3] / (c.cell[1] * c.cell[2]))};
}

/// Additive Gaussian sensor noise. The stream is only consumed when noise_sd > 0.
inline OcvPair measure_ocv(const Concentrations& c, const PlantParams& p, double noise_sd, Prng& rng) {
    OcvPair e = measure_ocv(c, p);
    if (noise_sd > 0.0) {
        e.E_in += noise_sd * rng.next_gaussian();
        e.E_out += noise_sd * rng.next_gaussian();
    }
    return e;
}

struct PumpModel {
    double m_p = 1.838;
    double b_p = 1.743;
    double Vp_min = 3.176;
    double Vp_max = 4.892;
};

struct PumpReading {
    double value = 0.0;
    bool clamped = false;
};

/// V_p = m_p Q + b_p, clamped to the drive range. Reporting only.
inline PumpReading pump_voltage(double Q, const PumpModel& pm) {
    const double v = pm.m_p * Q + pm.b_p;
    const double c = std::clamp(v, pm.Vp_min, pm.Vp_max);
    return {c, c != v};
}

inline double flow_from_voltage(double Vp, const PumpModel& pm) { return (Vp - pm.b_p) / pm.m_p; }

}  // namespace vrb
