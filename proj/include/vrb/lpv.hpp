#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vrb/error.hpp"
#include "vrb/numerics.hpp"
#include "vrb/plant.hpp"

namespace vrb {

enum class Mode { Charging, Discharging };

inline const char* to_string(Mode m) { return m == Mode::Charging ? "charging" : "discharging"; }

/// x1 from tank (stack inlet) concentrations, x2 from cell (stack outlet).
struct LpvState {
    double x1 = 1.0;
    double x2 = 1.0;
};

inline constexpr std::size_t kNumRho = 5;
inline constexpr std::size_t kNumVertices = std::size_t{1} << kNumRho;

struct Rho {
    std::array<double, kNumRho> v{};
    Mode mode = Mode::Charging;

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

struct RhoBox {
    Rho min;
    Rho max;

    [[nodiscard]] Mode mode() const { return min.mode; }

    [[nodiscard]] bool contains(const Rho& r) const {
        for (std::size_t i = 0; i < kNumRho; ++i)
            if (r[i] < min[i] || r[i] > max[i]) return false;
        return true;
    }

    [[nodiscard]] Rho center() const {
        Rho c;
        c.mode = mode();
        for (std::size_t i = 0; i < kNumRho; ++i) c[i] = 0.5 * (min[i] + max[i]);
        return c;
    }

    /// rho1..rho3 ranges exclude zero.
    [[nodiscard]] bool sign_definite() const {
        for (std::size_t i = 0; i < 3; ++i)
            if (!(min[i] > 0.0 || max[i] < 0.0)) return false;
        return true;
    }
};

struct ScheduledMatrices {
    Matrix<2, 2> A;
    Matrix<2, 1> B;
    Matrix<2, 1> E;
    Matrix<1, 2> C;
    double tau = 1.0;
};

struct Polytope {
    std::array<Rho, kNumVertices> vertices;
    RhoBox box;
};

inline LpvState state_from_conc(const Concentrations& c) {
    for (int i = 0; i < 4; ++i)
        if (!(c.cell[i] > 0.0) || !(c.tank[i] > 0.0))
            throw Error(Errc::NonPositiveConcentration, "state needs positive concentrations");
    return {c.tank[0] * c.tank[3] / (c.tank[1] * c.tank[2]), c.cell[0] * c.cell[3] / (c.cell[1] * c.cell[2])};
}

inline LpvState state_from_ocv(const OcvPair& e, const PlantParams& p) {
    const double a1 = (e.E_in - p.E0_formal) / p.thermal_voltage();
    const double a2 = (e.E_out - p.E0_formal) / p.thermal_voltage();
    if (!(std::abs(a1) <= 700.0) || !(std::abs(a2) <= 700.0))
        throw Error(Errc::Overflow, "OCV exponent out of range, sensor fault?");
    return {std::exp(a1), std::exp(a2)};
}

/// c2 = c5 of a balanced electrolyte with ratio x = c2 c5 / (c3 c4).
inline double balanced_c2(double x, double c_bar) {
    if (std::abs(x - 1.0) < 1e-9) return 0.5 * c_bar;
    return c_bar * (std::sqrt(x) - x) / (1.0 - x);
}

inline Concentrations balanced_conc_from_state(const LpvState& x, const PlantParams& p) {
    if (!(x.x1 > 0.0) || !(x.x2 > 0.0) || !std::isfinite(x.x1) || !std::isfinite(x.x2))
        throw Error(Errc::NonPositiveState, "balanced reconstruction needs x1, x2 > 0");
    const double t2 = balanced_c2(x.x1, p.c_bar);
    const double c2 = balanced_c2(x.x2, p.c_bar);
    Concentrations c;
    c.tank = {t2, p.c_bar - t2, p.c_bar - t2, t2};
    c.cell = {c2, p.c_bar - c2, p.c_bar - c2, c2};
    return c;
}

inline double soc_from_x1(double x1) {
    const double s = std::sqrt(x1);
    return s / (1.0 + s);
}

inline double conversion_per_pass(const LpvState& x, Mode mode) {
    const double s1 = std::sqrt(x.x1);
    const double s2 = std::sqrt(x.x2);
    if (mode == Mode::Charging) return 1.0 - (1.0 + s1) / (1.0 + s2);
    return (1.0 - std::sqrt(x.x2 / x.x1)) / (1.0 + s2);
}

/// Output gain: y = rho5 * x1 reproduces the conversion per pass.
inline double rho5_from_state(const LpvState& x, Mode mode) {
    const double s2 = std::sqrt(x.x2);
    if (mode == Mode::Charging) return (s2 - std::sqrt(x.x1)) / (x.x1 * (1.0 + s2));
    return (1.0 - std::sqrt(x.x2 / x.x1)) / (x.x1 * (1.0 + s2));
}

/**
 * Varying parameters of the LPV embedding, such that
 *   dx1/dt = rho1 Q
 *   dx2/dt = rho2 x2 + rho3 Q + rho4 I
 *   X      = rho5 x1
 * With literal_rho1 the last rho1 term uses c_t2/(c_c3 c_c4) instead of the
 * derivative-consistent c_t2/(c_t3 c_t4).
 */
inline Rho rho_from_conc(const Concentrations& c, const PlantParams& p, Mode mode, bool literal_rho1 = false) {
    const LpvState x = state_from_conc(c);
    const auto& [cc2, cc3, cc4, cc5] = c.cell;
    const auto& [ct2, ct3, ct4, ct5] = c.tank;
    const double k2 = p.k2_d, k3 = p.k3_d, k4 = p.k4_d, k5 = p.k5_d;

    Rho r;
    r.mode = mode;
    const double last1 = literal_rho1 ? ct2 / (cc3 * cc4) : ct2 / (ct3 * ct4);
    r[0] = (ct5 / (ct3 * ct4) * (cc2 - ct2) - ct2 * ct5 / (ct3 * ct3 * ct4) * (cc3 - ct3) -
            ct2 * ct5 / (ct3 * ct4 * ct4) * (cc4 - ct4) + last1 * (cc5 - ct5)) /
           p.V_t;
    r[1] = -((k2 + k4 * cc4 / cc2 + 2.0 * k5 * cc5 / cc2) - (k3 - 2.0 * k4 * cc4 / cc3 - 3.0 * k5 * cc5 / cc3) -
             (-3.0 * k2 * cc2 / cc4 - 2.0 * k3 * cc3 / cc4 + k4) + (2.0 * k2 * cc2 / cc5 + k3 * cc3 / cc5 + k5)) /
           p.W_pe;
    r[2] = (cc5 / (cc3 * cc4) * (ct2 - cc2) - cc2 * cc5 / (cc3 * cc3 * cc4) * (ct3 - cc3) -
            cc2 * cc5 / (cc3 * cc4 * cc4) * (ct4 - cc4) + cc2 / (cc3 * cc4) * (ct5 - cc5)) /
           p.cell_volume();
    r[3] = (cc5 / (cc3 * cc4) + cc2 * cc5 / (cc3 * cc3 * cc4) + cc2 * cc5 / (cc3 * cc4 * cc4) + cc2 / (cc3 * cc4)) /
           p.charge_scale();
    r[4] = rho5_from_state(x, mode);
    return r;
}

inline ScheduledMatrices scheduled_matrices(const Rho& r, double tau) {
    ScheduledMatrices sm;
    sm.tau = tau;
    sm.A = {{1.0, 0.0}, {0.0, 1.0 + tau * r[1]}};
    sm.B = {{tau * r[0]}, {tau * r[2]}};
    sm.E = {{0.0}, {tau * r[3]}};
    sm.C = {{r[4], 0.0}};
    return sm;
}

inline void require_nondegenerate(const RhoBox& box) {
    for (std::size_t i = 0; i < kNumRho; ++i) {
        if (!std::isfinite(box.min[i]) || !std::isfinite(box.max[i]))
            throw Error(Errc::DegenerateBox, "rho" + std::to_string(i + 1) + " bound is not finite");
        if (!(box.min[i] < box.max[i]))
            throw Error(Errc::DegenerateBox, "rho" + std::to_string(i + 1) + " has min >= max");
    }
}

/// Vertex j (0-based here, printed 1-based) takes rho_{i+1} at its max iff bit i of j is set.
inline Polytope vertex_enumeration(const RhoBox& box) {
    require_nondegenerate(box);
    Polytope poly;
    poly.box = box;
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        Rho r;
        r.mode = box.mode();
        for (std::size_t i = 0; i < kNumRho; ++i) r[i] = ((j >> i) & 1U) ? box.max[i] : box.min[i];
        poly.vertices[j] = r;
    }
    return poly;
}

/// Clamps into the box and returns how many components moved.
inline int clamp_to_box(Rho& r, const RhoBox& box) {
    int moved = 0;
    for (std::size_t i = 0; i < kNumRho; ++i) {
        const double c = std::clamp(r[i], box.min[i], box.max[i]);
        if (c != r[i]) ++moved;
        r[i] = c;
    }
    return moved;
}

struct ConvexWeights {
    std::array<double, kNumVertices> xi{};
    int clamped = 0;
};

inline ConvexWeights convex_weights(const Rho& rho, const RhoBox& box) {
    require_nondegenerate(box);
    Rho r = rho;
    ConvexWeights out;
    out.clamped = clamp_to_box(r, box);
    std::array<double, kNumRho> phi{};
    for (std::size_t i = 0; i < kNumRho; ++i) phi[i] = (box.max[i] - r[i]) / (box.max[i] - box.min[i]);
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        double w = 1.0;
        for (std::size_t i = 0; i < kNumRho; ++i) w *= ((j >> i) & 1U) ? (1.0 - phi[i]) : phi[i];
        out.xi[j] = w;
    }
    return out;
}

}  // namespace vrb
