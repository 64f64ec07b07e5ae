#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "vrb/error.hpp"
#include "vrb/lpv.hpp"
#include "vrb/numerics.hpp"
#include "vrb/plant.hpp"

namespace vrb {

using Gain = Matrix<1, 3>;

struct AugmentedMatrices {
    Matrix<3, 3> A_zeta;
    Matrix<3, 1> B_zeta;
    Matrix<3, 1> E_zeta;  ///< current disturbance column [E; 0]
    Matrix<3, 1> R_zeta;  ///< setpoint column [0; 0; tau]
};

inline AugmentedMatrices augment(const ScheduledMatrices& sm) {
    AugmentedMatrices am;
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) am.A_zeta(r, c) = sm.A(r, c);
        am.B_zeta(r, 0) = sm.B(r, 0);
        am.E_zeta(r, 0) = sm.E(r, 0);
    }
    am.A_zeta(2, 0) = -sm.tau * sm.C(0, 0);
    am.A_zeta(2, 1) = -sm.tau * sm.C(0, 1);
    am.A_zeta(2, 2) = 1.0;
    am.R_zeta(2, 0) = sm.tau;
    return am;
}

struct SynthesisOptions {
    Matrix<3, 3> Q = Matrix<3, 3>::diagonal({1.0, 1.0, 5e3});
    double R = 1e4;
    /// Per-vertex weights, keyed by 1-based vertex index.
    std::map<int, Matrix<3, 3>> Q_override;
    std::map<int, double> R_override;
    DareOptions dare{1e-9, 200};
};

struct GainSchedule {
    std::array<Gain, kNumVertices> K_zeta;
    std::array<double, kNumVertices> K_w{};
    std::array<Matrix<3, 3>, kNumVertices> weights_Q;
    std::array<double, kNumVertices> weights_R{};
    std::array<double, kNumVertices> spectral_radius{};
    Polytope poly;
    double tau = 1.0;
    Mode mode = Mode::Charging;
    /// Sign applied to the sigma gain by the default control law (see integral_orientation()).
    double integral_orientation = 1.0;

    [[nodiscard]] const RhoBox& box() const { return poly.box; }
};

/**
 * Sign that makes the integral act in the physical direction.
 *
 * The LQR sees the flow reach the output only through Q -> x1 -> y, with
 * sign(rho1 rho5). The reference feedforward acts through the much faster
 * Q -> x2 -> X path, with sign(rho3 dX/dx2). When the two disagree the
 * synthesized sigma gain has the wrong sign for the loop that actually
 * dominates, so it is flipped. Boxes that are not sign-definite keep +1.
 */
inline double integral_orientation(const RhoBox& box) {
    auto sign_of = [](double lo, double hi) -> int {
        if (lo > 0.0) return 1;
        if (hi < 0.0) return -1;
        return 0;
    };
    const int s1 = sign_of(box.min[0], box.max[0]);
    const int s3 = sign_of(box.min[2], box.max[2]);
    const int s5 = sign_of(box.min[4], box.max[4]);
    if (s1 == 0 || s3 == 0 || s5 == 0) return 1.0;
    const int dx_dx2 = box.mode() == Mode::Charging ? 1 : -1;
    return (s1 * s5) == (s3 * dx_dx2) ? 1.0 : -1.0;
}

struct VertexDesign {
    Gain K;
    double K_w = 0.0;
    double spectral_radius = 0.0;
};

/// LQR design for one frozen rho. Throws plain Errors; synthesize() attaches the vertex index.
inline VertexDesign design_at(const Rho& r, double tau, const Matrix<3, 3>& Q, double R, const DareOptions& dare) {
    const ScheduledMatrices sm = scheduled_matrices(r, tau);
    const AugmentedMatrices am = augment(sm);
    if (!stabilizable(am.A_zeta, am.B_zeta)) throw Error(Errc::VertexNotStabilizable, "PBH rank test failed");
    const Matrix<1, 1> Rm{{R}};
    Matrix<3, 3> P;
    try {
        P = dare_solve(am.A_zeta, am.B_zeta, Q, Rm, dare);
    } catch (const Error& e) {
        throw Error(Errc::DareFailure, e.what());
    }
    VertexDesign out;
    try {
        out.K = lqr_gain(am.A_zeta, am.B_zeta, Q, Rm, P);
    } catch (const Error& e) {
        throw Error(Errc::DareFailure, e.what());
    }
    out.spectral_radius = spectral_radius(am.A_zeta - am.B_zeta * out.K);
    if (!(out.spectral_radius < 1.0 - kSchurMargin))
        throw Error(Errc::DareFailure, fmt::format("closed loop not Schur (radius {:.12g})", out.spectral_radius));
    try {
        out.K_w = (pinv_col(sm.B) * sm.E)(0, 0);
    } catch (const Error&) {
        throw Error(Errc::VertexNotStabilizable, "B is zero");
    }
    return out;
}

inline GainSchedule synthesize(const RhoBox& box, double tau, const SynthesisOptions& opts = {}) {
    GainSchedule gs;
    gs.poly = vertex_enumeration(box);
    gs.tau = tau;
    gs.mode = box.mode();
    gs.integral_orientation = integral_orientation(box);
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        const int label = static_cast<int>(j) + 1;
        const auto qo = opts.Q_override.find(label);
        const auto ro = opts.R_override.find(label);
        gs.weights_Q[j] = qo != opts.Q_override.end() ? qo->second : opts.Q;
        gs.weights_R[j] = ro != opts.R_override.end() ? ro->second : opts.R;
        try {
            const VertexDesign d = design_at(gs.poly.vertices[j], tau, gs.weights_Q[j], gs.weights_R[j], opts.dare);
            gs.K_zeta[j] = d.K;
            gs.K_w[j] = d.K_w;
            gs.spectral_radius[j] = d.spectral_radius;
        } catch (const Error& e) {
            throw VertexError(e.code(), label, e.what());
        }
    }
    return gs;
}

/// One row per vertex: j, K1, K2, K3, Kw, spectral_radius.
inline std::string format_gain_table(const GainSchedule& gs) {
    std::string out = "j, K1, K2, K3, Kw, spectral_radius\n";
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        const Gain& K = gs.K_zeta[j];
        out += fmt::format("{}, {:.9g}, {:.9g}, {:.9g}, {:.9g}, {:.12g}\n", j + 1, K(0, 0), K(0, 1), K(0, 2),
                           gs.K_w[j], gs.spectral_radius[j]);
    }
    return out;
}

struct ReferenceOptions {
    bool literal_ustar = false;  ///< use (1 - tau rho2*) in u*
    bool literal_rho1 = false;
    /// Replaces rho3* when it is (numerically) zero; without it that case throws DegenerateRho.
    std::optional<double> rho3_fallback;
};

struct ReferencePoint {
    LpvState x_star;     ///< (x1, x2) at step k
    double x2_next = 0;  ///< x2*(k+1)
    double u_star = 0;   ///< unclamped
    double u_star_clamped = 0;
    Matrix<3, 1> zeta_star;
    Rho rho_star;
    bool rho3_fallback_used = false;
};

inline double reference_x2_next(double x1, double X_s, Mode mode) {
    const double s1 = std::sqrt(x1);
    if (mode == Mode::Charging) {
        const double a = (1.0 + s1) / (1.0 - X_s) - 1.0;
        return a * a;
    }
    const double a = (1.0 - X_s) / (X_s + 1.0 / s1);
    return a * a;
}

/// One-step frozen-model reference: x1 held, x2 steered so the next conversion equals X_s.
inline ReferencePoint reference(const LpvState& x, double X_s, double I, const PlantParams& p, double tau, Mode mode,
                                const ReferenceOptions& opts = {}) {
    ReferencePoint ref;
    ref.x_star = x;
    ref.x2_next = reference_x2_next(x.x1, X_s, mode);
    ref.zeta_star = {{x.x1}, {x.x2}, {0.0}};
    const Concentrations cs = balanced_conc_from_state(x, p);
    ref.rho_star = rho_from_conc(cs, p, mode, opts.literal_rho1);
    double r3 = ref.rho_star[2];
    if (!(std::abs(r3) >= 1e-15)) {
        if (!opts.rho3_fallback) throw Error(Errc::DegenerateRho, "rho3* is zero");
        r3 = *opts.rho3_fallback;
        ref.rho3_fallback_used = true;
    }
    const double a22 = opts.literal_ustar ? 1.0 - tau * ref.rho_star[1] : 1.0 + tau * ref.rho_star[1];
    ref.u_star = (ref.x2_next - a22 * x.x2 - tau * ref.rho_star[3] * I) / (tau * r3);
    ref.u_star_clamped = std::clamp(ref.u_star, p.Q_min, p.Q_max);
    return ref;
}

struct ControllerState {
    double sigma = 0.0;
    Mode mode = Mode::Charging;
    bool saturated = false;
};

struct LawOptions {
    /// Literal law: also subtract sum xi_j K_w,j w and use the sigma gain as synthesized.
    bool literal_feedback = false;
};

struct ControlOutput {
    double u = 0.0;
    double u_unsat = 0.0;
    ControllerState next;
    int rho_clamps = 0;
    bool integral_frozen = false;
};

namespace detail {

inline ControlOutput apply_law(const LpvState& x, double w, const ReferencePoint& ref, const ControllerState& cs,
                               const Gain& K, double K_w, double orientation, double tau, double X_s, double q_min,
                               double q_max, const LawOptions& law) {
    const Matrix<3, 1> zeta{{x.x1}, {x.x2}, {cs.sigma}};
    const Matrix<3, 1> dz = zeta - ref.zeta_star;
    Gain Keff = K;
    double u_unsat = 0.0;
    if (law.literal_feedback) {
        u_unsat = ref.u_star - (Keff * dz)(0, 0) - K_w * w;
    } else {
        Keff(0, 2) *= orientation;
        u_unsat = ref.u_star - (Keff * dz)(0, 0);
    }

    ControlOutput out;
    out.u_unsat = u_unsat;
    out.u = std::clamp(u_unsat, q_min, q_max);
    out.next = cs;
    out.next.saturated = u_unsat < q_min || u_unsat > q_max;

    // Conditional integration: hold sigma while its update would push u further past the active limit.
    const double e = X_s - conversion_per_pass(x, cs.mode);
    const double du_dsigma = -Keff(0, 2);
    const bool push = (u_unsat > q_max && du_dsigma * e > 0.0) || (u_unsat < q_min && du_dsigma * e < 0.0);
    out.integral_frozen = push;
    if (!push) out.next.sigma = cs.sigma + tau * e;
    return out;
}

}  // namespace detail

/// Weighted-vertex control law with integral action and anti-windup.
inline ControlOutput control_step(const LpvState& x, const Rho& rho, double w, const ReferencePoint& ref,
                                  const ControllerState& cs, const GainSchedule& gs, double X_s, double q_min,
                                  double q_max, const LawOptions& law = {}) {
    const ConvexWeights cw = convex_weights(rho, gs.box());
    Gain K;
    double K_w = 0.0;
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        K += cw.xi[j] * gs.K_zeta[j];
        K_w += cw.xi[j] * gs.K_w[j];
    }
    ControlOutput out =
        detail::apply_law(x, w, ref, cs, K, K_w, gs.integral_orientation, gs.tau, X_s, q_min, q_max, law);
    out.rho_clamps = cw.clamped;
    return out;
}

/// Comparison controller: solves the DARE at the current (box-clamped) rho every step.
class OnlineLqr {
public:
    OnlineLqr(const RhoBox& box, double tau, const SynthesisOptions& opts = {})
        : box_(box), tau_(tau), opts_(opts), orientation_(integral_orientation(box)) {}

    struct Step {
        ControlOutput out;
        bool dare_failed = false;
    };

    Step step(const LpvState& x, const Rho& rho, double w, const ReferencePoint& ref, const ControllerState& cs,
              double X_s, double q_min, double q_max, const LawOptions& law = {}) {
        Rho r = rho;
        const int clamps = clamp_to_box(r, box_);
        bool failed = false;
        try {
            const VertexDesign d = design_at(r, tau_, opts_.Q, opts_.R, opts_.dare);
            last_K_ = d.K;
            last_K_w_ = d.K_w;
        } catch (const Error& e) {
            if (!last_K_) throw Error(Errc::DareFailure, std::string("online LQR with no previous gain: ") + e.what());
            failed = true;
            ++dare_failures_;
        }
        Step s;
        s.dare_failed = failed;
        s.out = detail::apply_law(x, w, ref, cs, *last_K_, last_K_w_, orientation_, tau_, X_s, q_min, q_max, law);
        s.out.rho_clamps = clamps;
        return s;
    }

    /// Gain the online controller would use at rho (box-clamped), without touching its state.
    [[nodiscard]] VertexDesign gain_at(const Rho& rho) const {
        Rho r = rho;
        clamp_to_box(r, box_);
        return design_at(r, tau_, opts_.Q, opts_.R, opts_.dare);
    }

    [[nodiscard]] int dare_failures() const { return dare_failures_; }

private:
    RhoBox box_;
    double tau_;
    SynthesisOptions opts_;
    double orientation_;
    std::optional<Gain> last_K_;
    double last_K_w_ = 0.0;
    int dare_failures_ = 0;
};

}  // namespace vrb
