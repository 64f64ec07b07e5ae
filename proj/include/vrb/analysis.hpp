#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>

#include "vrb/controller.hpp"
#include "vrb/error.hpp"
#include "vrb/lpv.hpp"
#include "vrb/numerics.hpp"

namespace vrb {

/// Numerical rank of the two-step controllability matrix of the (x1, x2) model.
inline int controllability_check(const Rho& r0, const Rho& r1, double tau) {
    const Matrix<2, 2> c{{tau * r0[0], tau * r1[0]}, {tau * r0[2], (1.0 + tau * r0[1]) * tau * r1[2]}};
    double frob2 = 0.0;
    for (double v : c.entries()) frob2 += v * v;
    const double det = std::abs(determinant(c));
    // sigma_max^2 and sigma_min^2 are the roots of s^2 - frob2 s + det^2.
    const double disc = std::sqrt(std::max(0.0, frob2 * frob2 - 4.0 * det * det));
    const double smax = std::sqrt(0.5 * (frob2 + disc));
    if (!(smax > 0.0)) return 0;
    const double smin = det / smax;
    return smin > 1e-10 * smax ? 2 : 1;
}

struct Transform {
    Matrix<3, 3> V = Matrix<3, 3>::identity();
    bool degenerate = false;
    double condition = 1.0;
};

/// Closed loop of the default law at rho with gain K (sigma column oriented as applied).
inline Matrix<3, 3> closed_loop(const Rho& r, const Gain& K, double tau) {
    const AugmentedMatrices am = augment(scheduled_matrices(r, tau));
    return am.A_zeta - am.B_zeta * K;
}

/// Gain of vertex l as the implemented law applies it.
inline Gain effective_gain(const GainSchedule& gs, std::size_t l, bool literal_feedback = false) {
    Gain K = gs.K_zeta[l];
    if (!literal_feedback) K(0, 2) *= gs.integral_orientation;
    return K;
}

namespace detail {

/// Null vector of a rank-2 complex 3x3 matrix: best-conditioned cross product of two rows.
inline std::array<std::complex<double>, 3> null_vector(const std::array<std::array<std::complex<double>, 3>, 3>& m) {
    std::array<std::complex<double>, 3> best{};
    double best_norm = -1.0;
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
            const auto& r = m[a];
            const auto& s = m[b];
            const std::array<std::complex<double>, 3> v{r[1] * s[2] - r[2] * s[1], r[2] * s[0] - r[0] * s[2],
                                                        r[0] * s[1] - r[1] * s[0]};
            const double n = std::sqrt(std::norm(v[0]) + std::norm(v[1]) + std::norm(v[2]));
            if (n > best_norm) {
                best_norm = n;
                best = v;
            }
        }
    if (best_norm > 0.0)
        for (auto& z : best) z /= best_norm;
    return best;
}

}  // namespace detail

/**
 * Real eigenvector basis of the box-center closed loop (real and imaginary
 * parts for a complex pair). Falls back to V = I, flagged, when the basis
 * has condition number above 1e8 or cannot be built.
 */
inline Transform find_transform(const GainSchedule& gs, bool literal_feedback = false) {
    Gain K;
    for (std::size_t j = 0; j < kNumVertices; ++j) K += (1.0 / kNumVertices) * effective_gain(gs, j, literal_feedback);
    const Matrix<3, 3> ac = closed_loop(gs.box().center(), K, gs.tau);
    const auto eig = eigenvalues_small(ac);

    Transform out;
    Matrix<3, 3> V;
    std::size_t col = 0;
    std::array<bool, 3> done{};
    for (std::size_t i = 0; i < 3 && col < 3; ++i) {
        if (done[i]) continue;
        std::array<std::array<std::complex<double>, 3>, 3> m{};
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c) m[r][c] = std::complex<double>(ac(r, c)) - (r == c ? eig[i] : 0.0);
        auto v = detail::null_vector(m);
        if (eig[i].imag() != 0.0) {
            for (std::size_t k = i + 1; k < 3; ++k)
                if (std::abs(eig[k] - std::conj(eig[i])) < 1e-12 * (1.0 + std::abs(eig[i]))) done[k] = true;
            if (col + 2 > 3) break;
            for (std::size_t r = 0; r < 3; ++r) {
                V(r, col) = v[r].real();
                V(r, col + 1) = v[r].imag();
            }
            col += 2;
        } else {
            // Rotate the phase so the largest component is real.
            std::size_t big = 0;
            for (std::size_t r = 1; r < 3; ++r)
                if (std::abs(v[r]) > std::abs(v[big])) big = r;
            const auto phase = std::abs(v[big]) > 0.0 ? std::conj(v[big]) / std::abs(v[big]) : 1.0;
            for (std::size_t r = 0; r < 3; ++r) V(r, col) = (v[r] * phase).real();
            ++col;
        }
    }
    if (col != 3) {
        out.degenerate = true;
        return out;
    }
    try {
        const auto Vi = mat_inverse(V);
        out.condition = norm_inf(V) * norm_inf(Vi);
    } catch (const Error&) {
        out.degenerate = true;
        return out;
    }
    if (!(out.condition <= 1e8)) {
        out.degenerate = true;
        out.condition = 1.0;
        return out;
    }
    out.V = V;
    return out;
}

struct LambdaResult {
    Matrix<3, 3> Lambda;
    bool schur = false;
    double perron = 0.0;
    /// Largest spectral radius over the individual pair closed loops; Lambda's
    /// Perron root is never below it, whatever V is.
    double max_pair_radius = 0.0;
    int worst_j = 0;  ///< 1-based
    int worst_l = 0;
};

/// Entrywise max over all (j, l) of |V^-1 (A_zeta,j - B_zeta,j K_l) V|.
inline LambdaResult lambda_matrix(const Matrix<3, 3>& V, const GainSchedule& gs, bool literal_feedback = false) {
    Matrix<3, 3> Vi;
    try {
        Vi = mat_inverse(V);
    } catch (const Error&) {
        throw Error(Errc::SingularV, "transform is singular");
    }
    LambdaResult out;
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        const AugmentedMatrices am = augment(scheduled_matrices(gs.poly.vertices[j], gs.tau));
        for (std::size_t l = 0; l < kNumVertices; ++l) {
            const Matrix<3, 3> m = am.A_zeta - am.B_zeta * effective_gain(gs, l, literal_feedback);
            out.Lambda = elementwise_max(out.Lambda, elementwise_abs(Vi * m * V));
            const double r = spectral_radius(m);
            if (r > out.max_pair_radius) {
                out.max_pair_radius = r;
                out.worst_j = static_cast<int>(j) + 1;
                out.worst_l = static_cast<int>(l) + 1;
            }
        }
    }
    const PerronResult pr = perron_root(out.Lambda);
    out.perron = pr.root;
    out.schur = pr.root < 1.0 - kSchurMargin;
    return out;
}

/// zeta_bar = |V| (I - Lambda)^-1 max_{j,l} |V^-1 D_jl| (w_bar, r_bar), D_jl = [[E_j - B_j K_w,l, 0], [0, tau]].
inline Vector<3> ultimate_bound(const Matrix<3, 3>& V, const LambdaResult& lam, const GainSchedule& gs, double w_bar,
                                double r_bar) {
    if (!lam.schur) throw Error(Errc::NotSchur, "Lambda is not Schur, no ultimate bound");
    Matrix<3, 3> Vi;
    try {
        Vi = mat_inverse(V);
    } catch (const Error&) {
        throw Error(Errc::SingularV, "transform is singular");
    }
    Matrix<3, 2> dmax;
    for (std::size_t j = 0; j < kNumVertices; ++j) {
        const ScheduledMatrices sm = scheduled_matrices(gs.poly.vertices[j], gs.tau);
        for (std::size_t l = 0; l < kNumVertices; ++l) {
            Matrix<3, 2> d;
            const Matrix<2, 1> ew = sm.E - sm.B * gs.K_w[l];
            d(0, 0) = ew(0, 0);
            d(1, 0) = ew(1, 0);
            d(2, 1) = gs.tau;
            dmax = elementwise_max(dmax, elementwise_abs(Vi * d));
        }
    }
    const Matrix<3, 3> resolvent = mat_inverse(Matrix<3, 3>::identity() - lam.Lambda);
    const Matrix<2, 1> wr{{w_bar}, {r_bar}};
    return elementwise_abs(V) * resolvent * dmax * wr;
}

struct StabilityCertificate {
    Transform transform;
    LambdaResult lambda;
    std::optional<Vector<3>> zeta_bar;
    double w_bar = 0.0;
    double r_bar = 0.0;
};

inline StabilityCertificate certify(const GainSchedule& gs, double w_bar, double r_bar,
                                    bool literal_feedback = false) {
    StabilityCertificate cert;
    cert.w_bar = w_bar;
    cert.r_bar = r_bar;
    cert.transform = find_transform(gs, literal_feedback);
    cert.lambda = lambda_matrix(cert.transform.V, gs, literal_feedback);
    if (cert.lambda.schur) cert.zeta_bar = ultimate_bound(cert.transform.V, cert.lambda, gs, w_bar, r_bar);
    return cert;
}

}  // namespace vrb
