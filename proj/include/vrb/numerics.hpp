#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>

#include "vrb/error.hpp"

namespace vrb {

/**
 * Fixed-size dense matrix, row-major storage.
 *
 * Every matrix in the controller is at most 3x3, so sizes are template
 * parameters and dimension mismatches are compile errors.
 */
template <std::size_t R, std::size_t C, typename T = double>
class Matrix {
public:
    static constexpr std::size_t kRows = R;
    static constexpr std::size_t kCols = C;

    constexpr Matrix() = default;

    constexpr Matrix(std::initializer_list<std::initializer_list<T>> rows) {
        std::size_t r = 0;
        for (const auto& row : rows) {
            std::size_t c = 0;
            for (T v : row) {
                if (r < R && c < C) data_[r * C + c] = v;
                ++c;
            }
            ++r;
        }
    }

    static constexpr Matrix zero() { return Matrix{}; }

    static constexpr Matrix identity()
        requires(R == C)
    {
        Matrix m;
        for (std::size_t i = 0; i < R; ++i) m(i, i) = 1.0;
        return m;
    }

    static constexpr Matrix diagonal(const std::array<T, R>& d)
        requires(R == C)
    {
        Matrix m;
        for (std::size_t i = 0; i < R; ++i) m(i, i) = d[i];
        return m;
    }

    constexpr T& operator()(std::size_t r, std::size_t c) { return data_[r * C + c]; }
    constexpr T operator()(std::size_t r, std::size_t c) const { return data_[r * C + c]; }

    [[nodiscard]] std::span<const T, R * C> entries() const { return std::span<const T, R * C>(data_); }

    [[nodiscard]] constexpr Matrix<C, R, T> transpose() const {
        Matrix<C, R, T> t;
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    template <typename U>
    [[nodiscard]] constexpr Matrix<R, C, U> cast() const {
        Matrix<R, C, U> out;
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) out(r, c) = static_cast<U>((*this)(r, c));
        return out;
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    constexpr Matrix& operator+=(const Matrix& o) {
        for (std::size_t i = 0; i < R * C; ++i) data_[i] += o.data_[i];
        return *this;
    }
    constexpr Matrix& operator-=(const Matrix& o) {
        for (std::size_t i = 0; i < R * C; ++i) data_[i] -= o.data_[i];
        return *this;
    }
    constexpr Matrix& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend constexpr Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend constexpr Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend constexpr Matrix operator*(Matrix a, T s) { return a *= s; }
    friend constexpr Matrix operator*(T s, Matrix a) { return a *= s; }
    friend constexpr Matrix operator-(Matrix a) { return a *= -1.0; }
    friend constexpr bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::array<T, R * C> data_{};
};

template <std::size_t N>
using Vector = Matrix<N, 1>;

template <std::size_t R, std::size_t K, std::size_t C, typename T>
constexpr Matrix<R, C, T> operator*(const Matrix<R, K, T>& a, const Matrix<K, C, T>& b) {
    Matrix<R, C, T> out;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
            T acc = 0;
            for (std::size_t k = 0; k < K; ++k) acc += a(r, k) * b(k, c);
            out(r, c) = acc;
        }
    return out;
}

template <std::size_t R, std::size_t C>
Matrix<R, C> mat_add(const Matrix<R, C>& a, const Matrix<R, C>& b) { return a + b; }

template <std::size_t R, std::size_t C>
Matrix<R, C> mat_sub(const Matrix<R, C>& a, const Matrix<R, C>& b) { return a - b; }

template <std::size_t R, std::size_t K, std::size_t C>
Matrix<R, C> mat_mul(const Matrix<R, K>& a, const Matrix<K, C>& b) { return a * b; }

/// Max absolute row sum.
template <std::size_t R, std::size_t C, typename T>
T norm_inf(const Matrix<R, C, T>& m) {
    T best = 0;
    for (std::size_t r = 0; r < R; ++r) {
        T row = 0;
        for (std::size_t c = 0; c < C; ++c) row += std::abs(m(r, c));
        best = std::max(best, row);
    }
    return best;
}

template <std::size_t R, std::size_t C, typename T>
T max_abs(const Matrix<R, C, T>& m) {
    T best = 0;
    for (T v : m.entries()) best = std::max(best, std::abs(v));
    return best;
}

template <std::size_t R, std::size_t C>
Matrix<R, C> elementwise_abs(const Matrix<R, C>& m) {
    Matrix<R, C> out;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out(r, c) = std::abs(m(r, c));
    return out;
}

template <std::size_t R, std::size_t C>
Matrix<R, C> elementwise_max(const Matrix<R, C>& a, const Matrix<R, C>& b) {
    Matrix<R, C> out;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out(r, c) = std::max(a(r, c), b(r, c));
    return out;
}

template <std::size_t N, typename T>
Matrix<N, N, T> symmetrize(const Matrix<N, N, T>& m) { return T(0.5) * (m + m.transpose()); }

template <std::size_t N>
double trace(const Matrix<N, N>& m) {
    double t = 0.0;
    for (std::size_t i = 0; i < N; ++i) t += m(i, i);
    return t;
}

template <std::size_t N>
double determinant(const Matrix<N, N>& m) {
    static_assert(N >= 1 && N <= 3, "determinant is closed-form for n <= 3");
    if constexpr (N == 1) {
        return m(0, 0);
    } else if constexpr (N == 2) {
        return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    } else {
        return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
               m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    }
}

/// Adjugate inverse for n <= 3. Singular when |det| <= 1e-14 * ||M||_inf^n.
template <std::size_t N>
Matrix<N, N> mat_inverse(const Matrix<N, N>& m) {
    static_assert(N >= 1 && N <= 3, "mat_inverse is closed-form for n <= 3");
    const double det = determinant(m);
    const double scale = std::pow(norm_inf(m), static_cast<double>(N));
    if (!std::isfinite(det) || std::abs(det) <= 1e-14 * scale || det == 0.0)
        throw Error(Errc::SingularMatrix, "determinant " + std::to_string(det));
    Matrix<N, N> inv;
    if constexpr (N == 1) {
        inv(0, 0) = 1.0 / det;
    } else if constexpr (N == 2) {
        inv(0, 0) = m(1, 1) / det;
        inv(0, 1) = -m(0, 1) / det;
        inv(1, 0) = -m(1, 0) / det;
        inv(1, 1) = m(0, 0) / det;
    } else {
        inv(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / det;
        inv(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / det;
        inv(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / det;
        inv(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / det;
        inv(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / det;
        inv(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / det;
        inv(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / det;
        inv(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / det;
        inv(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / det;
    }
    return inv;
}

/// Solves A X = B by LU with partial pivoting. Only an exactly zero or
/// non-finite pivot is reported as singular; badly scaled but invertible
/// systems (I + rank-one updates with 1e16 entries) are expected here.
template <std::size_t N, std::size_t K, typename T>
Matrix<N, K, T> solve(Matrix<N, N, T> a, Matrix<N, K, T> b) {
    for (std::size_t col = 0; col < N; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < N; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (a(piv, col) == 0.0 || !std::isfinite(a(piv, col))) throw Error(Errc::SingularMatrix, "zero pivot in solve");
        if (piv != col) {
            for (std::size_t c = 0; c < N; ++c) std::swap(a(col, c), a(piv, c));
            for (std::size_t c = 0; c < K; ++c) std::swap(b(col, c), b(piv, c));
        }
        for (std::size_t r = col + 1; r < N; ++r) {
            const T f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < N; ++c) a(r, c) -= f * a(col, c);
            for (std::size_t c = 0; c < K; ++c) b(r, c) -= f * b(col, c);
        }
    }
    Matrix<N, K, T> x;
    for (std::size_t c = 0; c < K; ++c) {
        for (std::size_t i = N; i-- > 0;) {
            T acc = b(i, c);
            for (std::size_t j = i + 1; j < N; ++j) acc -= a(i, j) * x(j, c);
            x(i, c) = acc / a(i, i);
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Riccati / LQR
// ---------------------------------------------------------------------------

struct DareOptions {
    /// Hybrid tolerance: accept when ||residual||_inf <= tol * max(1, ||P||_inf).
    double tol = 1e-12;
    /// Doubling steps; step k covers 2^k steps of the plain Riccati recursion.
    int max_iter = 100;
};

template <std::size_t N, std::size_t M>
Matrix<N, N> dare_residual_matrix(const Matrix<N, N>& a, const Matrix<N, M>& b, const Matrix<N, N>& q,
                                  const Matrix<M, M>& r, const Matrix<N, N>& p) {
    const auto at = a.transpose();
    const auto bt = b.transpose();
    const Matrix<M, M> inner = r + bt * p * b;
    const Matrix<M, N> bpa = bt * p * a;
    return at * p * a - (at * p * b) * solve(inner, bpa) + q - p;
}

template <std::size_t N, std::size_t M>
double dare_residual(const Matrix<N, N>& a, const Matrix<N, M>& b, const Matrix<N, N>& q, const Matrix<M, M>& r,
                     const Matrix<N, N>& p) {
    return norm_inf(dare_residual_matrix(a, b, q, r, p));
}

/**
 * Stabilizing solution of A'PA - A'PB (R + B'PB)^-1 B'PA + Q - P = 0.
 *
 * Structure-preserving doubling: with G = B R^-1 B' and H0 = Q,
 *   W = I + G_k H_k
 *   A_{k+1} = A_k W^-1 A_k
 *   G_{k+1} = G_k + A_k W^-1 G_k A_k'
 *   H_{k+1} = H_k + A_k' H_k W^-1 A_k
 * H_k equals the Riccati recursion from P0 = Q after 2^k steps, so closed
 * loops with spectral radius 1 - 1e-7 converge in a few dozen steps.
 */
template <std::size_t N, std::size_t M>
Matrix<N, N> dare_solve(const Matrix<N, N>& a, const Matrix<N, M>& b, const Matrix<N, N>& q, const Matrix<M, M>& r,
                        const DareOptions& opts = {}) {
    // The doubling runs in long double: near-marginal closed loops push P to
    // 1e16 and plain double loses about seven digits on the way there.
    using X = long double;
    Matrix<N, N, X> ak = a.template cast<X>();
    Matrix<N, N, X> g;
    try {
        const auto bx = b.template cast<X>();
        g = symmetrize(bx * solve(r.template cast<X>(), bx.transpose()));
    } catch (const Error&) {
        throw Error(Errc::SingularMatrix, "R is singular");
    }
    Matrix<N, N, X> h = q.template cast<X>();
    const auto eye = Matrix<N, N, X>::identity();

    int it = 0;
    X prev_delta = std::numeric_limits<X>::infinity();
    for (; it < opts.max_iter; ++it) {
        Matrix<N, N, X> w_inv_a, w_inv_g;
        try {
            const Matrix<N, N, X> w = eye + g * h;
            w_inv_a = solve(w, ak);
            w_inv_g = solve(w, g);
        } catch (const Error&) {
            break;
        }
        const Matrix<N, N, X> a_next = ak * w_inv_a;
        const Matrix<N, N, X> g_next = symmetrize(g + ak * w_inv_g * ak.transpose());
        const Matrix<N, N, X> h_next = symmetrize(h + ak.transpose() * h * w_inv_a);
        if (!a_next.all_finite() || !g_next.all_finite() || !h_next.all_finite()) break;

        const X delta = max_abs(h_next - h) / std::max(X(1), max_abs(h_next));
        ak = a_next;
        g = g_next;
        h = h_next;
        if (delta <= std::numeric_limits<X>::epsilon()) {
            ++it;
            break;
        }
        // Quadratic convergence has ended once the update stops shrinking at roundoff level.
        if (delta < X(1e-12) && delta >= prev_delta) {
            ++it;
            break;
        }
        prev_delta = delta;
    }

    const Matrix<N, N> p = h.template cast<double>();
    if (!p.all_finite()) throw NonConvergenceError(it, std::numeric_limits<double>::infinity());
    double res = std::numeric_limits<double>::infinity();
    try {
        res = dare_residual(a, b, q, r, p);
    } catch (const Error&) {
    }
    if (!(res <= opts.tol * std::max(1.0, norm_inf(p)))) throw NonConvergenceError(it, res);
    return p;
}

/// K = (R + B'PB)^-1 B'PA.
template <std::size_t N, std::size_t M>
Matrix<M, N> lqr_gain(const Matrix<N, N>& a, const Matrix<N, M>& b, const Matrix<N, N>& /*q*/, const Matrix<M, M>& r,
                      const Matrix<N, N>& p) {
    const auto bt = b.transpose();
    const Matrix<M, M> inner = r + bt * p * b;
    Matrix<M, M> inner_inv;
    try {
        inner_inv = mat_inverse(inner);
    } catch (const Error&) {
        throw Error(Errc::SingularInnerMatrix, "R + B'PB is not invertible");
    }
    return inner_inv * (bt * p * a);
}

/// Moore-Penrose pseudo-inverse of a column: B'/(B'B).
template <std::size_t N>
Matrix<1, N> pinv_col(const Matrix<N, 1>& b) {
    double nn = 0.0;
    for (double v : b.entries()) nn += v * v;
    if (!(nn > 0.0) || !std::isfinite(nn)) throw Error(Errc::ZeroVector, "pseudo-inverse of a zero column");
    return b.transpose() * (1.0 / nn);
}

// ---------------------------------------------------------------------------
// Eigenvalues (n <= 3)
// ---------------------------------------------------------------------------

namespace detail {

using cplx = std::complex<double>;

template <std::size_t N>
cplx char_poly(const Matrix<N, N>& m, cplx z) {
    // det(zI - M) straight from the entries.
    auto e = [&](std::size_t i, std::size_t j) { return (i == j ? z : cplx{0.0}) - m(i, j); };
    if constexpr (N == 1) {
        return e(0, 0);
    } else if constexpr (N == 2) {
        return e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0);
    } else {
        return e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0)) +
               e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0));
    }
}

template <std::size_t N>
cplx char_poly_derivative(const Matrix<N, N>& m, cplx z) {
    auto e = [&](std::size_t i, std::size_t j) { return (i == j ? z : cplx{0.0}) - m(i, j); };
    if constexpr (N == 1) {
        return cplx{1.0};
    } else if constexpr (N == 2) {
        return e(0, 0) + e(1, 1);
    } else {
        return (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) + (e(0, 0) * e(2, 2) - e(0, 2) * e(2, 0)) +
               (e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0));
    }
}

template <std::size_t N>
void polish(const Matrix<N, N>& m, std::array<cplx, N>& roots) {
    for (std::size_t i = 0; i < N; ++i) {
        double sep = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < N; ++j)
            if (j != i) sep = std::min(sep, std::abs(roots[i] - roots[j]));
        for (int k = 0; k < 4; ++k) {
            const cplx f = char_poly(m, roots[i]);
            const cplx df = char_poly_derivative(m, roots[i]);
            if (f == cplx{0.0} || df == cplx{0.0}) break;
            const cplx step = f / df;
            if (!(std::abs(step) < 0.5 * sep)) break;
            const cplx cand = roots[i] - step;
            if (!(std::abs(char_poly(m, cand)) < std::abs(f))) break;
            roots[i] = cand;
        }
    }
}

}  // namespace detail

/**
 * Eigenvalues of a real n x n matrix, n <= 3, from the closed-form roots of
 * the characteristic polynomial of the trace-shifted matrix, then polished by
 * Newton steps on det(zI - M). Complex roots come out as conjugate pairs.
 */
template <std::size_t N>
std::array<std::complex<double>, N> eigenvalues_small(const Matrix<N, N>& m) {
    static_assert(N >= 1 && N <= 3, "eigenvalues_small supports n <= 3");
    using detail::cplx;
    std::array<cplx, N> roots{};
    if constexpr (N == 1) {
        roots[0] = m(0, 0);
        return roots;
    } else if constexpr (N == 2) {
        const double half_tr = 0.5 * (m(0, 0) + m(1, 1));
        const double half_diff = 0.5 * (m(0, 0) - m(1, 1));
        const double disc = half_diff * half_diff + m(0, 1) * m(1, 0);
        if (disc >= 0.0) {
            const double s = std::sqrt(disc);
            // Larger-magnitude root first, the other from the determinant to avoid cancellation.
            const double big = half_tr >= 0.0 ? half_tr + s : half_tr - s;
            const double det = determinant(m);
            const double small = big != 0.0 ? det / big : half_tr - s;
            roots = {cplx{big}, cplx{small}};
            detail::polish(m, roots);
            roots[0] = roots[0].real();
            roots[1] = roots[1].real();
        } else {
            const double s = std::sqrt(-disc);
            roots = {cplx{half_tr, s}, cplx{half_tr, -s}};
        }
        return roots;
    } else {
        const double shift = trace(m) / 3.0;
        Matrix<3, 3> n = m;
        for (std::size_t i = 0; i < 3; ++i) n(i, i) -= shift;
        const double c2 = (n(0, 0) * n(1, 1) - n(0, 1) * n(1, 0)) + (n(0, 0) * n(2, 2) - n(0, 2) * n(2, 0)) +
                          (n(1, 1) * n(2, 2) - n(1, 2) * n(2, 1));
        // Depressed cubic t^3 + p t + q = 0.
        const cplx p{c2};
        const cplx q{-determinant(n)};
        const cplx disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
        const cplx sq = std::sqrt(disc);
        cplx w = -q / 2.0 + sq;
        const cplx w2 = -q / 2.0 - sq;
        if (std::abs(w2) > std::abs(w)) w = w2;
        const cplx omega = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
        if (std::abs(w) == 0.0) {
            roots = {cplx{0.0}, cplx{0.0}, cplx{0.0}};
        } else {
            cplx u = std::pow(w, 1.0 / 3.0);
            for (std::size_t k = 0; k < 3; ++k) {
                roots[k] = u - p / (3.0 * u);
                u *= omega;
            }
        }
        for (auto& r : roots) r += shift;
        detail::polish(m, roots);

        // A real 3x3 has one real root plus either two reals or a conjugate pair.
        std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) { return std::abs(a.imag()) < std::abs(b.imag()); });
        double scale = 1.0;
        for (const auto& r : roots) scale = std::max(scale, std::abs(r));
        const double im_tol = 1e-12 * scale;
        roots[0] = roots[0].real();
        if (std::abs(roots[1].imag()) <= im_tol && std::abs(roots[2].imag()) <= im_tol) {
            roots[1] = roots[1].real();
            roots[2] = roots[2].real();
        } else {
            const double re = 0.5 * (roots[1].real() + roots[2].real());
            const double im = 0.5 * (std::abs(roots[1].imag()) + std::abs(roots[2].imag()));
            roots[1] = cplx{re, im};
            roots[2] = cplx{re, -im};
        }
        return roots;
    }
}

template <std::size_t N>
double spectral_radius(const Matrix<N, N>& m) {
    double r = 0.0;
    for (const auto& l : eigenvalues_small(m)) r = std::max(r, std::abs(l));
    return r;
}

inline constexpr double kSchurMargin = 1e-12;

template <std::size_t N>
bool is_schur(const Matrix<N, N>& m) {
    return spectral_radius(m) < 1.0 - kSchurMargin;
}

struct PerronResult {
    double root = 0.0;
    bool converged = false;
    int iterations = 0;
};

/**
 * Perron root of an entrywise nonnegative matrix by power iteration on
 * (I + M), bracketed by Collatz-Wielandt bounds. Returns the upper bound,
 * which is conservative for Schur decisions when not fully converged.
 */
template <std::size_t N>
PerronResult perron_root(const Matrix<N, N>& m, double tol = 1e-12, int max_iter = 100000) {
    const auto shifted = m + Matrix<N, N>::identity();
    Vector<N> v;
    for (std::size_t i = 0; i < N; ++i) v(i, 0) = 1.0;
    PerronResult out;
    for (int it = 1; it <= max_iter; ++it) {
        const Vector<N> mv = shifted * v;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        double norm = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double ratio = mv(i, 0) / v(i, 0);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            norm = std::max(norm, mv(i, 0));
        }
        out.root = hi - 1.0;
        out.iterations = it;
        if (hi - lo <= tol * std::max(1.0, hi)) {
            out.converged = true;
            break;
        }
        if (!(norm > 0.0) || !std::isfinite(norm)) break;
        v = mv * (1.0 / norm);
        // Keep v strictly positive so the ratio bounds stay defined.
        for (std::size_t i = 0; i < N; ++i) v(i, 0) = std::max(v(i, 0), 1e-300);
    }
    return out;
}

/**
 * PBH stabilizability: rank [A - lambda I, B] = n for every eigenvalue with
 * |lambda| >= 1 - kSchurMargin. Triangular A uses its diagonal as exact
 * eigenvalues, which keeps repeated marginal roots exact. Rows are
 * normalized before elimination because entries span many decades.
 */
template <std::size_t N, std::size_t M>
bool stabilizable(const Matrix<N, N>& a, const Matrix<N, M>& b, double rank_tol = 1e-12) {
    using detail::cplx;
    bool lower = true, upper = true;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            if (j > i && a(i, j) != 0.0) lower = false;
            if (j < i && a(i, j) != 0.0) upper = false;
        }
    std::array<cplx, N> eig{};
    if (lower || upper) {
        for (std::size_t i = 0; i < N; ++i) eig[i] = a(i, i);
    } else {
        eig = eigenvalues_small(a);
    }

    for (const cplx lambda : eig) {
        if (std::abs(lambda) < 1.0 - kSchurMargin) continue;
        std::array<std::array<cplx, N + M>, N> rows{};
        for (std::size_t i = 0; i < N; ++i) {
            double norm = 0.0;
            for (std::size_t j = 0; j < N; ++j) {
                rows[i][j] = cplx{a(i, j)} - (i == j ? lambda : cplx{0.0});
                norm = std::max(norm, std::abs(rows[i][j]));
            }
            for (std::size_t j = 0; j < M; ++j) {
                rows[i][N + j] = b(i, j);
                norm = std::max(norm, std::abs(rows[i][N + j]));
            }
            if (norm > 0.0)
                for (auto& v : rows[i]) v /= norm;
        }
        // Gaussian elimination with full pivoting; count pivots above tolerance.
        std::size_t rank = 0;
        std::array<bool, N + M> used_col{};
        std::array<bool, N> used_row{};
        for (std::size_t step = 0; step < N; ++step) {
            double best = 0.0;
            std::size_t pr = 0, pc = 0;
            for (std::size_t i = 0; i < N; ++i) {
                if (used_row[i]) continue;
                for (std::size_t j = 0; j < N + M; ++j) {
                    if (used_col[j]) continue;
                    if (std::abs(rows[i][j]) > best) {
                        best = std::abs(rows[i][j]);
                        pr = i;
                        pc = j;
                    }
                }
            }
            if (best <= rank_tol) break;
            ++rank;
            used_row[pr] = true;
            used_col[pc] = true;
            for (std::size_t i = 0; i < N; ++i) {
                if (used_row[i]) continue;
                const cplx f = rows[i][pc] / rows[pr][pc];
                for (std::size_t j = 0; j < N + M; ++j) rows[i][j] -= f * rows[pr][j];
            }
        }
        if (rank < N) return false;
    }
    return true;
}

}  // namespace vrb
