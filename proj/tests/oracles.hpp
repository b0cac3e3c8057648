#pragma once

// Independent reference computations used only by tests. None of these call
// into the library's numerical routines; they share only the Matrix container.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qainit/linalg.hpp"
#include "qainit/rng.hpp"

namespace oracle {

using qainit::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, qainit::Rng& rng, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
    return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    }
    return c;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline double fro(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

inline double fro_diff(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    return std::sqrt(s);
}

/// ||a - b||_F / ||b||_F (absolute when b = 0).
inline double rel_diff(const Matrix& a, const Matrix& b) {
    const double d = fro_diff(a, b);
    const double nb = fro(b);
    return nb > 0.0 ? d / nb : d;
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

/// Dense Gaussian elimination with partial pivoting on an n x n row-major
/// system with k right-hand sides (row-major n x k).
inline std::vector<double> gauss_solve(std::vector<double> a, std::vector<double> b, std::size_t n, std::size_t k = 1) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (a[piv * n + col] == 0.0) throw std::runtime_error("gauss_solve: singular");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[piv * n + j], a[col * n + j]);
            for (std::size_t j = 0; j < k; ++j) std::swap(b[piv * k + j], b[col * k + j]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
            for (std::size_t j = 0; j < k; ++j) b[r * k + j] -= f * b[col * k + j];
        }
    }
    std::vector<double> x(n * k);
    for (std::size_t jj = 0; jj < k; ++jj) {
        for (std::size_t i = n; i-- > 0;) {
            double s = b[i * k + jj];
            for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j * k + jj];
            x[i * k + jj] = s / a[i * n + i];
        }
    }
    return x;
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted descending.
inline std::vector<double> sym_eigenvalues(Matrix s) {
    const std::size_t n = s.rows();
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0, total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                total += s(i, j) * s(i, j);
                if (i != j) off += s(i, j) * s(i, j);
            }
        if (off <= 1e-30 * total) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (s(p, q) == 0.0) continue;
                const double theta = (s(q, q) - s(p, p)) / (2.0 * s(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double skp = s(k, p), skq = s(k, q);
                    s(k, p) = c * skp - sn * skq;
                    s(k, q) = sn * skp + c * skq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double spk = s(p, k), sqk = s(q, k);
                    s(p, k) = c * spk - sn * sqk;
                    s(q, k) = sn * spk + c * sqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = s(i, i);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

/// Squared singular values of m (eigenvalues of the smaller Gram matrix), descending.
inline std::vector<double> squared_singular_values(const Matrix& m) {
    const Matrix t = naive_transpose(m);
    std::vector<double> ev = m.rows() >= m.cols() ? sym_eigenvalues(naive_matmul(t, m)) : sym_eigenvalues(naive_matmul(m, t));
    for (double& v : ev) v = std::max(v, 0.0);
    return ev;
}

inline std::vector<double> singular_values(const Matrix& m) {
    std::vector<double> sv = squared_singular_values(m);
    for (double& v : sv) v = std::sqrt(v);
    return sv;
}

/// Random SPD matrix X Xᵀ with X of shape n x (2n + 8); also returns X.
inline std::pair<Matrix, Matrix> random_spd_with_factor(std::size_t n, qainit::Rng& rng) {
    Matrix x = random_matrix(n, 2 * n + 8, rng);
    return {naive_matmul(x, naive_transpose(x)), x};
}

/// argmin_A 1/2 ||(delta - A Bᵀ) X||_F^2 from the explicit design matrix of
/// the vectorized problem: unknown A(i,k) at index i*r + k, one residual row
/// per entry of delta X.
inline Matrix lstsq_update_a(const Matrix& delta, const Matrix& b, const Matrix& x) {
    const std::size_t m = delta.rows(), r = b.cols(), s = x.cols();
    const Matrix c = naive_matmul(naive_transpose(b), x);  // r x s
    const Matrix y = naive_matmul(delta, x);               // m x s
    const std::size_t u = m * r;
    std::vector<double> dtd(u * u, 0.0), dty(u, 0.0);
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            row.clear();
            for (std::size_t k = 0; k < r; ++k) row.emplace_back(i * r + k, c(k, j));
            for (const auto& [p, vp] : row) {
                dty[p] += vp * y(i, j);
                for (const auto& [q, vq] : row) dtd[p * u + q] += vp * vq;
            }
        }
    }
    const std::vector<double> sol = gauss_solve(std::move(dtd), std::move(dty), u);
    Matrix a(m, r);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < r; ++k) a(i, k) = sol[i * r + k];
    return a;
}

/// argmin_B 1/2 ||(delta - A Bᵀ) X||_F^2 with unknown B(l,k) at index l*r + k;
/// residual row (i, j) has coefficient A(i,k) X(l,j).
inline Matrix lstsq_update_b(const Matrix& delta, const Matrix& a, const Matrix& x) {
    const std::size_t m = delta.rows(), n = delta.cols(), r = a.cols(), s = x.cols();
    const Matrix y = naive_matmul(delta, x);
    const std::size_t u = n * r;
    std::vector<double> dtd(u * u, 0.0), dty(u, 0.0), row(u);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            for (std::size_t l = 0; l < n; ++l)
                for (std::size_t k = 0; k < r; ++k) row[l * r + k] = a(i, k) * x(l, j);
            for (std::size_t p = 0; p < u; ++p) {
                if (row[p] == 0.0) continue;
                dty[p] += row[p] * y(i, j);
                for (std::size_t q = 0; q < u; ++q) dtd[p * u + q] += row[p] * row[q];
            }
        }
    }
    const std::vector<double> sol = gauss_solve(std::move(dtd), std::move(dty), u);
    Matrix b(n, r);
    for (std::size_t l = 0; l < n; ++l)
        for (std::size_t k = 0; k < r; ++k) b(l, k) = sol[l * r + k];
    return b;
}

/// 1/2 ||(delta - A Bᵀ) X||_F^2 evaluated with X itself.
inline double calibrated_objective_with_x(const Matrix& delta, const Matrix& a, const Matrix& b, const Matrix& x) {
    const Matrix abt = naive_matmul(a, naive_transpose(b));
    Matrix e(delta.rows(), delta.cols());
    for (std::size_t i = 0; i < e.rows(); ++i)
        for (std::size_t j = 0; j < e.cols(); ++j) e(i, j) = delta(i, j) - abt(i, j);
    const double f = fro(naive_matmul(e, x));
    return 0.5 * f * f;
}

/// Index of the nearest codebook value; ties go to the lower index.
inline std::size_t nearest_code(double x, const std::array<double, 16>& values) {
    std::size_t best = 0;
    double best_d = std::abs(x - values[0]);
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double d = std::abs(x - values[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

/// Standard normal quantile by bisection on the CDF 0.5 erfc(-x / sqrt 2).
inline double normal_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline std::vector<double> linspace(double a, double b, std::size_t count) {
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1);
    return v;
}

/// 4-bit normal-float table from its quantile construction: 8 positive levels
/// from quantiles linspace(0.9677083, 0.5, 9) without the last point, 7
/// negative levels from linspace(0.9677083, 0.5, 8) without the last point,
/// an exact zero, normalized by the largest magnitude.
inline std::array<double, 16> nf4_from_quantiles() {
    constexpr double offset = 0.9677083;
    std::vector<double> v;
    const auto pos = linspace(offset, 0.5, 9);
    for (std::size_t i = 0; i + 1 < pos.size(); ++i) v.push_back(normal_quantile(pos[i]));
    v.push_back(0.0);
    const auto neg = linspace(offset, 0.5, 8);
    for (std::size_t i = 0; i + 1 < neg.size(); ++i) v.push_back(-normal_quantile(neg[i]));
    std::sort(v.begin(), v.end());
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::abs(x));
    std::array<double, 16> out{};
    for (std::size_t i = 0; i < 16; ++i) out[i] = v[i] / mx;
    return out;
}

} // namespace oracle
