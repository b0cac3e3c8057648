#include "qainit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError(fmt::format("Matrix: {} values supplied for a {}x{} matrix", data_.size(), rows_, cols_));
    }
    if (!all_finite()) {
        throw NumericError("Matrix: non-finite entry");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    if (!m.all_finite()) throw NumericError("Matrix::diagonal: non-finite entry");
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
}

double Matrix::frobenius_norm() const { return std::sqrt(squared_norm()); }

double Matrix::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::col_block(std::size_t first, std::size_t count) const {
    if (first + count > cols_) throw ShapeError("Matrix::col_block: range exceeds column count");
    Matrix out(rows_, count);
    for (std::size_t i = 0; i < rows_; ++i)
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_ + first), count, out.row(i).begin());
    return out;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError(fmt::format("matmul: {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError(fmt::format("matmul_tn: ({}x{})^T * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* brow = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            double* crow = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError(fmt::format("matmul_nt: {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    Matrix c(a.rows(), b.rows());
    const std::size_t k = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += arow[t] * brow[t];
            c(i, j) = s;
        }
    }
    return c;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("frobenius_inner: shape mismatch");
    double s = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

Matrix TruncatedSVD::reconstruct() const {
    Matrix us = u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= sigma[j];
    return matmul_nt(us, v);
}

TruncatedSVD TruncatedSVD::leading(std::size_t r) const {
    if (r > rank()) throw ShapeError(fmt::format("TruncatedSVD::leading: {} > rank {}", r, rank()));
    return {u.col_block(0, r), std::vector<double>(sigma.begin(), sigma.begin() + static_cast<std::ptrdiff_t>(r)),
            v.col_block(0, r)};
}

namespace {

double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Completes `basis` (column-major, `count` columns of length `len`) with a unit
// vector orthogonal to all existing columns, drawn from the standard basis.
void complete_orthonormal(std::vector<double>& basis, std::size_t len, std::size_t count, double* out) {
    for (std::size_t e = 0; e < len; ++e) {
        std::fill(out, out + len, 0.0);
        out[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < count; ++j) {
                const double* q = basis.data() + j * len;
                const double p = dot(q, out, len);
                for (std::size_t i = 0; i < len; ++i) out[i] -= p * q[i];
            }
        }
        const double norm = std::sqrt(dot(out, out, len));
        if (norm > 0.5) {
            for (std::size_t i = 0; i < len; ++i) out[i] /= norm;
            return;
        }
    }
    throw NumericError("svd: cannot complete orthonormal basis");
}

// Hestenes one-sided Jacobi on a tall p x q matrix (p >= q). Returns the top r
// triplets in terms of the tall matrix.
TruncatedSVD jacobi_tall(const Matrix& tall, std::size_t r, const SvdOptions& options) {
    const std::size_t p = tall.rows();
    const std::size_t q = tall.cols();

    // Column-major working copies.
    std::vector<double> a(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) a[j * p + i] = tall(i, j);
    std::vector<double> v(q * q, 0.0);
    for (std::size_t j = 0; j < q; ++j) v[j * q + j] = 1.0;

    std::vector<double> norms(q);
    bool converged = false;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        for (std::size_t j = 0; j < q; ++j) norms[j] = dot(&a[j * p], &a[j * p], p);
        double max_cos = 0.0;
        for (std::size_t j = 0; j + 1 < q; ++j) {
            for (std::size_t k = j + 1; k < q; ++k) {
                double* aj = &a[j * p];
                double* ak = &a[k * p];
                const double alpha = norms[j];
                const double beta = norms[k];
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = dot(aj, ak, p);
                const double cosine = std::abs(gamma) / std::sqrt(alpha * beta);
                max_cos = std::max(max_cos, cosine);
                if (cosine <= 1e-15 || gamma == 0.0) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(aj, ak, p, c, s);
                rotate(&v[j * q], &v[k * q], q, c, s);
                norms[j] = alpha - t * gamma;
                norms[k] = beta + t * gamma;
            }
        }
        if (max_cos <= options.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw NumericError(fmt::format("svd: no convergence after {} sweeps", options.max_sweeps));
    }

    std::vector<double> sigma(q);
    for (std::size_t j = 0; j < q; ++j) sigma[j] = std::sqrt(dot(&a[j * p], &a[j * p], p));
    std::vector<std::size_t> order(q);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double sigma_max = sigma[order[0]];
    std::vector<double> ucols(p * r);
    TruncatedSVD out{Matrix(p, r), std::vector<double>(r), Matrix(q, r)};
    for (std::size_t t = 0; t < r; ++t) {
        const std::size_t j = order[t];
        double* ucol = &ucols[t * p];
        if (sigma_max > 0.0 && sigma[j] > 1e-13 * sigma_max) {
            for (std::size_t i = 0; i < p; ++i) ucol[i] = a[j * p + i] / sigma[j];
        } else {
            complete_orthonormal(ucols, p, t, ucol);
        }
        out.sigma[t] = sigma[j];
        for (std::size_t i = 0; i < p; ++i) out.u(i, t) = ucol[i];
        for (std::size_t i = 0; i < q; ++i) out.v(i, t) = v[j * q + i];
    }
    return out;
}

void apply_sign_convention(TruncatedSVD& svd) {
    for (std::size_t j = 0; j < svd.rank(); ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < svd.u.rows(); ++i) {
            if (std::abs(svd.u(i, j)) > best) {
                best = std::abs(svd.u(i, j));
                arg = i;
            }
        }
        if (svd.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < svd.u.rows(); ++i) svd.u(i, j) = -svd.u(i, j);
            for (std::size_t i = 0; i < svd.v.rows(); ++i) svd.v(i, j) = -svd.v(i, j);
        }
    }
}

} // namespace

TruncatedSVD svd_truncated(const Matrix& m, std::size_t r, const SvdOptions& options) {
    const std::size_t k = std::min(m.rows(), m.cols());
    if (r < 1 || r > k) {
        throw ShapeError(fmt::format("svd_truncated: rank {} outside [1, {}]", r, k));
    }
    if (!m.all_finite()) throw NumericError("svd_truncated: non-finite input");
    TruncatedSVD out;
    if (m.rows() >= m.cols()) {
        out = jacobi_tall(m, r, options);
    } else {
        TruncatedSVD t = jacobi_tall(m.transposed(), r, options);
        out = TruncatedSVD{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }
    apply_sign_convention(out);
    return out;
}

TruncatedSVD svd_full(const Matrix& m, const SvdOptions& options) {
    return svd_truncated(m, std::min(m.rows(), m.cols()), options);
}

// ---------------------------------------------------------------------------
// SPD solves
// ---------------------------------------------------------------------------

namespace {

std::optional<Matrix> cholesky_shifted(const Matrix& g, double shift) {
    const std::size_t n = g.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(g(i, i) + shift));
    const double floor = static_cast<double>(n) * 2.220446049250313e-16 * max_diag;

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = g(j, j) + shift;
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > floor) || !std::isfinite(d)) return std::nullopt;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            // Lower triangle of g is authoritative.
            double s = g(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Matrix cholesky_solve(const Matrix& l, const Matrix& rhs) {
    const std::size_t n = l.rows();
    Matrix x = rhs;
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = x(i, c);
            for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
            x(i, c) = s / l(i, i);
        }
    }
    return x;
}

} // namespace

std::optional<Matrix> cholesky(const Matrix& g) {
    if (g.rows() != g.cols()) throw ShapeError("cholesky: matrix is not square");
    return cholesky_shifted(g, 0.0);
}

Matrix solve_spd(const Matrix& g, const Matrix& rhs) {
    if (g.rows() != g.cols()) {
        throw ShapeError(fmt::format("solve_spd: {}x{} system matrix is not square", g.rows(), g.cols()));
    }
    if (rhs.rows() != g.rows()) {
        throw ShapeError(fmt::format("solve_spd: rhs has {} rows, system has {}", rhs.rows(), g.rows()));
    }
    const std::size_t n = g.rows();
    if (n == 0) return rhs;
    if (!g.all_finite() || !rhs.all_finite()) throw NumericError("solve_spd: non-finite input");

    if (auto l = cholesky_shifted(g, 0.0)) return cholesky_solve(*l, rhs);

    // An identically zero g has no scale of its own; fall back to unit scale.
    double base = g.trace() / static_cast<double>(n);
    if (!(base > 0.0)) base = 1.0;
    double eps = 1e-10 * base;
    for (int attempt = 0; attempt < 4; ++attempt, eps *= 10.0) {
        if (auto l = cholesky_shifted(g, eps)) return cholesky_solve(*l, rhs);
    }
    throw SingularSystemError(fmt::format("solve_spd: {}x{} system singular after jitter up to {:.3g}", n, n, eps / 10.0));
}

} // namespace qainit
