#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace qainit {

/// Dense row-major matrix of doubles.
///
/// Construction from external data rejects NaN/Inf; element access is
/// unchecked in release builds.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    Matrix transposed() const;
    double frobenius_norm() const;
    double squared_norm() const;
    double trace() const;
    bool all_finite() const;

    /// Columns [first, first + count) as a new matrix.
    Matrix col_block(std::size_t first, std::size_t count) const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// sum_ij a_ij * b_ij
double frobenius_inner(const Matrix& a, const Matrix& b);

/// Top-r singular triplets. Left singular vectors follow a sign convention:
/// the largest-magnitude entry of every column of u is non-negative.
struct TruncatedSVD {
    Matrix u;                  // m x r, orthonormal columns
    std::vector<double> sigma; // r values, non-increasing
    Matrix v;                  // n x r, orthonormal columns

    std::size_t rank() const noexcept { return sigma.size(); }
    /// u * diag(sigma) * vᵀ
    Matrix reconstruct() const;
    /// Leading `r` triplets of this decomposition.
    TruncatedSVD leading(std::size_t r) const;
};

struct SvdOptions {
    double tolerance = 1e-12;
    int max_sweeps = 100;
};

/// One-sided Jacobi SVD restricted to the top `r` triplets.
TruncatedSVD svd_truncated(const Matrix& m, std::size_t r, const SvdOptions& options = {});

/// All min(rows, cols) triplets.
TruncatedSVD svd_full(const Matrix& m, const SvdOptions& options = {});

/// Lower Cholesky factor, or nullopt when a pivot is not safely positive.
std::optional<Matrix> cholesky(const Matrix& g);

/// Solves g x = rhs for symmetric positive-definite g.
///
/// A failed factorization is retried with g + eps*I, eps starting at
/// 1e-10 * trace(g) / dim and growing tenfold per retry, three retries.
Matrix solve_spd(const Matrix& g, const Matrix& rhs);

} // namespace qainit
