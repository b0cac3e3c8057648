#pragma once

#include <cstddef>

#include "qainit/linalg.hpp"

namespace qainit {

/// Activation correlation H = X Xᵀ (+ damping * I) for one weight matrix.
struct CorrelationMatrix {
    Matrix h;
    double damping_lambda = 0.0;
    std::size_t samples = 0;

    std::size_t dim() const noexcept { return h.rows(); }

    /// Wraps an existing symmetric matrix, e.g. c * I in tests.
    static CorrelationMatrix from_matrix(Matrix h, std::size_t samples = 0);
};

/// Streams activation batches (columns are activation vectors) into X Xᵀ.
///
/// Only the lower triangle is updated; reads mirror it, so the result is
/// exactly symmetric.
class CorrAccumulator {
public:
    explicit CorrAccumulator(std::size_t dim);

    void accumulate(const Matrix& x_batch);
    /// Adds another accumulator's statistics (disjoint batch shards).
    void merge(const CorrAccumulator& other);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t samples_seen() const noexcept { return samples_; }
    /// Symmetric copy of the accumulated sum.
    Matrix sum() const;

    /// h = sum + lambda * I, lambda = damping_fraction * mean(diag(sum)).
    CorrelationMatrix finalize(double damping_fraction) const;

    /// Undamped when the sum is positive definite, otherwise damped by
    /// `fallback_fraction`.
    CorrelationMatrix finalize_guarded(double fallback_fraction = 0.01) const;

private:
    std::size_t dim_;
    std::size_t samples_ = 0;
    Matrix lower_;
};

} // namespace qainit
