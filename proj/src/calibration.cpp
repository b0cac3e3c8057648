#include "qainit/calibration.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

CorrelationMatrix CorrelationMatrix::from_matrix(Matrix h, std::size_t samples) {
    if (h.rows() != h.cols()) throw ShapeError("CorrelationMatrix: matrix is not square");
    return CorrelationMatrix{std::move(h), 0.0, samples};
}

CorrAccumulator::CorrAccumulator(std::size_t dim) : dim_(dim), lower_(dim, dim) {
    if (dim < 1) throw InvalidArgument("CorrAccumulator: dim must be >= 1");
}

void CorrAccumulator::accumulate(const Matrix& x_batch) {
    if (x_batch.rows() != dim_) {
        throw ShapeError(fmt::format("accumulate: batch has {} rows, accumulator dim is {}", x_batch.rows(), dim_));
    }
    if (!x_batch.all_finite()) throw NumericError("accumulate: non-finite activation");
    const std::size_t s = x_batch.cols();
    for (std::size_t i = 0; i < dim_; ++i) {
        const double* xi = x_batch.row(i).data();
        for (std::size_t j = 0; j <= i; ++j) {
            const double* xj = x_batch.row(j).data();
            double acc = 0.0;
            for (std::size_t k = 0; k < s; ++k) acc += xi[k] * xj[k];
            lower_(i, j) += acc;
        }
    }
    samples_ += s;
}

void CorrAccumulator::merge(const CorrAccumulator& other) {
    if (other.dim_ != dim_) throw ShapeError("merge: accumulator dimensions differ");
    lower_ += other.lower_;
    samples_ += other.samples_;
}

Matrix CorrAccumulator::sum() const {
    Matrix out(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            out(i, j) = lower_(i, j);
            out(j, i) = lower_(i, j);
        }
    }
    return out;
}

CorrelationMatrix CorrAccumulator::finalize(double damping_fraction) const {
    if (!(damping_fraction >= 0.0) || !std::isfinite(damping_fraction)) {
        throw InvalidArgument("finalize: damping_fraction must be finite and >= 0");
    }
    if (samples_ == 0 && damping_fraction == 0.0) {
        throw DegenerateStatisticsError("finalize: no samples accumulated and no damping requested");
    }
    Matrix h = sum();
    double lambda = 0.0;
    if (damping_fraction > 0.0 && dim_ > 0) {
        lambda = damping_fraction * h.trace() / static_cast<double>(dim_);
        for (std::size_t i = 0; i < dim_; ++i) h(i, i) += lambda;
    }
    return CorrelationMatrix{std::move(h), lambda, samples_};
}

CorrelationMatrix CorrAccumulator::finalize_guarded(double fallback_fraction) const {
    if (samples_ > 0 && cholesky(sum()).has_value()) return finalize(0.0);
    return finalize(fallback_fraction);
}

} // namespace qainit
