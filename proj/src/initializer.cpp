#include "qainit/initializer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qainit/errors.hpp"
#include "qainit/rng.hpp"

namespace qainit {

namespace {

void check_pair(const Matrix& delta, const LoraPair& pair, const char* who) {
    if (pair.a.cols() != pair.rank || pair.b.cols() != pair.rank) {
        throw ShapeError(fmt::format("{}: factor widths {}/{} disagree with rank {}", who, pair.a.cols(), pair.b.cols(), pair.rank));
    }
    if (pair.a.rows() != delta.rows() || pair.b.rows() != delta.cols()) {
        throw ShapeError(fmt::format("{}: A {}x{} and B {}x{} do not fit a {}x{} target", who, pair.a.rows(), pair.a.cols(),
                                     pair.b.rows(), pair.b.cols(), delta.rows(), delta.cols()));
    }
}

void symmetrize(Matrix& g) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double v = 0.5 * (g(i, j) + g(j, i));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
}

// A = (delta H) B (Bᵀ H B)^-1 with delta H already formed.
Matrix update_a_from(const Matrix& delta_h, const Matrix& b, const Matrix& h) {
    const Matrix hb = matmul(h, b);
    Matrix gram = matmul_tn(b, hb);
    symmetrize(gram);
    const Matrix rhs = matmul(delta_h, b); // m x r
    return solve_spd(gram, rhs.transposed()).transposed();
}

} // namespace

Matrix LoraPair::product() const { return matmul_nt(a, b); }

double uncalibrated_objective(const Matrix& delta, const LoraPair& pair) {
    check_pair(delta, pair, "uncalibrated_objective");
    const Matrix e = delta - pair.product();
    return 0.5 * e.squared_norm();
}

double calibrated_objective(const Matrix& delta, const LoraPair& pair, const CorrelationMatrix& h) {
    check_pair(delta, pair, "calibrated_objective");
    if (h.dim() != delta.cols()) {
        throw ShapeError(fmt::format("calibrated_objective: H is {}x{}, target has {} columns", h.dim(), h.dim(), delta.cols()));
    }
    const Matrix e = delta - pair.product();
    const Matrix eh = matmul(e, h.h);
    return 0.5 * frobenius_inner(eh, e);
}

LoraPair lora_from_svd(const TruncatedSVD& svd, std::size_t r) {
    if (r < 1 || r > svd.rank()) throw ShapeError(fmt::format("lora_from_svd: rank {} outside [1, {}]", r, svd.rank()));
    LoraPair pair{Matrix(svd.u.rows(), r), Matrix(svd.v.rows(), r), r, kDefaultAlpha};
    const double sigma1 = svd.sigma[0];
    for (std::size_t j = 0; j < r; ++j) {
        if (!(svd.sigma[j] > 1e-12 * sigma1)) continue;
        const double root = std::sqrt(svd.sigma[j]);
        for (std::size_t i = 0; i < svd.u.rows(); ++i) pair.a(i, j) = svd.u(i, j) * root;
        for (std::size_t i = 0; i < svd.v.rows(); ++i) pair.b(i, j) = svd.v(i, j) * root;
    }
    return pair;
}

LoraPair init_uncalibrated(const Matrix& delta, std::size_t r) {
    return lora_from_svd(svd_truncated(delta, r), r);
}

Matrix update_a(const Matrix& delta, const Matrix& b, const CorrelationMatrix& h) {
    if (h.dim() != delta.cols() || b.rows() != delta.cols()) {
        throw ShapeError(fmt::format("update_a: delta {}x{}, B {}x{}, H {}x{}", delta.rows(), delta.cols(), b.rows(), b.cols(),
                                     h.dim(), h.dim()));
    }
    return update_a_from(matmul(delta, h.h), b, h.h);
}

Matrix update_b(const Matrix& delta, const Matrix& a) {
    if (a.rows() != delta.rows()) {
        throw ShapeError(fmt::format("update_b: delta {}x{}, A {}x{}", delta.rows(), delta.cols(), a.rows(), a.cols()));
    }
    Matrix gram = matmul_tn(a, a);
    symmetrize(gram);
    const Matrix rhs = matmul_tn(a, delta); // r x n
    return solve_spd(gram, rhs).transposed();
}

InitResult quant_aware_init_delta(const Matrix& delta, const TruncatedSVD& svd, const CorrelationMatrix& h,
                                  const InitOptions& options) {
    const std::size_t r = options.rank;
    if (r < 1 || r > std::min(delta.rows(), delta.cols())) {
        throw ShapeError(fmt::format("quant_aware_init: rank {} outside [1, {}]", r, std::min(delta.rows(), delta.cols())));
    }
    if (svd.u.rows() != delta.rows() || svd.v.rows() != delta.cols() || svd.rank() < r) {
        throw ShapeError("quant_aware_init: precomputed SVD does not match the target");
    }
    if (h.dim() != delta.cols()) {
        throw ShapeError(fmt::format("quant_aware_init: H is {}x{}, target has {} columns", h.dim(), h.dim(), delta.cols()));
    }

    InitResult result;
    result.pair = lora_from_svd(svd, r);
    result.pair.alpha = options.alpha;
    result.report.rank = r;
    result.report.layer_name = options.layer_name;
    result.report.objective_trace.reserve(options.iters + 1);
    result.report.objective_trace.push_back(calibrated_objective(delta, result.pair, h));

    const Matrix delta_h = matmul(delta, h.h);
    for (std::size_t it = 0; it < options.iters; ++it) {
        result.pair.a = update_a_from(delta_h, result.pair.b, h.h);
        result.pair.b = update_b(delta, result.pair.a);
        if (!result.pair.a.all_finite() || !result.pair.b.all_finite()) {
            throw NumericError(fmt::format("quant_aware_init: non-finite factors at step {}", it + 1));
        }
        result.report.objective_trace.push_back(calibrated_objective(delta, result.pair, h));
        result.report.iterations_run = it + 1;
    }
    return result;
}

InitResult quant_aware_init_delta(const Matrix& delta, const CorrelationMatrix& h, const InitOptions& options) {
    const std::size_t k = std::min(delta.rows(), delta.cols());
    if (options.rank < 1 || options.rank > k) {
        throw ShapeError(fmt::format("quant_aware_init: rank {} outside [1, {}]", options.rank, k));
    }
    return quant_aware_init_delta(delta, svd_truncated(delta, options.rank), h, options);
}

InitResult quant_aware_init(const Matrix& w, const QuantizedTensor& q, const CorrelationMatrix& h,
                            const InitOptions& options) {
    return quant_aware_init_delta(quant_error(w, q), h, options);
}

LoraPair baseline_init(std::size_t m, std::size_t n, std::size_t r, std::uint64_t seed, double alpha) {
    if (r < 1) throw ShapeError("baseline_init: rank must be >= 1");
    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(r));
    LoraPair pair{Matrix(m, r), Matrix(n, r), r, alpha};
    for (double& v : pair.a.data()) v = stddev * rng.normal();
    return pair;
}

} // namespace qainit
