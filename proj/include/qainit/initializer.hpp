#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qainit/calibration.hpp"
#include "qainit/linalg.hpp"
#include "qainit/quantizer.hpp"

namespace qainit {

inline constexpr std::size_t kDefaultRank = 64;
inline constexpr std::size_t kDefaultIters = 20;
inline constexpr double kDefaultAlpha = 16.0;

/// Low-rank factors of the update A Bᵀ, with A m x r and B n x r.
///
/// The factors hold the unscaled product; alpha is carried as metadata for
/// consumers that apply the usual alpha / r multiplier.
struct LoraPair {
    Matrix a;
    Matrix b;
    std::size_t rank = 0;
    double alpha = kDefaultAlpha;

    /// A Bᵀ
    Matrix product() const;
};

struct InitReport {
    std::vector<double> objective_trace; // initial value, then one per (A, B) step
    std::size_t iterations_run = 0;
    std::size_t rank = 0;
    std::string layer_name;
};

/// 1/2 ||delta - A Bᵀ||_F^2
double uncalibrated_objective(const Matrix& delta, const LoraPair& pair);

/// 1/2 tr(E H Eᵀ) with E = delta - A Bᵀ, i.e. 1/2 ||E X||_F^2 without X.
double calibrated_objective(const Matrix& delta, const LoraPair& pair, const CorrelationMatrix& h);

/// A = U_r sqrt(S_r), B = V_r sqrt(S_r). Directions whose singular value is at
/// most 1e-12 * sigma_1 are left as zero columns.
LoraPair lora_from_svd(const TruncatedSVD& svd, std::size_t r);

/// Best rank-r approximation of delta in Frobenius norm, split symmetrically.
LoraPair init_uncalibrated(const Matrix& delta, std::size_t r);

/// Exact minimizer over A of the calibrated objective for fixed B:
/// A = delta H B (Bᵀ H B)^-1.
Matrix update_a(const Matrix& delta, const Matrix& b, const CorrelationMatrix& h);

/// Exact minimizer over B for fixed A when H is nonsingular (independent of H):
/// B = deltaᵀ A (Aᵀ A)^-1.
Matrix update_b(const Matrix& delta, const Matrix& a);

struct InitOptions {
    std::size_t rank = kDefaultRank;
    std::size_t iters = kDefaultIters;
    double alpha = kDefaultAlpha;
    std::string layer_name;
};

struct InitResult {
    LoraPair pair;
    InitReport report;
};

/// Quantization-aware initialization of one layer: SVD start on W - Q, then
/// `iters` alternating A/B updates on the calibrated objective.
InitResult quant_aware_init(const Matrix& w, const QuantizedTensor& q, const CorrelationMatrix& h,
                            const InitOptions& options = {});

/// Same, starting from the quantization error directly.
InitResult quant_aware_init_delta(const Matrix& delta, const CorrelationMatrix& h, const InitOptions& options = {});

/// Same, reusing a precomputed SVD of delta that holds at least `options.rank`
/// triplets.
InitResult quant_aware_init_delta(const Matrix& delta, const TruncatedSVD& svd, const CorrelationMatrix& h,
                                  const InitOptions& options = {});

/// A ~ N(0, 1/r) from a seeded generator, B = 0.
LoraPair baseline_init(std::size_t m, std::size_t n, std::size_t r, std::uint64_t seed, double alpha = kDefaultAlpha);

} // namespace qainit
