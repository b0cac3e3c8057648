#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qainit/linalg.hpp"
#include "qainit/rng.hpp"

namespace qainit {

enum class WeightDist { gaussian, heavy_tailed, low_rank_plus_noise };
enum class ActDist { iid_gaussian, correlated };

struct WeightSpec {
    WeightDist kind = WeightDist::gaussian;
    int dof = 5;                 // heavy_tailed: Student-t degrees of freedom
    std::size_t rank = 8;        // low_rank_plus_noise
    double noise_std = 0.1;      // low_rank_plus_noise
};

struct ActSpec {
    ActDist kind = ActDist::iid_gaussian;
    double rho = 0.0;            // correlated: uniform pairwise correlation in [0, 1)
};

/// Synthetic stand-in for one weight matrix and its calibration activations.
struct SynthSpec {
    std::size_t m = 256;
    std::size_t n = 256;
    WeightSpec weights;
    ActSpec acts;
    std::size_t samples = 2000;
    std::uint64_t seed = 0;
    std::size_t batch_cols = 250;

    /// Throws InvalidArgument naming the offending field.
    void validate() const;
    /// Stable textual identifier used in reports.
    std::string id() const;
};

struct SynthInstance {
    Matrix w;                         // m x n
    std::vector<Matrix> act_batches;  // n x batch_cols each, s columns in total
};

SynthInstance gen_instance(const SynthSpec& spec);

/// Lower Cholesky factor of (1 - rho) I + rho 11ᵀ.
Matrix uniform_correlation_factor(std::size_t n, double rho);

/// n x count standard normal draws.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);

/// n x count activations; correlated ones are L z with L from uniform_correlation_factor.
Matrix sample_activations(std::size_t n, std::size_t count, const ActSpec& acts, Rng& rng);

/// Horizontal concatenation of equal-height blocks.
Matrix hconcat(const std::vector<Matrix>& blocks);

} // namespace qainit
