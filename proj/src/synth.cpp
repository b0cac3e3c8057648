#include "qainit/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

void SynthSpec::validate() const {
    if (m < 1) throw InvalidArgument("m: must be >= 1");
    if (n < 1) throw InvalidArgument("n: must be >= 1");
    if (samples < 1) throw InvalidArgument("samples: must be >= 1");
    if (batch_cols < 1) throw InvalidArgument("batch_cols: must be >= 1");
    if (acts.kind == ActDist::correlated && !(acts.rho >= 0.0 && acts.rho < 1.0)) {
        throw InvalidArgument(fmt::format("acts.rho: {} outside [0, 1)", acts.rho));
    }
    if (weights.kind == WeightDist::heavy_tailed && weights.dof < 1) throw InvalidArgument("weights.dof: must be >= 1");
    if (weights.kind == WeightDist::low_rank_plus_noise) {
        if (weights.rank < 1 || weights.rank > std::min(m, n)) {
            throw InvalidArgument(fmt::format("weights.rank: {} outside [1, {}]", weights.rank, std::min(m, n)));
        }
        if (!(weights.noise_std >= 0.0)) throw InvalidArgument("weights.noise_std: must be >= 0");
    }
}

std::string SynthSpec::id() const {
    std::string w;
    switch (weights.kind) {
    case WeightDist::gaussian: w = "gauss"; break;
    case WeightDist::heavy_tailed: w = fmt::format("t{}", weights.dof); break;
    case WeightDist::low_rank_plus_noise: w = fmt::format("lr{}n{}", weights.rank, weights.noise_std); break;
    }
    const std::string a = acts.kind == ActDist::iid_gaussian ? "iid" : fmt::format("rho{}", acts.rho);
    return fmt::format("{}x{}-{}-{}-s{}-seed{}", m, n, w, a, samples, seed);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
    Matrix out(rows, cols);
    for (double& v : out.data()) v = stddev * rng.normal();
    return out;
}

Matrix uniform_correlation_factor(std::size_t n, double rho) {
    Matrix c(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) c(i, j) = i == j ? 1.0 : rho;
    auto l = cholesky(c);
    if (!l) throw NumericError(fmt::format("uniform correlation matrix with rho={} is not positive definite", rho));
    return *l;
}

Matrix sample_activations(std::size_t n, std::size_t count, const ActSpec& acts, Rng& rng) {
    Matrix z = gaussian_matrix(n, count, rng);
    if (acts.kind == ActDist::iid_gaussian || acts.rho == 0.0) return z;
    return matmul(uniform_correlation_factor(n, acts.rho), z);
}

Matrix hconcat(const std::vector<Matrix>& blocks) {
    if (blocks.empty()) return {};
    const std::size_t rows = blocks.front().rows();
    std::size_t cols = 0;
    for (const auto& b : blocks) {
        if (b.rows() != rows) throw ShapeError("hconcat: blocks differ in height");
        cols += b.cols();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(at));
        at += b.cols();
    }
    return out;
}

namespace {

Matrix gen_weights(const SynthSpec& spec, Rng& rng) {
    switch (spec.weights.kind) {
    case WeightDist::gaussian: return gaussian_matrix(spec.m, spec.n, rng);
    case WeightDist::heavy_tailed: {
        Matrix w(spec.m, spec.n);
        const int dof = spec.weights.dof;
        for (double& v : w.data()) {
            const double z = rng.normal();
            double chi2 = 0.0;
            for (int k = 0; k < dof; ++k) {
                const double g = rng.normal();
                chi2 += g * g;
            }
            v = z / std::sqrt(chi2 / dof);
        }
        return w;
    }
    case WeightDist::low_rank_plus_noise: {
        const std::size_t k = spec.weights.rank;
        const Matrix left = gaussian_matrix(spec.m, k, rng);
        const Matrix right = gaussian_matrix(spec.n, k, rng, 1.0 / std::sqrt(static_cast<double>(k)));
        Matrix w = matmul_nt(left, right);
        if (spec.weights.noise_std > 0.0) w += gaussian_matrix(spec.m, spec.n, rng, spec.weights.noise_std);
        return w;
    }
    }
    throw InvalidArgument("unknown weight distribution");
}

} // namespace

SynthInstance gen_instance(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SynthInstance out;
    out.w = gen_weights(spec, rng);

    const Matrix factor = spec.acts.kind == ActDist::correlated && spec.acts.rho != 0.0
                              ? uniform_correlation_factor(spec.n, spec.acts.rho)
                              : Matrix();
    for (std::size_t done = 0; done < spec.samples; done += spec.batch_cols) {
        const std::size_t cols = std::min(spec.batch_cols, spec.samples - done);
        Matrix z = gaussian_matrix(spec.n, cols, rng);
        out.act_batches.push_back(factor.empty() ? std::move(z) : matmul(factor, z));
    }
    return out;
}

} // namespace qainit
