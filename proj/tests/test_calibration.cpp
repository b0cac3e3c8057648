#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "qainit/calibration.hpp"
#include "qainit/errors.hpp"

using namespace qainit;

TEST_CASE("single column accumulates its outer product") {
    const Matrix x = Matrix::from_rows({{1}, {-2}, {3}});
    CorrAccumulator acc(3);
    acc.accumulate(x);
    CHECK(acc.samples_seen() == 1);
    CHECK(acc.sum() == oracle::naive_matmul(x, oracle::naive_transpose(x)));
}

TEST_CASE("accumulation is additive over batches") {
    qainit::Rng rng(1);
    const Matrix b1 = oracle::random_matrix(5, 7, rng);
    const Matrix b2 = oracle::random_matrix(5, 4, rng);
    CorrAccumulator split(5), joined(5);
    split.accumulate(b1);
    split.accumulate(b2);
    Matrix both(5, 11);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 7; ++j) both(i, j) = b1(i, j);
        for (std::size_t j = 0; j < 4; ++j) both(i, 7 + j) = b2(i, j);
    }
    joined.accumulate(both);
    CHECK(split.samples_seen() == 11);
    CHECK(oracle::rel_diff(split.sum(), joined.sum()) <= 1e-14);
}

TEST_CASE("streamed sum matches the direct product") {
    qainit::Rng rng(2);
    const Matrix x = oracle::random_matrix(32, 2000, rng);
    CorrAccumulator acc(32);
    for (std::size_t c = 0; c < 2000; c += 250) acc.accumulate(x.col_block(c, 250));
    CHECK(oracle::rel_diff(acc.sum(), oracle::naive_matmul(x, oracle::naive_transpose(x))) <= 1e-9);
}

TEST_CASE("sum is exactly symmetric and PSD") {
    qainit::Rng rng(3);
    CorrAccumulator acc(9);
    for (int b = 0; b < 5; ++b) {
        acc.accumulate(oracle::random_matrix(9, 3, rng));
        const Matrix s = acc.sum();
        CHECK(s == s.transposed());
        const auto ev = oracle::sym_eigenvalues(s);
        CHECK(ev.back() >= -1e-8 * s.trace() / 9.0);
    }
}

TEST_CASE("batch order does not matter beyond rounding") {
    qainit::Rng rng(4);
    std::vector<Matrix> batches;
    for (int b = 0; b < 6; ++b) batches.push_back(oracle::random_matrix(6, 20, rng));
    CorrAccumulator fwd(6), rev(6);
    for (const auto& b : batches) fwd.accumulate(b);
    for (auto it = batches.rbegin(); it != batches.rend(); ++it) rev.accumulate(*it);
    CHECK(oracle::rel_diff(fwd.sum(), rev.sum()) <= 1e-9);
}

TEST_CASE("merge equals sequential accumulation") {
    qainit::Rng rng(5);
    const Matrix b1 = oracle::random_matrix(4, 10, rng);
    const Matrix b2 = oracle::random_matrix(4, 10, rng);
    CorrAccumulator a(4), b(4), seq(4);
    a.accumulate(b1);
    b.accumulate(b2);
    a.merge(b);
    seq.accumulate(b1);
    seq.accumulate(b2);
    CHECK(a.samples_seen() == 20);
    CHECK(oracle::rel_diff(a.sum(), seq.sum()) <= 1e-15);
    CHECK_THROWS_AS(a.merge(CorrAccumulator(3)), ShapeError);
}

TEST_CASE("dimension mismatch is a shape error") {
    CorrAccumulator acc(4);
    CHECK_THROWS_AS(acc.accumulate(Matrix(3, 2)), ShapeError);
}

TEST_CASE("finalize without damping returns the sum") {
    qainit::Rng rng(6);
    CorrAccumulator acc(5);
    acc.accumulate(oracle::random_matrix(5, 8, rng));
    const CorrelationMatrix h = acc.finalize(0.0);
    CHECK(h.h == acc.sum());
    CHECK(h.damping_lambda == 0.0);
    CHECK(h.samples == 8);
}

TEST_CASE("finalize damping uses the mean diagonal") {
    CorrAccumulator acc(4);
    acc.accumulate(Matrix::identity(4));
    const CorrelationMatrix h = acc.finalize(0.01);
    CHECK(h.damping_lambda == doctest::Approx(0.01));
    CHECK(oracle::fro_diff(h.h, 1.01 * Matrix::identity(4)) <= 1e-15);
}

TEST_CASE("damped H has minimum eigenvalue at least lambda") {
    qainit::Rng rng(7);
    CorrAccumulator acc(10);
    acc.accumulate(oracle::random_matrix(10, 4, rng));  // rank 4: singular sum
    const CorrelationMatrix h = acc.finalize(0.05);
    const auto ev = oracle::sym_eigenvalues(h.h);
    CHECK(ev.back() >= h.damping_lambda - 1e-9);
    for (std::size_t i = 0; i < 10; ++i) CHECK(h.h(i, i) >= 0.0);
}

TEST_CASE("finalize errors") {
    CorrAccumulator acc(3);
    CHECK_THROWS_AS(acc.finalize(0.0), DegenerateStatisticsError);
    CHECK_THROWS_AS(acc.finalize(-0.1), InvalidArgument);
    CHECK_THROWS_AS(CorrAccumulator(0), InvalidArgument);
}

TEST_CASE("guarded finalize damps only singular statistics") {
    qainit::Rng rng(8);
    CorrAccumulator full(6), thin(6);
    full.accumulate(oracle::random_matrix(6, 30, rng));
    thin.accumulate(oracle::random_matrix(6, 3, rng));
    const CorrelationMatrix hf = full.finalize_guarded();
    CHECK(hf.damping_lambda == 0.0);
    CHECK(hf.h == full.sum());
    const CorrelationMatrix ht = thin.finalize_guarded();
    CHECK(ht.damping_lambda == doctest::Approx(0.01 * thin.sum().trace() / 6.0));
}

TEST_CASE("white activations give H/s near identity") {
    qainit::Rng rng(2000);
    CorrAccumulator acc(8);
    acc.accumulate(oracle::random_matrix(8, 10000, rng));
    const Matrix hs = (1.0 / 10000.0) * acc.sum();
    CHECK(oracle::fro_diff(hs, Matrix::identity(8)) <= 0.15);
}

TEST_CASE("from_matrix wraps a symmetric matrix") {
    const CorrelationMatrix h = CorrelationMatrix::from_matrix(3.0 * Matrix::identity(4), 12);
    CHECK(h.dim() == 4);
    CHECK(h.samples == 12);
    CHECK_THROWS_AS(CorrelationMatrix::from_matrix(Matrix(2, 3)), ShapeError);
}
