#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qainit/calibration.hpp"
#include "qainit/initializer.hpp"
#include "qainit/pipeline.hpp"
#include "qainit/quantizer.hpp"
#include "qainit/synth.hpp"

namespace qainit {

/// y = W2 tanh(W1 x). W1 is hidden x in, W2 is out x hidden.
struct TinyModel {
    Matrix w1;
    Matrix w2;

    Matrix forward(const Matrix& x) const;
    /// Input activations seen by each layer on inputs x (columns).
    std::array<Matrix, 2> layer_inputs(const Matrix& x) const;
};

TinyModel make_tiny_model(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);

/// Teacher-matching regression: a student with frozen quantized weights plus
/// trainable low-rank factors learns to reproduce the teacher's outputs.
struct ProxyTask {
    TinyModel teacher;
    std::array<Matrix, 2> frozen;  // dequantized Q per layer
    Matrix train_inputs;
    Matrix eval_inputs;
};

struct ProxyOptions {
    std::size_t steps = 500;
    double lr = 2e-4;
    std::size_t eval_interval = 25;
};

/// 1/2 mean over columns of ||student(x) - teacher(x)||^2.
double proxy_loss(const ProxyTask& task, std::span<const LoraPair> pairs, const Matrix& inputs);

/// Full-batch gradient descent on A and B of both layers. Returns the held-out
/// loss at step 0 and after every `eval_interval` steps (and at the final step).
/// Throws NumericError when the loss exceeds 1e6.
std::vector<double> finetune_proxy(const ProxyTask& task, std::span<const LoraPair> init, const ProxyOptions& options);

struct ProxySpec {
    std::size_t in = 64;
    std::size_t hidden = 128;
    std::size_t out = 64;
    std::size_t samples = 2000;     // calibration columns
    std::size_t train = 512;
    std::size_t eval = 512;
    double rho = 0.5;               // input correlation
    int bits = 4;
    std::uint64_t seed = 0;
};

/// Teacher, quantized layers and their calibration statistics.
struct ProxyInstance {
    ProxyTask task;
    std::array<Matrix, 2> delta;
    std::array<CorrelationMatrix, 2> h;
};

ProxyInstance make_proxy_instance(const ProxySpec& spec);

/// Per-layer initialization for `method`.
std::array<LoraPair, 2> proxy_init(const ProxyInstance& inst, Method method, std::size_t rank, std::size_t iters,
                                   std::uint64_t seed);

} // namespace qainit
