#include "qainit/finetune_proxy.hpp"

#include <cmath>

#include <fmt/format.h>

#include "qainit/errors.hpp"

namespace qainit {

namespace {

void apply_tanh(Matrix& m) {
    for (double& v : m.data()) v = std::tanh(v);
}

struct Student {
    Matrix w1;
    Matrix w2;
};

Student assemble(const ProxyTask& task, std::span<const LoraPair> pairs) {
    return {task.frozen[0] + pairs[0].product(), task.frozen[1] + pairs[1].product()};
}

void check_pairs(const ProxyTask& task, std::span<const LoraPair> pairs) {
    if (pairs.size() != 2) throw ShapeError(fmt::format("proxy: expected 2 layer pairs, got {}", pairs.size()));
    for (std::size_t l = 0; l < 2; ++l) {
        if (pairs[l].a.rows() != task.frozen[l].rows() || pairs[l].b.rows() != task.frozen[l].cols()) {
            throw ShapeError(fmt::format("proxy: layer {} factors do not fit a {}x{} weight", l, task.frozen[l].rows(),
                                         task.frozen[l].cols()));
        }
    }
}

double mean_half_sq(const Matrix& diff) { return 0.5 * diff.squared_norm() / static_cast<double>(diff.cols()); }

} // namespace

Matrix TinyModel::forward(const Matrix& x) const {
    Matrix z = matmul(w1, x);
    apply_tanh(z);
    return matmul(w2, z);
}

std::array<Matrix, 2> TinyModel::layer_inputs(const Matrix& x) const {
    Matrix z = matmul(w1, x);
    apply_tanh(z);
    return {x, std::move(z)};
}

TinyModel make_tiny_model(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed) {
    Rng rng(seed);
    TinyModel m;
    m.w1 = gaussian_matrix(hidden, in, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    m.w2 = gaussian_matrix(out, hidden, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
    return m;
}

double proxy_loss(const ProxyTask& task, std::span<const LoraPair> pairs, const Matrix& inputs) {
    check_pairs(task, pairs);
    const Student s = assemble(task, pairs);
    Matrix z = matmul(s.w1, inputs);
    apply_tanh(z);
    const Matrix diff = matmul(s.w2, z) - task.teacher.forward(inputs);
    return mean_half_sq(diff);
}

std::vector<double> finetune_proxy(const ProxyTask& task, std::span<const LoraPair> init, const ProxyOptions& options) {
    check_pairs(task, init);
    if (options.eval_interval < 1) throw InvalidArgument("eval_interval: must be >= 1");
    if (!(options.lr >= 0.0) || !std::isfinite(options.lr)) throw InvalidArgument("lr: must be finite and >= 0");

    std::array<LoraPair, 2> pairs = {init[0], init[1]};
    const Matrix target = task.teacher.forward(task.train_inputs);
    const double inv_n = 1.0 / static_cast<double>(task.train_inputs.cols());

    std::vector<double> curve;
    auto record = [&] {
        const double loss = proxy_loss(task, pairs, task.eval_inputs);
        if (!(loss <= 1e6)) throw NumericError(fmt::format("proxy: loss diverged ({}) after {} points", loss, curve.size()));
        curve.push_back(loss);
    };
    record();

    for (std::size_t step = 1; step <= options.steps; ++step) {
        const Student s = assemble(task, pairs);
        Matrix z = matmul(s.w1, task.train_inputs);
        apply_tanh(z);
        Matrix dy = matmul(s.w2, z) - target;
        dy *= inv_n;

        const Matrix grad_w2 = matmul_nt(dy, z);           // out x hidden
        Matrix dz = matmul_tn(s.w2, dy);                   // hidden x N
        auto dzv = dz.data();
        const auto zv = z.data();
        for (std::size_t i = 0; i < dzv.size(); ++i) dzv[i] *= 1.0 - zv[i] * zv[i];
        const Matrix grad_w1 = matmul_nt(dz, task.train_inputs); // hidden x in

        const std::array<const Matrix*, 2> grads = {&grad_w1, &grad_w2};
        for (std::size_t l = 0; l < 2; ++l) {
            // d/dA of <G, A Bᵀ> is G B; d/dB is Gᵀ A.
            const Matrix grad_a = matmul(*grads[l], pairs[l].b);
            const Matrix grad_b = matmul_tn(*grads[l], pairs[l].a);
            pairs[l].a -= options.lr * grad_a;
            pairs[l].b -= options.lr * grad_b;
        }
        if (step % options.eval_interval == 0 || step == options.steps) record();
    }
    return curve;
}

ProxyInstance make_proxy_instance(const ProxySpec& spec) {
    if (spec.in < 1 || spec.hidden < 1 || spec.out < 1) throw InvalidArgument("proxy: dims must be >= 1");
    if (spec.in > 256 || spec.hidden > 256 || spec.out > 256) throw InvalidArgument("proxy: dims must be <= 256");
    if (!(spec.rho >= 0.0 && spec.rho < 1.0)) throw InvalidArgument("proxy: rho outside [0, 1)");
    if (spec.samples < 1 || spec.train < 1 || spec.eval < 1) throw InvalidArgument("proxy: sample counts must be >= 1");

    ProxyInstance inst;
    inst.task.teacher = make_tiny_model(spec.in, spec.hidden, spec.out, spec.seed);
    const QuantConfig qc = harness_quant_config(spec.bits);
    const std::array<const Matrix*, 2> weights = {&inst.task.teacher.w1, &inst.task.teacher.w2};
    for (std::size_t l = 0; l < 2; ++l) {
        const QuantizedTensor q = quantize(*weights[l], qc);
        inst.task.frozen[l] = dequantize(q, &nf4_codebook());
        inst.delta[l] = *weights[l] - inst.task.frozen[l];
    }

    Rng rng(spec.seed ^ 0xA5A5A5A5A5A5A5A5ull);
    const ActSpec acts{ActDist::correlated, spec.rho};
    const Matrix calib = sample_activations(spec.in, spec.samples, acts, rng);
    inst.task.train_inputs = sample_activations(spec.in, spec.train, acts, rng);
    inst.task.eval_inputs = sample_activations(spec.in, spec.eval, acts, rng);

    // Calibration uses the full-precision teacher's activations at each layer.
    const auto inputs = inst.task.teacher.layer_inputs(calib);
    for (std::size_t l = 0; l < 2; ++l) {
        CorrAccumulator acc(inputs[l].rows());
        acc.accumulate(inputs[l]);
        inst.h[l] = acc.finalize_guarded();
    }
    return inst;
}

std::array<LoraPair, 2> proxy_init(const ProxyInstance& inst, Method method, std::size_t rank, std::size_t iters,
                                   std::uint64_t seed) {
    std::array<LoraPair, 2> out;
    for (std::size_t l = 0; l < 2; ++l) {
        const Matrix& d = inst.delta[l];
        if (method == Method::baseline) {
            out[l] = baseline_init(d.rows(), d.cols(), rank, seed + l);
        } else {
            InitOptions options;
            options.rank = rank;
            options.iters = iters;
            options.layer_name = fmt::format("layer{}", l);
            out[l] = quant_aware_init_delta(d, inst.h[l], options).pair;
        }
    }
    return out;
}

} // namespace qainit
