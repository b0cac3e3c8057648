#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "qainit/calibration.hpp"
#include "qainit/container.hpp"
#include "qainit/errors.hpp"
#include "qainit/finetune_proxy.hpp"
#include "qainit/gap_metrics.hpp"
#include "qainit/initializer.hpp"
#include "qainit/pipeline.hpp"
#include "qainit/quant_io.hpp"
#include "qainit/quantizer.hpp"
#include "qainit/report.hpp"
#include "qainit/synth.hpp"

namespace qainit::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return "--" + key;
}

template <class T>
T from_config(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw UsageError(fmt::format("{}: expected a string", path));
        return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw UsageError(fmt::format("{}: expected true or false", path));
        return v.get<bool>();
    } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw UsageError(fmt::format("{}: expected a number", path));
        return v.get<double>();
    } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw UsageError(fmt::format("{}: expected an integer", path));
        return v.get<int>();
    } else if constexpr (std::is_same_v<T, std::size_t>) {
        if (!v.is_number_unsigned()) throw UsageError(fmt::format("{}: expected a non-negative integer", path));
        return v.get<std::size_t>();
    } else {
        static_assert(std::is_same_v<T, std::vector<std::size_t>>);
        if (!v.is_array()) throw UsageError(fmt::format("{}: expected an array", path));
        T out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(from_config<std::size_t>(v[i], fmt::format("{}[{}]", path, i)));
        return out;
    }
}

/// Options of one subcommand, each settable by flag or by a key of the same
/// name in a JSON config file. Flags win over the file.
class Bindings {
public:
    explicit Bindings(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON file with default values for this command's options");
    }

    template <class T>
    CLI::Option* bind(const std::string& key, T& target, const std::string& description) {
        CLI::Option* opt = app_->add_option(dashed(key), target, description);
        if constexpr (!std::is_same_v<T, std::vector<std::size_t>>) {
            opt->capture_default_str();
        } else {
            opt->delimiter(',');
        }
        entries_.emplace(key, Entry{opt, [&target](const json& v, const std::string& path) { target = from_config<T>(v, path); }});
        return opt;
    }

    /// Applies config values under the flags actually given.
    void merge() {
        if (config_path_.empty()) return;
        std::ifstream f(config_path_);
        if (!f) throw IoError(fmt::format("cannot read config '{}'", config_path_));
        json cfg;
        try {
            cfg = json::parse(f);
        } catch (const json::parse_error& e) {
            throw UsageError(fmt::format("config: not valid JSON ({})", e.what()));
        }
        if (!cfg.is_object()) throw UsageError("config: expected a JSON object at top level");
        for (const auto& [key, value] : cfg.items()) {
            auto it = entries_.find(key);
            if (it == entries_.end()) throw UsageError(fmt::format("config.{}: unknown field", key));
            if (it->second.opt->count() > 0) continue;
            it->second.set(value, "config." + key);
            from_config_.insert(key);
        }
    }

    bool provided(const std::string& key) const {
        const auto it = entries_.find(key);
        return from_config_.contains(key) || (it != entries_.end() && it->second.opt->count() > 0);
    }

    /// Where a value came from, for diagnostics.
    std::string where(const std::string& key) const { return from_config_.contains(key) ? "config." + key : dashed(key); }

    void require(const std::string& key) const {
        if (!provided(key)) throw UsageError(fmt::format("{} is required", dashed(key)));
    }

private:
    struct Entry {
        CLI::Option* opt;
        std::function<void(const json&, const std::string&)> set;
    };
    CLI::App* app_;
    std::string config_path_;
    std::map<std::string, Entry> entries_;
    std::set<std::string> from_config_;
};

// ---------------------------------------------------------------------------
// Synthetic instance flags shared by synth, demo and sweep.

struct SynthFlags {
    std::size_t m = 256;
    std::size_t n = 256;
    std::string weight_dist = "gaussian";
    int dof = 5;
    std::size_t signal_rank = 8;
    double noise_std = 0.1;
    std::string act_dist = "correlated";
    double rho = 0.5;
    std::size_t samples = 2000;
    std::size_t batch_cols = 250;

    void bind(Bindings& b) {
        b.bind("m", m, "Rows of each weight matrix");
        b.bind("n", n, "Columns of each weight matrix");
        b.bind("weight_dist", weight_dist, "gaussian | heavy_tailed | low_rank_plus_noise");
        b.bind("dof", dof, "Student-t degrees of freedom for heavy_tailed");
        b.bind("signal_rank", signal_rank, "Rank for low_rank_plus_noise");
        b.bind("noise_std", noise_std, "Noise level for low_rank_plus_noise");
        b.bind("act_dist", act_dist, "iid_gaussian | correlated");
        b.bind("rho", rho, "Uniform activation correlation for correlated activations");
        b.bind("samples", samples, "Calibration samples");
        b.bind("batch_cols", batch_cols, "Columns per activation batch");
    }

    SynthSpec to_spec(const Bindings& b, std::uint64_t seed) const {
        SynthSpec spec;
        if (m < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("m")));
        if (n < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("n")));
        spec.m = m;
        spec.n = n;
        if (weight_dist == "gaussian") {
            spec.weights.kind = WeightDist::gaussian;
        } else if (weight_dist == "heavy_tailed") {
            spec.weights.kind = WeightDist::heavy_tailed;
            if (dof < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("dof")));
        } else if (weight_dist == "low_rank_plus_noise") {
            spec.weights.kind = WeightDist::low_rank_plus_noise;
            if (signal_rank < 1 || signal_rank > std::min(m, n)) {
                throw UsageError(fmt::format("{}: must be in [1, {}]", b.where("signal_rank"), std::min(m, n)));
            }
            if (!(noise_std >= 0.0)) throw UsageError(fmt::format("{}: must be >= 0", b.where("noise_std")));
        } else {
            throw UsageError(fmt::format("{}: unknown distribution '{}'", b.where("weight_dist"), weight_dist));
        }
        spec.weights.dof = dof;
        spec.weights.rank = signal_rank;
        spec.weights.noise_std = noise_std;
        if (act_dist == "iid_gaussian") {
            spec.acts = {ActDist::iid_gaussian, 0.0};
        } else if (act_dist == "correlated") {
            if (!(rho >= 0.0 && rho < 1.0)) throw UsageError(fmt::format("{}: must be in [0, 1)", b.where("rho")));
            spec.acts = {ActDist::correlated, rho};
        } else {
            throw UsageError(fmt::format("{}: unknown distribution '{}'", b.where("act_dist"), act_dist));
        }
        if (samples < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("samples")));
        if (batch_cols < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("batch_cols")));
        spec.samples = samples;
        spec.batch_cols = batch_cols;
        spec.seed = seed;
        spec.validate();
        return spec;
    }
};

void check_bits(const Bindings& b, int bits) {
    if (bits != 4 && bits != 8) throw UsageError(fmt::format("{}: must be 4 or 8", b.where("bits")));
}

void check_rank(const Bindings& b, const std::string& key, std::size_t rank, std::size_t limit) {
    if (rank < 1 || rank > limit) throw UsageError(fmt::format("{}: {} outside [1, {}]", b.where(key), rank, limit));
}

fs::path prepare_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir, ec.message()));
    return fs::path(dir);
}

// ---------------------------------------------------------------------------

struct QuantizeCmd {
    std::string input, output;
    int bits = 4;
    std::size_t block_size = 64;
    std::string double_quant;

    void setup(CLI::App* app, Bindings& b) {
        b.bind("input", input, "Container with 'w/<layer>' weight tensors");
        b.bind("output", output, "Quantized container to write");
        b.bind("bits", bits, "4 (NF4) or 8 (absmax INT8)");
        b.bind("block_size", block_size, "Elements per quantization block");
        b.bind("double_quant", double_quant, "on | off (default on for 4-bit)");
        (void)app;
    }

    int run(const Bindings& b, std::ostream& out) const {
        b.require("input");
        b.require("output");
        check_bits(b, bits);
        if (block_size < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("block_size")));
        bool dq = bits == 4;
        if (!double_quant.empty()) {
            if (double_quant != "on" && double_quant != "off") {
                throw UsageError(fmt::format("{}: expected on or off", b.where("double_quant")));
            }
            dq = double_quant == "on";
        }
        if (dq && bits != 4) throw UsageError("--double-quant on applies to 4-bit scales only; use --bits 4 or --double-quant off");

        const TensorContainer in = read_container(input);
        std::vector<std::string> names = in.names_with_prefix("w/");
        if (names.empty()) throw UsageError(fmt::format("no weight tensors ('w/<layer>') in '{}'", input));

        const QuantConfig config{bits, block_size, dq, 256};
        TensorContainer result;
        std::string csv = "tensor,frobenius_error\n";
        for (const auto& name : names) {
            const Matrix w = to_matrix(in.at(name));
            const QuantizedTensor q = quantize(w, config);
            const std::string layer = name.substr(2);
            store_quantized(result, layer, q);
            csv += fmt::format("{},{}\n", layer, format_real(quant_error(w, q).frobenius_norm()));
        }
        write_container(output, result);
        out << csv;
        return kOk;
    }
};

struct CalibrateCmd {
    std::string acts, output;
    std::size_t samples = 2000;
    double damping = 0.01;

    void setup(CLI::App*, Bindings& b) {
        b.bind("acts", acts, "Container with 'acts/<layer>/<batch>' activation batches (columns are samples)");
        b.bind("output", output, "Container to write 'h/<layer>' statistics into");
        b.bind("samples", samples, "Maximum calibration samples per layer");
        b.bind("damping", damping, "Damping fraction applied only when X Xᵀ is singular");
    }

    int run(const Bindings& b, std::ostream& out) const {
        b.require("acts");
        b.require("output");
        if (samples < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("samples")));
        if (!(damping >= 0.0) || !std::isfinite(damping)) throw UsageError(fmt::format("{}: must be finite and >= 0", b.where("damping")));

        const TensorContainer in = read_container(acts);
        std::map<std::string, std::vector<std::pair<std::size_t, std::string>>> layers;
        for (const auto& name : in.names_with_prefix("acts/")) {
            const auto slash = name.rfind('/');
            const std::string layer = name.substr(5, slash - 5);
            const std::string idx = name.substr(slash + 1);
            std::size_t value = 0;
            const auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), value);
            if (layer.empty() || idx.empty() || ec != std::errc() || ptr != idx.data() + idx.size()) {
                throw UsageError(fmt::format("tensor '{}': expected 'acts/<layer>/<batch index>'", name));
            }
            layers[layer].emplace_back(value, name);
        }
        if (layers.empty()) throw UsageError(fmt::format("no activation batches ('acts/<layer>/<batch>') in '{}'", acts));

        TensorContainer result;
        std::string csv = "layer,samples,damping_lambda\n";
        for (auto& [layer, batches] : layers) {
            std::sort(batches.begin(), batches.end());
            std::optional<CorrAccumulator> acc;
            for (const auto& [idx, name] : batches) {
                const Matrix x = to_matrix(in.at(name));
                if (!acc) acc.emplace(x.rows());
                if (x.rows() != acc->dim()) {
                    throw UsageError(fmt::format("layer '{}': batch {} has {} rows, expected {}", layer, idx, x.rows(), acc->dim()));
                }
                const std::size_t remaining = samples - acc->samples_seen();
                if (remaining == 0) continue;
                acc->accumulate(x.cols() > remaining ? x.col_block(0, remaining) : x);
            }
            const CorrelationMatrix h = acc->finalize_guarded(damping);
            const double s = static_cast<double>(h.samples);
            result.add("h/" + layer, make_f64(h.h));
            result.add("h/" + layer + "/samples", make_f64_values(std::span(&s, 1), {1}));
            result.add("h/" + layer + "/damping", make_f64_values(std::span(&h.damping_lambda, 1), {1}));
            csv += fmt::format("{},{},{}\n", layer, h.samples, format_real(h.damping_lambda));
        }
        write_container(output, result);
        out << csv;
        return kOk;
    }
};

struct InitCmd {
    std::string weights, quantized, hstats, output, report;
    std::size_t rank = kDefaultRank;
    std::size_t iters = kDefaultIters;
    double alpha = kDefaultAlpha;

    void setup(CLI::App*, Bindings& b) {
        b.bind("weights", weights, "Container with 'w/<layer>' full-precision weights");
        b.bind("quantized", quantized, "Container written by 'quantize'");
        b.bind("hstats", hstats, "Container written by 'calibrate'");
        b.bind("output", output, "Container to write 'lora/<layer>/{A,B}' into");
        b.bind("report", report, "CSV path for per-layer objective traces");
        b.bind("rank", rank, "LoRA rank");
        b.bind("iters", iters, "Alternating optimization steps");
        b.bind("alpha", alpha, "LoRA alpha recorded with the factors");
    }

    int run(const Bindings& b, std::ostream& out) const {
        for (const char* key : {"weights", "quantized", "hstats", "output"}) b.require(key);
        if (rank < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("rank")));
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError(fmt::format("{}: must be finite and > 0", b.where("alpha")));

        const TensorContainer wc = read_container(weights);
        const TensorContainer qc = read_container(quantized);
        const TensorContainer hc = read_container(hstats);
        const std::vector<std::string> layers = quantized_layers(qc);
        if (layers.empty()) throw UsageError(fmt::format("no quantized layers in '{}'", quantized));

        TensorContainer result;
        std::vector<InitReport> reports;
        std::string csv = "layer,initial_objective,final_objective\n";
        for (const auto& layer : layers) {
            const TensorEntry* w_entry = wc.find("w/" + layer);
            if (!w_entry) throw UsageError(fmt::format("layer '{}': no weights ('w/{}') in '{}'", layer, layer, weights));
            const TensorEntry* h_entry = hc.find("h/" + layer);
            if (!h_entry) throw UsageError(fmt::format("layer '{}': no H statistics ('h/{}') in '{}'", layer, layer, hstats));
            const Matrix w = to_matrix(*w_entry);
            const QuantizedTensor q = load_quantized(qc, layer);
            std::size_t s = 0;
            if (const TensorEntry* se = hc.find("h/" + layer + "/samples")) {
                const auto v = to_f64_values(*se);
                if (v.size() == 1 && v[0] >= 0.0) s = static_cast<std::size_t>(v[0]);
            }
            const CorrelationMatrix h = CorrelationMatrix::from_matrix(to_matrix(*h_entry), s);
            if (h.dim() != w.cols()) {
                throw UsageError(fmt::format("layer '{}': H is {}x{} but the weight has {} columns", layer, h.dim(), h.dim(), w.cols()));
            }
            check_rank(b, "rank", rank, std::min(w.rows(), w.cols()));

            InitOptions options;
            options.rank = rank;
            options.iters = iters;
            options.alpha = alpha;
            options.layer_name = layer;
            InitResult r = quant_aware_init(w, q, h, options);
            result.add("lora/" + layer + "/A", make_f64(r.pair.a));
            result.add("lora/" + layer + "/B", make_f64(r.pair.b));
            csv += fmt::format("{},{},{}\n", layer, format_real(r.report.objective_trace.front()),
                               format_real(r.report.objective_trace.back()));
            reports.push_back(std::move(r.report));
        }
        write_container(output, result);
        if (!report.empty()) write_text_file(report, trace_csv(reports));
        out << csv;
        return kOk;
    }
};

struct SynthCmd {
    SynthFlags synth;
    std::uint64_t seed = 0;
    std::size_t layers = 2;
    std::string weights_out, acts_out;

    void setup(CLI::App*, Bindings& b) {
        synth.bind(b);
        b.bind("seed", seed, "Base seed; layer i uses seed + i");
        b.bind("layers", layers, "Number of layers");
        b.bind("weights_out", weights_out, "Container to write 'w/layer<i>' into");
        b.bind("acts_out", acts_out, "Container to write 'acts/layer<i>/<batch>' into");
    }

    int run(const Bindings& b, std::ostream& out) const {
        for (const char* key : {"seed", "weights_out", "acts_out"}) b.require(key);
        if (layers < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("layers")));
        TensorContainer wc, ac;
        std::string csv = "layer,m,n,batches\n";
        for (std::size_t i = 0; i < layers; ++i) {
            const SynthSpec spec = synth.to_spec(b, seed + i);
            const SynthInstance inst = gen_instance(spec);
            const std::string layer = fmt::format("layer{}", i);
            wc.add("w/" + layer, make_f64(inst.w));
            for (std::size_t k = 0; k < inst.act_batches.size(); ++k) {
                ac.add(fmt::format("acts/{}/{}", layer, k), make_f64(inst.act_batches[k]));
            }
            csv += fmt::format("{},{},{},{}\n", layer, spec.m, spec.n, inst.act_batches.size());
        }
        write_container(weights_out, wc);
        write_container(acts_out, ac);
        out << csv;
        return kOk;
    }
};

std::vector<std::pair<double, double>> curve_points(const std::vector<double>& curve, std::size_t interval, std::size_t steps) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        pts.emplace_back(static_cast<double>(std::min(i * interval, steps)), curve[i]);
    }
    return pts;
}

struct DemoCmd {
    SynthFlags synth;
    std::uint64_t seed = 0;
    std::string out_dir;
    int bits = 4;
    std::size_t rank = kDefaultRank;
    std::size_t iters = kDefaultIters;
    std::size_t proxy_rank = 8;
    std::size_t proxy_steps = 500;
    double lr = 2e-4;
    std::size_t eval_interval = 25;

    void setup(CLI::App*, Bindings& b) {
        synth.bind(b);
        b.bind("seed", seed, "Seed for the synthetic layer and the proxy model");
        b.bind("out_dir", out_dir, "Directory for demo.csv, demo.json, demo_trace.csv and SVG charts");
        b.bind("bits", bits, "4 or 8");
        b.bind("rank", rank, "LoRA rank on the synthetic layer");
        b.bind("iters", iters, "Alternating optimization steps");
        b.bind("proxy_rank", proxy_rank, "LoRA rank in the fine-tuning proxy");
        b.bind("proxy_steps", proxy_steps, "Gradient steps in the fine-tuning proxy");
        b.bind("lr", lr, "Proxy learning rate");
        b.bind("eval_interval", eval_interval, "Proxy evaluation interval in steps");
    }

    int run(const Bindings& b, std::ostream& out) const {
        b.require("seed");
        b.require("out_dir");
        check_bits(b, bits);
        const SynthSpec spec = synth.to_spec(b, seed);
        check_rank(b, "rank", rank, std::min(spec.m, spec.n));
        ProxySpec ps;
        ps.seed = seed;
        ps.bits = bits;
        ps.rho = spec.acts.rho;
        check_rank(b, "proxy_rank", proxy_rank, std::min({ps.in, ps.hidden, ps.out}));
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError(fmt::format("{}: must be finite and >= 0", b.where("lr")));
        if (eval_interval < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("eval_interval")));

        const PreparedInstance p = prepare_instance(spec, bits);
        const TruncatedSVD svd = svd_truncated(p.delta, rank);
        ExperimentReport report;
        report.rows.push_back(evaluate(p, Method::baseline, rank, iters, &svd));
        report.rows.push_back(evaluate(p, Method::quailora, rank, iters, &svd));
        InitOptions options;
        options.rank = rank;
        options.iters = iters;
        options.layer_name = p.config_id;
        const InitReport trace = quant_aware_init_delta(p.delta, svd, p.h, options).report;
        report.summary.emplace_back("ratio", report.rows[1].calibrated_error / report.rows[0].calibrated_error);

        const ProxyInstance proxy = make_proxy_instance(ps);
        const ProxyOptions po{proxy_steps, lr, eval_interval};
        std::vector<ChartSeries> proxy_series;
        for (auto& row : report.rows) {
            const auto init = proxy_init(proxy, row.method, proxy_rank, iters, seed);
            row.proxy_loss_curve = finetune_proxy(proxy.task, init, po);
            proxy_series.push_back({std::string(method_name(row.method)), row.method == Method::baseline ? "#d62728" : "#1f77b4",
                                    curve_points(row.proxy_loss_curve, eval_interval, proxy_steps)});
        }

        std::vector<std::pair<double, double>> trace_pts;
        for (std::size_t i = 0; i < trace.objective_trace.size(); ++i) trace_pts.emplace_back(static_cast<double>(i), trace.objective_trace[i]);
        const std::vector<ChartSeries> trace_series = {{"quailora", "#1f77b4", std::move(trace_pts)}};

        const fs::path dir = prepare_out_dir(out_dir);
        const std::string csv = experiment_csv(report);
        write_text_file(dir / "demo.csv", csv);
        write_text_file(dir / "demo.json", experiment_json(report));
        write_text_file(dir / "demo_trace.csv", trace_csv(std::span(&trace, 1)));
        write_text_file(dir / "demo_trace.svg",
                        render_svg_chart({"Calibrated objective", "iteration", "objective", false}, trace_series));
        write_text_file(dir / "demo_proxy.svg", render_svg_chart({"Proxy fine-tuning loss", "step", "held-out loss", false}, proxy_series));
        out << csv;
        return kOk;
    }
};

struct SweepCmd {
    SynthFlags synth;
    std::uint64_t seed = 0;
    std::size_t seeds = 1;
    std::string out_dir;
    int bits = 4;
    std::size_t iters = kDefaultIters;
    std::vector<std::size_t> ranks{std::begin(kDefaultSweepRanks), std::end(kDefaultSweepRanks)};

    void setup(CLI::App*, Bindings& b) {
        synth.bind(b);
        b.bind("seed", seed, "Base seed; run k uses seed + k");
        b.bind("seeds", seeds, "Number of seeds to average");
        b.bind("out_dir", out_dir, "Directory for sweep.csv, sweep.json and sweep.svg");
        b.bind("bits", bits, "4 or 8");
        b.bind("iters", iters, "Alternating optimization steps");
        b.bind("ranks", ranks, "Ascending LoRA ranks (comma separated)");
    }

    int run(const Bindings& b, std::ostream& out) const {
        b.require("seed");
        b.require("out_dir");
        check_bits(b, bits);
        if (seeds < 1) throw UsageError(fmt::format("{}: must be >= 1", b.where("seeds")));
        const SynthSpec base = synth.to_spec(b, seed);
        if (ranks.empty()) throw UsageError(fmt::format("{}: must not be empty", b.where("ranks")));
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            const std::string path = fmt::format("{}[{}]", b.where("ranks"), i);
            if (ranks[i] < 1 || ranks[i] > std::min(base.m, base.n)) {
                throw UsageError(fmt::format("{}: {} outside [1, {}]", path, ranks[i], std::min(base.m, base.n)));
            }
            if (i > 0 && ranks[i] <= ranks[i - 1]) throw UsageError(fmt::format("{}: ranks must be strictly ascending", path));
        }

        std::vector<ExperimentReport> runs;
        for (std::size_t k = 0; k < seeds; ++k) {
            SynthSpec spec = base;
            spec.seed = seed + k;
            runs.push_back(rank_sweep(spec, bits, ranks, iters));
        }
        ExperimentReport mean = average_reports(runs, "mean");
        const auto gains = marginal_gain_per_rank(mean, Method::quailora);
        for (std::size_t i = 0; i < gains.size(); ++i) {
            mean.summary.emplace_back(fmt::format("gain_per_rank_r{}_r{}", ranks[i], ranks[i + 1]), gains[i]);
        }

        ExperimentReport all;
        for (const auto& r : runs) all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
        all.rows.insert(all.rows.end(), mean.rows.begin(), mean.rows.end());
        all.summary = mean.summary;

        std::vector<ChartSeries> series;
        for (Method m : {Method::baseline, Method::quailora}) {
            ChartSeries s{std::string(method_name(m)), m == Method::baseline ? "#d62728" : "#1f77b4", {}};
            for (std::size_t r : ranks) s.points.emplace_back(static_cast<double>(r), mean.find(m, r)->calibrated_error);
            series.push_back(std::move(s));
        }

        const fs::path dir = prepare_out_dir(out_dir);
        write_text_file(dir / "sweep.csv", experiment_csv(all));
        write_text_file(dir / "sweep.json", experiment_json(all));
        write_text_file(dir / "sweep.svg", render_svg_chart({"Calibrated error vs LoRA rank", "rank", "calibrated error", true}, series));
        out << experiment_csv(mean);
        return kOk;
    }
};

struct ReportCmd {
    std::string dataset = std::string(dataset_name(GapDataset::perplexity_per_task));
    std::string out_dir;

    void setup(CLI::App*, Bindings& b) {
        b.bind("dataset", dataset, "perplexity-per-task | perplexity-rounded | downstream-accuracy");
        b.bind("out_dir", out_dir, "Optional directory for report.csv and report.json");
    }

    int run(const Bindings& b, std::ostream& out, std::ostream& err) const {
        GapDataset which;
        try {
            which = parse_dataset(dataset);
        } catch (const InvalidArgument&) {
            throw UsageError(fmt::format("{}: unknown dataset '{}'", b.where("dataset"), dataset));
        }
        const auto rows = gap_dataset(which);
        const GapReport report = table_gap_report(rows, dataset_lower_is_better(which));
        const std::string csv = gap_csv(report) + fmt::format("average,NA,NA,NA,{}\n", format_real(report.average));
        if (!out_dir.empty()) {
            const fs::path dir = prepare_out_dir(out_dir);
            write_text_file(dir / "report.csv", csv);
            write_text_file(dir / "report.json", gap_json(report, dataset_name(which)));
        }
        for (const auto& r : report.rows) {
            if (!r.rounding_mismatch) continue;
            err << fmt::format("note: {}: recomputed {} vs published {:.2f} (table rounding)\n", r.row.model,
                               r.gap ? fmt::format("{:.3f}", *r.gap) : std::string("NA"), r.row.published.value_or(0.0));
        }
        out << csv;
        return kOk;
    }
};

} // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quantization-aware LoRA initialization toolkit", "qainit"};
    app.require_subcommand(1);

    QuantizeCmd quantize_cmd;
    CalibrateCmd calibrate_cmd;
    InitCmd init_cmd;
    SynthCmd synth_cmd;
    DemoCmd demo_cmd;
    SweepCmd sweep_cmd;
    ReportCmd report_cmd;

    CLI::App* quantize_app = app.add_subcommand("quantize", "Quantize every 'w/<layer>' tensor of a container");
    CLI::App* calibrate_app = app.add_subcommand("calibrate", "Accumulate activation correlation matrices");
    CLI::App* init_app = app.add_subcommand("init", "Compute quantization-aware LoRA initializations");
    CLI::App* synth_app = app.add_subcommand("synth", "Write synthetic weight and activation containers");
    CLI::App* demo_app = app.add_subcommand("demo", "Baseline vs quailora on one synthetic layer plus the fine-tuning proxy");
    CLI::App* sweep_app = app.add_subcommand("sweep", "Rank sweep of calibrated error");
    CLI::App* report_app = app.add_subcommand("report", "Gap-closed report on an embedded results table");

    Bindings quantize_b(quantize_app), calibrate_b(calibrate_app), init_b(init_app), synth_b(synth_app), demo_b(demo_app),
        sweep_b(sweep_app), report_b(report_app);
    quantize_cmd.setup(quantize_app, quantize_b);
    calibrate_cmd.setup(calibrate_app, calibrate_b);
    init_cmd.setup(init_app, init_b);
    synth_cmd.setup(synth_app, synth_b);
    demo_cmd.setup(demo_app, demo_b);
    sweep_cmd.setup(sweep_app, sweep_b);
    report_cmd.setup(report_app, report_b);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*quantize_app) {
            quantize_b.merge();
            return quantize_cmd.run(quantize_b, out);
        }
        if (*calibrate_app) {
            calibrate_b.merge();
            return calibrate_cmd.run(calibrate_b, out);
        }
        if (*init_app) {
            init_b.merge();
            return init_cmd.run(init_b, out);
        }
        if (*synth_app) {
            synth_b.merge();
            return synth_cmd.run(synth_b, out);
        }
        if (*demo_app) {
            demo_b.merge();
            return demo_cmd.run(demo_b, out);
        }
        if (*sweep_app) {
            sweep_b.merge();
            return sweep_cmd.run(sweep_b, out);
        }
        report_b.merge();
        return report_cmd.run(report_b, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const EmptyReportError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kIo;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kNumeric;
    }
}

} // namespace qainit::cli
