#include "decdec/cli.hpp"

#include "decdec/compensation.hpp"
#include "decdec/errors.hpp"
#include "decdec/evaluation.hpp"
#include "decdec/hwmodel.hpp"
#include "decdec/io.hpp"
#include "decdec/parallel.hpp"
#include "decdec/quantizer.hpp"
#include "decdec/selection.hpp"
#include "decdec/tuner.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

namespace decdec {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto with_path(const fs::path& path, F&& f) {
    try {
        return f();
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// Reads input files once and keeps their digests for the provenance line.
class Inputs {
public:
    std::string load(const fs::path& path) {
        std::string bytes = read_file(path);
        digests_.emplace_back(path.filename().string(), fnv1a64(bytes));
        return bytes;
    }

    Matrix matrix(const fs::path& path) {
        return with_path(path, [&] { return decode_ddmx(load(path)); });
    }
    QuantizedResidual residual(const fs::path& path) {
        return with_path(path, [&] { return decode_ddqr(load(path)); });
    }
    ActivationTrace trace(const fs::path& path) { return ActivationTrace(matrix(path)); }
    HardwareProfile profile(const fs::path& path) {
        return with_path(path, [&] { return parse_profile(load(path)); });
    }
    ModelShape model(const fs::path& path) {
        return with_path(path, [&] { return parse_model_shape(load(path)); });
    }
    std::vector<TimingSample> timing(const fs::path& path) {
        return with_path(path, [&] { return parse_timing_table(load(path)); });
    }
    std::vector<BucketBoundaries> boundaries(const fs::path& path) {
        return with_path(path, [&] { return parse_boundaries(load(path)); });
    }

    std::string header(const std::string& command, std::uint64_t seed) const {
        std::string line = fmt::format("# decdec {} version={} seed={} inputs=", command, kVersion, seed);
        for (std::size_t i = 0; i < digests_.size(); ++i) {
            line += fmt::format("{}{}:{:016x}", i ? "," : "", digests_[i].first, digests_[i].second);
        }
        return line + "\n";
    }

private:
    std::vector<std::pair<std::string, std::uint64_t>> digests_;
};

void emit(const std::string& out_path, const std::string& text, std::ostream& out) {
    if (out_path.empty() || out_path == "-") {
        out << text;
    } else {
        write_file_atomic(out_path, text);
    }
}

// Weights either come with an externally quantized w_hat or are quantized here.
struct WeightArgs {
    std::string weights;
    std::string whats;
    int bits = 3;
    std::size_t group_size = 128;

    void add(CLI::App* cmd) {
        cmd->add_option("--weights", weights, "Full-precision weights (DDMX, d_in x d_out)")->required();
        cmd->add_option("--whats", whats, "Base-quantized weights (DDMX); quantized here when omitted");
        cmd->add_option("--bits", bits, "Base quantizer bitwidth when --whats is omitted")
            ->check(CLI::IsMember({2, 3, 4}))
            ->capture_default_str();
        cmd->add_option("--group-size", group_size, "Base quantizer group size")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    }

    WeightSet load(Inputs& in) const {
        Matrix w = in.matrix(weights);
        if (!whats.empty()) {
            return make_weight_set(std::move(w), in.matrix(whats));
        }
        return base_quantize(w, bits, group_size);
    }
};

struct QuantizeArgs {
    WeightArgs weights;
    int r_bits = 4;
    std::string out_residual;
    std::string out_whats;
    std::uint64_t seed = 0;
};

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
    Inputs in;
    const WeightSet ws = a.weights.load(in);
    const QuantizedResidual qr = residual_quantize(ws.residual, a.r_bits);
    write_ddqr(a.out_residual, qr);
    if (!a.out_whats.empty()) {
        write_ddmx(a.out_whats, ws.w_hat);
    }
    const auto mse = per_channel_mse(ws.residual, qr);
    double mean = 0.0;
    for (double m : mse) {
        mean += m;
    }
    mean /= static_cast<double>(mse.size());
    fmt::print(out, "{}x{} residual {}-bit, mean per-channel residual mse {:.6g}\n", ws.d_in(), ws.d_out(),
               a.r_bits, mean);
    return kExitOk;
}

struct BoundariesArgs {
    std::string calib;
    std::vector<std::size_t> kchunks;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_boundaries(const BoundariesArgs& a, std::ostream& out) {
    Inputs in;
    const ActivationTrace calib = in.trace(a.calib);
    std::vector<BucketBoundaries> all;
    for (std::size_t kc : a.kchunks) {
        require(kc >= 1 && kc <= kChunkSize, "--kchunk must be in [1, 1024]");
        all.push_back(derive_boundaries(calib, kc * num_chunks(calib.d_in())));
    }
    emit(a.out, in.header("boundaries", a.seed) + format_boundaries(all), out);
    return kExitOk;
}

struct ForwardArgs {
    std::string weights;
    std::string whats;
    std::string residual;
    std::string x;
    std::size_t kchunk = 0;
    std::uint64_t seed = 0;
    std::string boundaries;
    std::string calib;
    std::string out;
};

int cmd_forward(const ForwardArgs& a, std::ostream& out) {
    Inputs in;
    const WeightSet ws = make_weight_set(in.matrix(a.weights), in.matrix(a.whats));
    const QuantizedResidual qr = in.residual(a.residual);
    const Matrix x = in.matrix(a.x);
    require(qr.d_in == ws.d_in() && qr.d_out == ws.d_out(), "residual shape does not match the weights");
    require(x.cols() == ws.d_in(), "x must have d_in columns");

    BucketBoundaries b;
    if (a.kchunk > 0) {
        require(a.kchunk <= kChunkSize, "--kchunk must be in [0, 1024]");
        const std::size_t k = a.kchunk * num_chunks(ws.d_in());
        if (!a.boundaries.empty()) {
            const auto list = in.boundaries(a.boundaries);
            const auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.k == k; });
            if (it == list.end()) {
                throw PreconditionError(fmt::format("{} has no boundaries for k = {}", a.boundaries, k));
            }
            b = *it;
        } else if (!a.calib.empty()) {
            b = derive_boundaries(in.trace(a.calib), k);
        } else {
            b = derive_boundaries(ActivationTrace(x), k);
        }
    }

    Matrix o(x.rows(), ws.d_out());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = decdec_forward(ws, qr, x.row(r), a.kchunk, b, a.seed + r);
        std::copy(row.begin(), row.end(), o.row(r).begin());
    }
    write_ddmx(a.out, o);
    fmt::print(out, "wrote {}x{} outputs to {}\n", o.rows(), o.cols(), a.out);
    return kExitOk;
}

struct TuneArgs {
    std::string model;
    std::string profile;
    double target = 0.10;
    int r_bits = 4;
    std::string timing;
    std::optional<double> alpha;
    std::optional<int> n_sat;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_tune(const TuneArgs& a, std::ostream& out) {
    Inputs in;
    const ModelShape model = in.model(a.model);
    HardwareProfile profile = in.profile(a.profile);
    if (a.alpha) {
        profile.contention_alpha = *a.alpha;
    }
    if (a.n_sat) {
        profile.pcie_saturation_blocks = *a.n_sat;
    }
    profile.validate();

    std::unique_ptr<TimingOracle> oracle;
    if (!a.timing.empty()) {
        oracle = std::make_unique<TableOracle>(in.timing(a.timing));
    } else {
        oracle = std::make_unique<AnalyticOracle>(profile, a.r_bits);
    }
    const TunerResult result = tune(model, profile, *oracle, a.target);

    fmt::print(out, "{}\n", format_tuner_line(result));
    fmt::print(out, "predicted slowdown {:.4f} (target {:.4f})\n", result.predicted_slowdown, a.target);
    if (!result.frozen_zero.empty()) {
        fmt::print(out, "compensation disabled for: {}\n", fmt::join(result.frozen_zero, ", "));
    }

    if (!a.out.empty()) {
        std::string csv = in.header("tune", a.seed) + "label,n_tb,k_chunk,n_max_tb,predicted_slowdown\n";
        for (const auto& s : result.per_layer) {
            csv += fmt::format("{},{},{},{},{}\n", s.label, s.n_tb, s.k_chunk, result.n_max_tb,
                               result.predicted_slowdown);
        }
        emit(a.out, csv, out);
    }
    return kExitOk;
}

struct CurveArgs {
    WeightArgs weights;
    std::string x;
    std::size_t row = 0;
    std::vector<std::string> policies;
    std::size_t step = 64;
    std::uint64_t seed = 0;
    std::string calib;
    std::string out;
};

int cmd_eval_curve(const CurveArgs& a, std::ostream& out) {
    Inputs in;
    const WeightSet ws = a.weights.load(in);
    const Matrix x = in.matrix(a.x);
    require(a.row < x.rows(), "--row out of range");
    require(x.cols() == ws.d_in(), "x must have d_in columns");
    std::optional<ActivationTrace> calib;
    if (!a.calib.empty()) {
        calib.emplace(in.trace(a.calib));
    }

    std::vector<Policy> policies;
    if (a.policies.empty()) {
        policies = {Policy::sorted, Policy::random, Policy::exact};
        if (calib) {
            policies.insert(policies.begin() + 2, {Policy::static_profile, Policy::decdec});
        }
    } else {
        for (const auto& p : a.policies) {
            policies.push_back(parse_policy(p));
        }
    }

    CurveAux aux;
    aux.calibration = calib ? &*calib : nullptr;
    std::string csv = in.header("eval-curve", a.seed) + "policy,n,mse\n";
    for (Policy p : policies) {
        const ErrorCurve curve = error_curve(ws, x.row(a.row), p, a.step, a.seed, aux);
        for (std::size_t i = 0; i < curve.mse.size(); ++i) {
            csv += fmt::format("{},{},{}\n", policy_name(p), curve.n_compensated[i], curve.mse[i]);
        }
        if (!a.out.empty()) {
            fmt::print(out, "{}: area {:.6g}\n", policy_name(p), curve_area(curve));
        }
    }
    emit(a.out, csv, out);
    return kExitOk;
}

struct RecallArgs {
    std::string trace;
    std::string calib;
    double top_fraction = 0.05;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_eval_recall(const RecallArgs& a, std::ostream& out) {
    Inputs in;
    const ActivationTrace trace = in.trace(a.trace);
    const ActivationTrace calib = in.trace(a.calib);
    const RecallResult r = recall_experiment(trace, calib, a.top_fraction);
    std::string csv = in.header("eval-recall", a.seed) + "step,recall\n";
    for (std::size_t s = 0; s < r.per_step.size(); ++s) {
        csv += fmt::format("{},{}\n", s, r.per_step[s]);
    }
    emit(a.out, csv, out);
    if (!a.out.empty()) {
        fmt::print(out, "mean recall {:.4f}\n", r.mean);
    }
    return kExitOk;
}

struct SweepArgs {
    WeightArgs weights;
    std::string trace;
    std::vector<std::size_t> budgets;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_eval_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
    Inputs in;
    const WeightSet ws = a.weights.load(in);
    const ActivationTrace trace = in.trace(a.trace);
    const SweepResult r = bitwidth_sweep(ws, trace, a.budgets);
    for (const auto& notice : r.notices) {
        fmt::print(err, "note: {}\n", notice);
    }
    std::string csv = in.header("eval-sweep", a.seed) + "r_bits,k_chunk,budget_bytes,mse\n";
    for (const auto& row : r.rows) {
        csv += fmt::format("{},{},{},{}\n", row.r_bits, row.k_chunk, row.budget_bytes, row.mse);
    }
    emit(a.out, csv, out);
    return kExitOk;
}

struct CompareArgs {
    WeightArgs weights;
    std::string residual;
    int r_bits = 4;
    std::string trace;
    std::string calib;
    std::size_t kchunk = 32;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_eval_compare(const CompareArgs& a, std::ostream& out) {
    Inputs in;
    const WeightSet ws = a.weights.load(in);
    const QuantizedResidual qr = a.residual.empty() ? residual_quantize(ws.residual, a.r_bits) : in.residual(a.residual);
    require(qr.d_in == ws.d_in() && qr.d_out == ws.d_out(), "residual shape does not match the weights");
    const ActivationTrace trace = in.trace(a.trace);
    const ActivationTrace calib = in.trace(a.calib);
    require(a.kchunk >= 1 && a.kchunk <= kChunkSize, "--kchunk must be in [1, 1024]");
    const BucketBoundaries b = derive_boundaries(calib, a.kchunk * num_chunks(ws.d_in()));
    const auto stats = selection_comparison(ws, qr, trace, calib, a.kchunk, b, a.seed);
    std::string csv = in.header("eval-compare", a.seed) + "policy,mse,recall\n";
    for (const auto& s : stats) {
        csv += fmt::format("{},{},{}\n", policy_name(s.policy), s.mse, s.recall);
    }
    emit(a.out, csv, out);
    return kExitOk;
}

struct SyntheticArgs {
    std::size_t d_in = 4096;
    std::size_t d_out = 4096;
    std::size_t steps = 64;
    std::optional<std::size_t> calib_steps;
    std::uint64_t seed = 0;
    double weight_std = 0.02;
    SyntheticTraceConfig trace;
    std::string out_dir;
};

int cmd_gen_synthetic(const SyntheticArgs& a, std::ostream& out) {
    require(a.d_in >= 1 && a.d_out >= 1 && a.steps >= 1, "--din, --dout and --steps must be positive");
    const std::size_t calib_steps = a.calib_steps.value_or(a.steps);
    require(calib_steps >= 1, "--calib-steps must be positive");

    SyntheticTraceConfig cfg = a.trace;
    cfg.d_in = a.d_in;
    cfg.steps = a.steps + calib_steps;
    // Trace and calibration share channel structure: both are slices of one run.
    const ActivationTrace all = synthetic_trace(cfg, a.seed);
    const Matrix w = gaussian_matrix(a.d_in, a.d_out, a.seed ^ 0x9e3779b97f4a7c15ULL, a.weight_std);

    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    write_ddmx(dir / "w.ddmx", w);
    write_ddmx(dir / "trace.ddmx", slice_steps(all, 0, a.steps).steps());
    write_ddmx(dir / "calib.ddmx", slice_steps(all, a.steps, a.steps + calib_steps).steps());
    fmt::print(out, "wrote w.ddmx ({}x{}), trace.ddmx ({} steps), calib.ddmx ({} steps) to {}\n", a.d_in, a.d_out,
               a.steps, calib_steps, dir.string());
    return kExitOk;
}

void add_seed(CLI::App* cmd, std::uint64_t& seed) {
    cmd->add_option("--seed", seed, "Random seed, recorded in every output header")->capture_default_str();
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"DecDEC reference tools: residual quantization, dynamic error compensation, tuning and analysis",
                 "decdec"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    unsigned threads = 0;
    app.add_option("--threads", threads, "Cap on worker threads (0 = all hardware threads)")->capture_default_str();

    QuantizeArgs q;
    auto* quantize = app.add_subcommand("quantize", "Base-quantize weights and encode the residual");
    q.weights.add(quantize);
    quantize->add_option("--rbits", q.r_bits, "Residual bitwidth")
        ->check(CLI::IsMember({2, 4, 8, 16}))
        ->capture_default_str();
    quantize->add_option("--out-residual", q.out_residual, "Output residual (DDQR)")->required();
    quantize->add_option("--out-whats", q.out_whats, "Output base-quantized weights (DDMX)");
    add_seed(quantize, q.seed);

    BoundariesArgs bd;
    auto* boundaries = app.add_subcommand("boundaries", "Derive bucket boundaries from a calibration trace");
    boundaries->add_option("--calib", bd.calib, "Calibration trace (DDMX, steps x d_in)")->required();
    boundaries->add_option("--kchunk", bd.kchunks, "Per-chunk quota, repeatable")->required();
    boundaries->add_option("--out", bd.out, "Output text file (stdout when omitted)");
    add_seed(boundaries, bd.seed);

    ForwardArgs f;
    auto* forward = app.add_subcommand("forward", "Compensated GEMV for each row of x");
    forward->add_option("--weights", f.weights, "Full-precision weights (DDMX)")->required();
    forward->add_option("--whats", f.whats, "Base-quantized weights (DDMX)")->required();
    forward->add_option("--residual", f.residual, "Quantized residual (DDQR)")->required();
    forward->add_option("--x", f.x, "Activations (DDMX, rows x d_in)")->required();
    forward->add_option("--kchunk", f.kchunk, "Channels compensated per 1024-channel chunk")->required();
    forward->add_option("--boundaries", f.boundaries, "Boundaries file from the boundaries command");
    forward->add_option("--calib", f.calib, "Calibration trace to derive boundaries from");
    forward->add_option("--out", f.out, "Output (DDMX, rows x d_out)")->required();
    add_seed(forward, f.seed);

    TuneArgs t;
    auto* tune_cmd = app.add_subcommand("tune", "Pick n_max_tb and per-layer k_chunk under a slowdown target");
    tune_cmd->add_option("--model", t.model, "Model shape file")->required();
    tune_cmd->add_option("--profile", t.profile, "Hardware profile file")->required();
    tune_cmd->add_option("--target", t.target, "Target slowdown, e.g. 0.10")->required();
    tune_cmd->add_option("--rbits", t.r_bits, "Residual bitwidth for the analytic model")
        ->check(CLI::IsMember({2, 4, 8, 16}))
        ->capture_default_str();
    tune_cmd->add_option("--timing", t.timing, "Measured timing table (CSV); analytic model when omitted");
    tune_cmd->add_option("--alpha", t.alpha, "Override the profile's contention_alpha");
    tune_cmd->add_option("--nsat", t.n_sat, "Override the profile's pcie_saturation_blocks");
    tune_cmd->add_option("--out", t.out, "Per-layer CSV");
    add_seed(tune_cmd, t.seed);

    CurveArgs c;
    auto* curve = app.add_subcommand("eval-curve", "Output error as channels are compensated in policy order");
    c.weights.add(curve);
    curve->add_option("--x", c.x, "Activations (DDMX)")->required();
    curve->add_option("--row", c.row, "Row of x to use")->capture_default_str();
    curve->add_option("--policy", c.policies, "sorted, random, static, decdec or exact; repeatable");
    curve->add_option("--step", c.step, "Channels added per checkpoint")->check(CLI::PositiveNumber)->capture_default_str();
    curve->add_option("--calib", c.calib, "Calibration trace (static and decdec policies)");
    curve->add_option("--out", c.out, "Output CSV (stdout when omitted)");
    add_seed(curve, c.seed);

    RecallArgs r;
    auto* recall_cmd = app.add_subcommand("eval-recall", "Recall of the static top set against each step");
    recall_cmd->add_option("--trace", r.trace, "Activation trace (DDMX)")->required();
    recall_cmd->add_option("--calib", r.calib, "Calibration trace (DDMX)")->required();
    recall_cmd->add_option("--top-fraction", r.top_fraction, "Fraction of channels in the top set")
        ->capture_default_str();
    recall_cmd->add_option("--out", r.out, "Output CSV (stdout when omitted)");
    add_seed(recall_cmd, r.seed);

    SweepArgs s;
    auto* sweep = app.add_subcommand("eval-sweep", "Residual bitwidths at matched transfer budgets");
    s.weights.add(sweep);
    sweep->add_option("--trace", s.trace, "Activation trace (DDMX)")->required();
    sweep->add_option("--budget", s.budgets, "Bytes per 1024-channel chunk, repeatable")->required();
    sweep->add_option("--out", s.out, "Output CSV (stdout when omitted)");
    add_seed(sweep, s.seed);

    CompareArgs cmp;
    auto* compare = app.add_subcommand("eval-compare", "Random, static, decdec and exact selection side by side");
    cmp.weights.add(compare);
    compare->add_option("--residual", cmp.residual, "Quantized residual (DDQR); encoded here when omitted");
    compare->add_option("--rbits", cmp.r_bits, "Residual bitwidth when --residual is omitted")
        ->check(CLI::IsMember({2, 4, 8, 16}))
        ->capture_default_str();
    compare->add_option("--trace", cmp.trace, "Activation trace (DDMX)")->required();
    compare->add_option("--calib", cmp.calib, "Calibration trace (DDMX)")->required();
    compare->add_option("--kchunk", cmp.kchunk, "Channels per 1024-channel chunk")->capture_default_str();
    compare->add_option("--out", cmp.out, "Output CSV (stdout when omitted)");
    add_seed(compare, cmp.seed);

    SyntheticArgs g;
    auto* gen = app.add_subcommand("gen-synthetic", "Write synthetic weights, trace and calibration trace");
    gen->add_option("--din", g.d_in, "Input channels")->capture_default_str();
    gen->add_option("--dout", g.d_out, "Output channels")->capture_default_str();
    gen->add_option("--steps", g.steps, "Trace steps")->capture_default_str();
    gen->add_option("--calib-steps", g.calib_steps, "Calibration steps (defaults to --steps)");
    gen->add_option("--weight-std", g.weight_std, "Weight standard deviation")->capture_default_str();
    gen->add_option("--sigma", g.trace.channel_sigma, "Log-normal sigma of channel scales")->capture_default_str();
    gen->add_option("--nu", g.trace.student_nu, "Student-t degrees of freedom")->capture_default_str();
    gen->add_option("--persistent", g.trace.persistent_fraction, "Fraction of persistent outlier channels")
        ->capture_default_str();
    gen->add_option("--spike", g.trace.spike_fraction, "Fraction of per-step random outlier channels")
        ->capture_default_str();
    gen->add_option("--gain", g.trace.outlier_gain, "Outlier amplification")->capture_default_str();
    gen->add_option("--out", g.out_dir, "Output directory")->required();
    add_seed(gen, g.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        set_thread_limit(threads);
        if (*quantize) return cmd_quantize(q, out);
        if (*boundaries) return cmd_boundaries(bd, out);
        if (*forward) return cmd_forward(f, out);
        if (*tune_cmd) return cmd_tune(t, out);
        if (*curve) return cmd_eval_curve(c, out);
        if (*recall_cmd) return cmd_eval_recall(r, out);
        if (*sweep) return cmd_eval_sweep(s, out, err);
        if (*compare) return cmd_eval_compare(cmp, out);
        if (*gen) return cmd_gen_synthetic(g, out);
        return kExitUsage;
    } catch (const FormatError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitFormat;
    } catch (const fs::filesystem_error& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitFormat;
    } catch (const PreconditionError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitPrecondition;
    } catch (const InvariantError& e) {
        fmt::print(err, "internal error: {}\n", e.what());
        return kExitInvariant;
    } catch (const std::exception& e) {
        fmt::print(err, "internal error: {}\n", e.what());
        return kExitInvariant;
    }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("decdec");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace decdec
