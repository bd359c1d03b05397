#include "decdec/evaluation.hpp"

#include "decdec/errors.hpp"
#include "decdec/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace decdec {

ActivationTrace synthetic_trace(const SyntheticTraceConfig& config, std::uint64_t seed) {
    require(config.d_in >= 1 && config.steps >= 1, "synthetic trace needs d_in >= 1 and steps >= 1");
    require(config.student_nu > 0.0 && config.channel_sigma >= 0.0 && config.outlier_gain > 0.0,
            "invalid synthetic trace parameters");
    require(config.persistent_fraction >= 0.0 && config.spike_fraction >= 0.0 &&
                config.persistent_fraction + config.spike_fraction <= 1.0,
            "outlier fractions must lie in [0, 1]");

    const std::size_t d_in = config.d_in;
    std::mt19937_64 rng(seed);

    std::vector<double> scale(d_in);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& s : scale) {
        s = std::exp(config.channel_sigma * normal(rng));
    }

    std::vector<std::size_t> channels(d_in);
    std::iota(channels.begin(), channels.end(), std::size_t{0});
    std::shuffle(channels.begin(), channels.end(), rng);
    const auto n_persistent = static_cast<std::size_t>(std::llround(config.persistent_fraction * d_in));
    const auto n_spikes = static_cast<std::size_t>(std::llround(config.spike_fraction * d_in));
    std::vector<char> persistent(d_in, 0);
    for (std::size_t i = 0; i < n_persistent; ++i) {
        persistent[channels[i]] = 1;
    }
    // Spikes are drawn from the non-persistent channels.
    std::vector<std::size_t> ordinary(channels.begin() + static_cast<std::ptrdiff_t>(n_persistent), channels.end());

    std::student_t_distribution<double> student(config.student_nu);
    Matrix steps(config.steps, d_in);
    std::vector<char> outlier(d_in);
    for (std::size_t s = 0; s < config.steps; ++s) {
        outlier = persistent;
        for (std::size_t i = 0; i < n_spikes; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, ordinary.size() - 1);
            std::swap(ordinary[i], ordinary[pick(rng)]);
            outlier[ordinary[i]] = 1;
        }
        auto row = steps.row(s);
        for (std::size_t i = 0; i < d_in; ++i) {
            const double t = student(rng);
            double v = scale[i] * t;
            if (outlier[i]) {
                v = std::copysign(config.outlier_gain * scale[i] * (1.0 + std::fabs(t)), t);
            }
            row[i] = static_cast<float>(v);
        }
    }
    return ActivationTrace(std::move(steps));
}

ActivationTrace slice_steps(const ActivationTrace& trace, std::size_t begin, std::size_t end) {
    require(begin < end && end <= trace.num_steps(), "invalid step range");
    Matrix out(end - begin, trace.d_in());
    for (std::size_t s = begin; s < end; ++s) {
        std::copy_n(trace.step(s).begin(), trace.d_in(), out.row(s - begin).begin());
    }
    return ActivationTrace(std::move(out));
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    Matrix m(rows, cols);
    for (auto& v : m.data()) {
        v = static_cast<float>(normal(rng));
    }
    return m;
}

std::vector<double> static_profile(const ActivationTrace& calibration) {
    std::vector<double> score(calibration.d_in(), 0.0);
    for (std::size_t s = 0; s < calibration.num_steps(); ++s) {
        const auto row = calibration.step(s);
        for (std::size_t i = 0; i < row.size(); ++i) {
            score[i] += double(row[i]) * double(row[i]);
        }
    }
    for (auto& v : score) {
        v /= static_cast<double>(calibration.num_steps());
    }
    return score;
}

std::vector<std::size_t> static_ranking(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

std::string policy_name(Policy policy) {
    switch (policy) {
    case Policy::sorted: return "sorted";
    case Policy::random: return "random";
    case Policy::static_profile: return "static";
    case Policy::decdec: return "decdec";
    case Policy::exact: return "exact";
    }
    throw InvariantError("unknown policy");
}

Policy parse_policy(const std::string& name) {
    for (Policy p : {Policy::sorted, Policy::random, Policy::static_profile, Policy::decdec, Policy::exact}) {
        if (policy_name(p) == name) {
            return p;
        }
    }
    throw PreconditionError("unknown policy '" + name + "'");
}

namespace {

std::vector<std::size_t> checkpoints(std::size_t d_in, std::size_t step) {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < d_in; n += step) {
        out.push_back(n);
    }
    out.push_back(d_in);
    return out;
}

OutputVector add(const OutputVector& base, const OutputVector& dec) {
    OutputVector out(base.size());
    for (std::size_t j = 0; j < base.size(); ++j) {
        out[j] = base[j] + dec[j];
    }
    return out;
}

QuantizedResidual exact_residual(const WeightSet& ws) { return residual_quantize(ws.residual, 16); }

std::vector<std::size_t> all_channels(std::size_t d_in) {
    std::vector<std::size_t> out(d_in);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

} // namespace

ErrorCurve error_curve(const WeightSet& ws, std::span<const float> x, Policy policy, std::size_t step,
                       std::uint64_t seed, const CurveAux& aux) {
    require(step >= 1, "error curve step must be >= 1");
    require(x.size() == ws.d_in(), "activation length does not match d_in");
    const std::size_t d_in = ws.d_in();

    ErrorCurve curve;
    curve.policy = policy;
    curve.n_compensated = checkpoints(d_in, step);

    const OutputVector reference = gemv(ws.w, x);
    const OutputVector base = gemv(ws.w_hat, x);

    if (policy == Policy::exact || policy == Policy::decdec) {
        const std::size_t chunks = num_chunks(d_in);
        if (policy == Policy::decdec) {
            require(aux.calibration != nullptr, "decdec policy needs a calibration trace");
            require(aux.calibration->d_in() == d_in, "calibration d_in does not match");
            require(step % chunks == 0, "decdec policy needs step to be a multiple of the chunk count");
        }
        const QuantizedResidual qr = exact_residual(ws);
        for (std::size_t n : curve.n_compensated) {
            if (n == 0) {
                curve.mse.push_back(output_mse(base, reference));
                continue;
            }
            Selection sel;
            if (n == d_in) {
                sel = make_selection(x, all_channels(d_in));
            } else if (policy == Policy::exact) {
                sel = exact_topk(x, n);
            } else {
                const std::size_t k_chunk = n / chunks;
                sel = approx_topk(x, k_chunk, derive_boundaries(*aux.calibration, k_chunk * chunks), seed);
            }
            curve.mse.push_back(output_mse(add(base, dec_gemv(qr, sel)), reference));
        }
        return curve;
    }

    std::vector<std::size_t> ranking;
    switch (policy) {
    case Policy::sorted:
        ranking = magnitude_order(x);
        break;
    case Policy::random: {
        ranking = all_channels(d_in);
        std::mt19937_64 rng(seed);
        std::shuffle(ranking.begin(), ranking.end(), rng);
        break;
    }
    case Policy::static_profile:
        require(aux.calibration != nullptr, "static policy needs a calibration trace");
        require(aux.calibration->d_in() == d_in, "calibration d_in does not match");
        ranking = static_ranking(static_profile(*aux.calibration));
        break;
    default:
        throw InvariantError("unhandled policy");
    }

    // Prefix accumulation of x[i] * R[i, :] in ranking order.
    std::vector<double> acc(ws.d_out(), 0.0);
    std::size_t done = 0;
    for (std::size_t n : curve.n_compensated) {
        for (; done < n; ++done) {
            const std::size_t i = ranking[done];
            const double xi = x[i];
            const auto row = ws.residual.row(i);
            for (std::size_t j = 0; j < acc.size(); ++j) {
                acc[j] += xi * double(row[j]);
            }
        }
        const OutputVector dec(acc.begin(), acc.end());
        curve.mse.push_back(n == 0 ? output_mse(base, reference) : output_mse(add(base, dec), reference));
    }
    return curve;
}

double curve_area(const ErrorCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.mse.size(); ++i) {
        const double width = double(curve.n_compensated[i] - curve.n_compensated[i - 1]);
        area += 0.5 * width * (curve.mse[i] + curve.mse[i - 1]);
    }
    return area;
}

RecallResult recall_experiment(const ActivationTrace& trace, const ActivationTrace& calibration,
                               double top_fraction) {
    require(top_fraction > 0.0 && top_fraction <= 1.0, "top_fraction must be in (0, 1]");
    require(trace.d_in() == calibration.d_in(), "trace and calibration differ in d_in");
    const std::size_t d_in = trace.d_in();
    const auto k = std::min<std::size_t>(
        d_in, static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(d_in) - 1e-9)));

    auto ranking = static_ranking(static_profile(calibration));
    ranking.resize(k);

    RecallResult result;
    result.per_step.resize(trace.num_steps());
    parallel_for(trace.num_steps(), [&](std::size_t s) {
        const Selection exact = exact_topk(trace.step(s), k);
        result.per_step[s] = recall(std::span<const std::size_t>(ranking), std::span<const std::size_t>(exact.indices));
    });
    result.mean = std::accumulate(result.per_step.begin(), result.per_step.end(), 0.0) /
                  static_cast<double>(result.per_step.size());
    return result;
}

std::size_t kchunk_for_budget(std::size_t budget_bytes, std::size_t d_out, int r_bits) {
    const double per_channel = static_cast<double>(d_out) * r_bits / 8.0;
    return static_cast<std::size_t>(std::llround(static_cast<double>(budget_bytes) / per_channel));
}

SweepResult bitwidth_sweep(const WeightSet& ws, const ActivationTrace& trace, std::span<const std::size_t> budgets) {
    require(trace.d_in() == ws.d_in(), "trace d_in does not match the weights");
    const std::size_t d_in = ws.d_in();
    const std::size_t d_out = ws.d_out();

    struct Pending {
        SweepRow row;
        std::size_t qr_index;
    };
    std::vector<Pending> pending;
    SweepResult result;
    std::vector<int> needed_bits;
    for (std::size_t budget : budgets) {
        for (int bits : kSweepBits) {
            const std::size_t k_chunk = kchunk_for_budget(budget, d_out, bits);
            if (k_chunk < 1 || k_chunk > kChunkSize) {
                result.notices.push_back("budget " + std::to_string(budget) + " B: no valid k_chunk at " +
                                         std::to_string(bits) + "-bit residuals, row omitted");
                continue;
            }
            auto it = std::find(needed_bits.begin(), needed_bits.end(), bits);
            if (it == needed_bits.end()) {
                needed_bits.push_back(bits);
                it = needed_bits.end() - 1;
            }
            SweepRow row;
            row.r_bits = bits;
            row.k_chunk = k_chunk;
            row.budget_bytes = budget;
            row.transfer_bytes = k_chunk * d_out * static_cast<std::size_t>(bits) / 8;
            pending.push_back({row, static_cast<std::size_t>(it - needed_bits.begin())});
        }
    }
    if (pending.empty()) {
        return result;
    }

    std::vector<QuantizedResidual> residuals;
    for (int bits : needed_bits) {
        residuals.push_back(residual_quantize(ws.residual, bits));
    }

    // mse[step][row]
    std::vector<std::vector<double>> mse(trace.num_steps(), std::vector<double>(pending.size()));
    parallel_for(trace.num_steps(), [&](std::size_t s) {
        const auto x = trace.step(s);
        const OutputVector reference = gemv(ws.w, x);
        const OutputVector base = gemv(ws.w_hat, x);
        for (std::size_t r = 0; r < pending.size(); ++r) {
            const Selection sel = exact_topk(x, selected_count(d_in, pending[r].row.k_chunk));
            mse[s][r] = output_mse(add(base, dec_gemv(residuals[pending[r].qr_index], sel)), reference);
        }
    });
    for (std::size_t r = 0; r < pending.size(); ++r) {
        double sum = 0.0;
        for (std::size_t s = 0; s < trace.num_steps(); ++s) {
            sum += mse[s][r];
        }
        pending[r].row.mse = sum / static_cast<double>(trace.num_steps());
        result.rows.push_back(pending[r].row);
    }
    return result;
}

std::vector<PolicyStats> selection_comparison(const WeightSet& ws, const QuantizedResidual& qr,
                                              const ActivationTrace& trace, const ActivationTrace& calibration,
                                              std::size_t k_chunk, const BucketBoundaries& boundaries,
                                              std::uint64_t seed) {
    require(trace.d_in() == ws.d_in() && calibration.d_in() == ws.d_in(), "trace d_in does not match the weights");
    require(qr.d_in == ws.d_in() && qr.d_out == ws.d_out(), "quantized residual does not match the weights");
    const std::size_t d_in = ws.d_in();
    const std::size_t k = selected_count(d_in, k_chunk);

    auto static_top = static_ranking(static_profile(calibration));
    static_top.resize(k);

    constexpr Policy kOrder[] = {Policy::random, Policy::static_profile, Policy::decdec, Policy::exact};
    constexpr std::size_t kPolicies = std::size(kOrder);
    std::vector<std::array<double, kPolicies>> mse(trace.num_steps());
    std::vector<std::array<double, kPolicies>> rec(trace.num_steps());

    parallel_for(trace.num_steps(), [&](std::size_t s) {
        const auto x = trace.step(s);
        const OutputVector reference = gemv(ws.w, x);
        const OutputVector base = gemv(ws.w_hat, x);
        const Selection exact = exact_topk(x, k);

        std::vector<std::size_t> random = all_channels(d_in);
        std::mt19937_64 rng(seed + s);
        std::shuffle(random.begin(), random.end(), rng);
        random.resize(k);

        const Selection picks[kPolicies] = {
            make_selection(x, std::move(random)),
            make_selection(x, static_top),
            approx_topk(x, k_chunk, boundaries, seed + s),
            exact,
        };
        for (std::size_t p = 0; p < kPolicies; ++p) {
            mse[s][p] = output_mse(add(base, dec_gemv(qr, picks[p])), reference);
            rec[s][p] = recall(picks[p], exact);
        }
    });

    std::vector<PolicyStats> out;
    for (std::size_t p = 0; p < kPolicies; ++p) {
        PolicyStats stats;
        stats.policy = kOrder[p];
        for (std::size_t s = 0; s < trace.num_steps(); ++s) {
            stats.mse += mse[s][p];
            stats.recall += rec[s][p];
        }
        stats.mse /= static_cast<double>(trace.num_steps());
        stats.recall /= static_cast<double>(trace.num_steps());
        out.push_back(stats);
    }
    return out;
}

} // namespace decdec
