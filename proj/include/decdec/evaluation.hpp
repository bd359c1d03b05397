#pragma once

#include "decdec/compensation.hpp"
#include "decdec/quantizer.hpp"
#include "decdec/selection.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace decdec {

// Heavy-tailed activation generator standing in for real decode traces.
// Every channel has a log-normal scale; per-step values are Student-t. A fixed
// set of persistent outlier channels, and optionally a fresh random set of
// spiked channels per step, are amplified by outlier_gain.
struct SyntheticTraceConfig {
    std::size_t d_in = 4096;
    std::size_t steps = 64;
    double channel_sigma = 0.5;
    double student_nu = 3.0;
    double persistent_fraction = 0.01;
    double spike_fraction = 0.0;
    double outlier_gain = 10.0;
};

// Channel structure (scales, persistent set) and step values both derive
// from seed, so two traces with the same seed share channels and steps.
ActivationTrace synthetic_trace(const SyntheticTraceConfig& config, std::uint64_t seed);

// Rows [begin, end) of a trace.
ActivationTrace slice_steps(const ActivationTrace& trace, std::size_t begin, std::size_t end);

// rows x cols matrix of N(0, stddev^2) samples.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0);

// score[i] = mean over steps of x[i]^2.
std::vector<double> static_profile(const ActivationTrace& calibration);

// Channels by descending score, ties by lower index.
std::vector<std::size_t> static_ranking(std::span<const double> scores);

enum class Policy { sorted, random, static_profile, decdec, exact };

std::string policy_name(Policy policy);
Policy parse_policy(const std::string& name);

struct ErrorCurve {
    Policy policy = Policy::sorted;
    std::vector<std::size_t> n_compensated;
    std::vector<double> mse;
};

struct CurveAux {
    const ActivationTrace* calibration = nullptr;  // static and decdec policies
};

// Output MSE against W x as the first n channels of the policy's ranking get
// their exact residual added back, for n = 0, step, 2*step, ..., d_in.
ErrorCurve error_curve(const WeightSet& ws, std::span<const float> x, Policy policy, std::size_t step,
                       std::uint64_t seed, const CurveAux& aux = {});

// Trapezoidal area under the curve over n.
double curve_area(const ErrorCurve& curve);

struct RecallResult {
    std::vector<double> per_step;
    double mean = 0.0;
};

// Recall of the calibration's static top-ceil(fraction * d_in) set against
// each step's exact top set.
RecallResult recall_experiment(const ActivationTrace& trace, const ActivationTrace& calibration,
                               double top_fraction);

struct SweepRow {
    int r_bits = 4;
    std::size_t k_chunk = 0;
    std::size_t budget_bytes = 0;    // requested bytes per 1024 input channels
    std::size_t transfer_bytes = 0;  // k_chunk * d_out * r_bits / 8
    double mse = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::string> notices;  // omitted (budget, bits) pairs
};

inline constexpr int kSweepBits[] = {2, 4, 8, 16};

// k_chunk that spends budget_bytes per chunk at r_bits; 0 if none fits.
std::size_t kchunk_for_budget(std::size_t budget_bytes, std::size_t d_out, int r_bits);

// Residual bitwidth comparison at matched transfer budgets, with exact Top-K
// selection and mean output MSE over the trace.
SweepResult bitwidth_sweep(const WeightSet& ws, const ActivationTrace& trace, std::span<const std::size_t> budgets);

struct PolicyStats {
    Policy policy = Policy::exact;
    double mse = 0.0;
    double recall = 0.0;
};

// Random, static, decdec and exact selection at the same k over the trace.
// Step s draws its randomness from seed + s.
std::vector<PolicyStats> selection_comparison(const WeightSet& ws, const QuantizedResidual& qr,
                                              const ActivationTrace& trace, const ActivationTrace& calibration,
                                              std::size_t k_chunk, const BucketBoundaries& boundaries,
                                              std::uint64_t seed);

} // namespace decdec
