#pragma once

#include "decdec/hwmodel.hpp"

#include <span>
#include <string>
#include <vector>

namespace decdec {

struct LayerSetting {
    std::string label;
    int n_tb = 1;
    int k_chunk = 0;

    bool operator==(const LayerSetting&) const = default;
};

struct TunerResult {
    int n_max_tb = 1;
    std::vector<LayerSetting> per_layer;  // model layer order
    double predicted_slowdown = 0.0;
    std::vector<std::string> frozen_zero;

    bool operator==(const TunerResult&) const = default;
};

struct Phase1Result {
    int n_max_tb = 1;
    int steps = 0;
    std::vector<std::string> frozen_zero;
};

// Sum over layer classes of count_per_block * num_blocks * oracle time.
// settings must list every layer of the model, in model order.
double total_time(const ModelShape& model, std::span<const LayerSetting> settings, const TimingOracle& oracle);

// Per-layer n_tb derived from n_max_tb, every k_chunk zero.
std::vector<LayerSetting> settings_for(const ModelShape& model, int n_max_tb);

// Largest k_chunk a layer may take: the shared-memory bound, further capped
// by what the oracle can answer.
int kchunk_limit(const LayerShape& layer, int n_tb, const HardwareProfile& profile, const TimingOracle& oracle);

// Number of unit increments applied to every non-frozen layer at once before
// the total exceeds (1 + target) times the uncompensated total.
int uniform_steps(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                  double target_slowdown, int n_max_tb, std::span<const std::string> frozen_zero);

// Scans n_max_tb over 1..sm_count/2 and keeps the value allowing the most
// uniform steps (ties to the smaller value). When no value allows a single
// step, the layer with the smallest weight footprint is pinned to k_chunk = 0
// and the scan repeats.
Phase1Result phase1(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                    double target_slowdown);

// Starts every non-frozen layer at the uniform step count for n_max_tb, then
// greedily adds single k_chunk increments, cheapest marginal time first,
// freezing a layer the first time its increment does not fit.
TunerResult phase2(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                   double target_slowdown, int n_max_tb, std::span<const std::string> frozen_zero);

TunerResult tune(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                 double target_slowdown);

// "n_max / (k_1, k_2, ...)" in model layer order.
std::string format_tuner_line(const TunerResult& result);

struct BlockLayerSetting {
    int block = 0;
    int bits = 3;
    std::string label;
    int n_tb = 1;
    int k_chunk = 0;
};

// Mixed-precision assignment: blocks quantized to 3 bits take the 3-bit
// tuning result, 4-bit blocks the 4-bit result. Both results must cover the
// same labels in the same order.
std::vector<BlockLayerSetting> merge_mixed_precision(const TunerResult& three_bit, const TunerResult& four_bit,
                                                     std::span<const int> block_bits);

} // namespace decdec
