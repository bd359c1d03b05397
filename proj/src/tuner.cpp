#include "decdec/tuner.hpp"

#include "decdec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace decdec {

namespace {

bool is_frozen(std::span<const std::string> frozen, const std::string& label) {
    return std::find(frozen.begin(), frozen.end(), label) != frozen.end();
}

double layer_weight(const ModelShape& model, std::size_t i) {
    return double(model.num_blocks) * double(model.layers[i].count_per_block);
}

double baseline_time(const ModelShape& model, std::vector<LayerSetting> settings, const TimingOracle& oracle) {
    for (auto& s : settings) {
        s.k_chunk = 0;
    }
    return total_time(model, settings, oracle);
}

double budget_for(double baseline, double target_slowdown) { return (1.0 + target_slowdown) * baseline; }

} // namespace

double total_time(const ModelShape& model, std::span<const LayerSetting> settings, const TimingOracle& oracle) {
    require(settings.size() == model.layers.size(), "assignment does not cover every layer class");
    double total = 0.0;
    for (std::size_t i = 0; i < settings.size(); ++i) {
        require(settings[i].label == model.layers[i].label,
                "assignment label " + settings[i].label + " does not match layer " + model.layers[i].label);
        total += layer_weight(model, i) * oracle.time(model.layers[i], settings[i].n_tb, settings[i].k_chunk);
    }
    return total;
}

std::vector<LayerSetting> settings_for(const ModelShape& model, int n_max_tb) {
    std::vector<LayerSetting> out;
    out.reserve(model.layers.size());
    for (const auto& layer : model.layers) {
        out.push_back({layer.label, ntb_for(layer.d_in, layer.d_out, n_max_tb), 0});
    }
    return out;
}

int kchunk_limit(const LayerShape& layer, int n_tb, const HardwareProfile& profile, const TimingOracle& oracle) {
    return std::min(max_kchunk(profile.shared_mem_bytes), oracle.k_limit(layer, n_tb));
}

int uniform_steps(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                  double target_slowdown, int n_max_tb, std::span<const std::string> frozen_zero) {
    auto settings = settings_for(model, n_max_tb);
    int limit = std::numeric_limits<int>::max();
    bool any_active = false;
    for (std::size_t i = 0; i < settings.size(); ++i) {
        if (!is_frozen(frozen_zero, settings[i].label)) {
            any_active = true;
            limit = std::min(limit, kchunk_limit(model.layers[i], settings[i].n_tb, profile, oracle));
        }
    }
    if (!any_active) {
        return 0;
    }

    const double budget = budget_for(baseline_time(model, settings, oracle), target_slowdown);
    int steps = 0;
    while (steps < limit) {
        for (auto& s : settings) {
            if (!is_frozen(frozen_zero, s.label)) {
                s.k_chunk = steps + 1;
            }
        }
        if (total_time(model, settings, oracle) > budget) {
            break;
        }
        ++steps;
    }
    return steps;
}

Phase1Result phase1(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                    double target_slowdown) {
    model.validate();
    profile.validate();
    require(target_slowdown > 0.0, "target slowdown must be positive");

    const int n_max_limit = std::max(1, profile.sm_count / 2);
    Phase1Result result;
    while (true) {
        result.n_max_tb = 1;
        result.steps = 0;
        for (int n = 1; n <= n_max_limit; ++n) {
            const int steps = uniform_steps(model, profile, oracle, target_slowdown, n, result.frozen_zero);
            if (steps > result.steps) {
                result.steps = steps;
                result.n_max_tb = n;
            }
        }
        if (result.steps > 0 || result.frozen_zero.size() == model.layers.size()) {
            return result;
        }

        // Pin the smallest remaining weight matrix and retry.
        std::size_t smallest = model.layers.size();
        double smallest_size = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const auto& layer = model.layers[i];
            if (is_frozen(result.frozen_zero, layer.label)) {
                continue;
            }
            const double size = double(layer.d_in) * double(layer.d_out) * layer.count_per_block;
            if (size < smallest_size) {
                smallest_size = size;
                smallest = i;
            }
        }
        result.frozen_zero.push_back(model.layers[smallest].label);
    }
}

TunerResult phase2(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                   double target_slowdown, int n_max_tb, std::span<const std::string> frozen_zero) {
    model.validate();
    profile.validate();
    require(target_slowdown > 0.0, "target slowdown must be positive");

    TunerResult result;
    result.n_max_tb = n_max_tb;
    result.frozen_zero.assign(frozen_zero.begin(), frozen_zero.end());
    result.per_layer = settings_for(model, n_max_tb);
    auto& settings = result.per_layer;

    const double baseline = baseline_time(model, settings, oracle);
    const double budget = budget_for(baseline, target_slowdown);
    const int steps = uniform_steps(model, profile, oracle, target_slowdown, n_max_tb, frozen_zero);

    std::vector<std::size_t> active;
    std::vector<int> limits(settings.size());
    for (std::size_t i = 0; i < settings.size(); ++i) {
        limits[i] = kchunk_limit(model.layers[i], settings[i].n_tb, profile, oracle);
        if (!is_frozen(frozen_zero, settings[i].label)) {
            settings[i].k_chunk = steps;
            active.push_back(i);
        }
    }

    while (!active.empty()) {
        std::vector<std::size_t> pending = active;
        while (!pending.empty()) {
            // Marginal costs are refreshed after every accepted increment.
            std::size_t pick = 0;
            double pick_cost = std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < pending.size(); ++p) {
                const std::size_t i = pending[p];
                double cost = std::numeric_limits<double>::infinity();
                if (settings[i].k_chunk < limits[i]) {
                    const auto& layer = model.layers[i];
                    cost = layer_weight(model, i) * (oracle.time(layer, settings[i].n_tb, settings[i].k_chunk + 1) -
                                                      oracle.time(layer, settings[i].n_tb, settings[i].k_chunk));
                }
                if (cost < pick_cost) {  // ties keep model order
                    pick_cost = cost;
                    pick = p;
                }
            }

            const std::size_t i = pending[pick];
            pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(pick));
            bool accepted = false;
            if (settings[i].k_chunk < limits[i]) {
                ++settings[i].k_chunk;
                if (total_time(model, settings, oracle) <= budget) {
                    accepted = true;
                } else {
                    --settings[i].k_chunk;
                }
            }
            if (!accepted) {
                active.erase(std::find(active.begin(), active.end(), i));
            }
        }
    }

    result.predicted_slowdown = total_time(model, settings, oracle) / baseline - 1.0;
    return result;
}

TunerResult tune(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                 double target_slowdown) {
    const Phase1Result p1 = phase1(model, profile, oracle, target_slowdown);
    TunerResult result = phase2(model, profile, oracle, target_slowdown, p1.n_max_tb, p1.frozen_zero);

    for (std::size_t i = 0; i < result.per_layer.size(); ++i) {
        const auto& s = result.per_layer[i];
        const auto& layer = model.layers[i];
        if (s.n_tb != ntb_for(layer.d_in, layer.d_out, result.n_max_tb) ||
            s.k_chunk > kchunk_limit(layer, s.n_tb, profile, oracle)) {
            throw InvariantError("tuner produced an out-of-bounds setting for layer " + s.label);
        }
    }
    if (result.predicted_slowdown > target_slowdown + 1e-12) {
        throw InvariantError("tuner result exceeds the target slowdown");
    }
    return result;
}

std::string format_tuner_line(const TunerResult& result) {
    std::vector<int> ks;
    for (const auto& s : result.per_layer) {
        ks.push_back(s.k_chunk);
    }
    return fmt::format("{} / ({})", result.n_max_tb, fmt::join(ks, ", "));
}

std::vector<BlockLayerSetting> merge_mixed_precision(const TunerResult& three_bit, const TunerResult& four_bit,
                                                     std::span<const int> block_bits) {
    require(three_bit.per_layer.size() == four_bit.per_layer.size(), "tuning results cover different layers");
    for (std::size_t i = 0; i < three_bit.per_layer.size(); ++i) {
        require(three_bit.per_layer[i].label == four_bit.per_layer[i].label,
                "tuning results disagree on layer " + std::to_string(i) + ": " + three_bit.per_layer[i].label +
                    " vs " + four_bit.per_layer[i].label);
    }

    std::vector<BlockLayerSetting> out;
    for (std::size_t b = 0; b < block_bits.size(); ++b) {
        require(block_bits[b] == 3 || block_bits[b] == 4, "block bitwidth must be 3 or 4");
        const TunerResult& src = block_bits[b] == 3 ? three_bit : four_bit;
        for (const auto& s : src.per_layer) {
            out.push_back({static_cast<int>(b), block_bits[b], s.label, s.n_tb, s.k_chunk});
        }
    }
    return out;
}

} // namespace decdec
