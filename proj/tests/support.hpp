#pragma once

#include "decdec/hwmodel.hpp"
#include "decdec/tuner.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace decdec::testing {

// Random monotone timing table covering every n_tb the tuner can ask for.
// Each series is flat up to a random knee, then rises with a random slope and
// a little non-negative jitter; grid points every `grid` k_chunk up to k_max.
inline std::vector<TimingSample> random_monotone_table(const ModelShape& model, const HardwareProfile& profile,
                                                       std::uint64_t seed, int grid = 8, int k_max = 256) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TimingSample> out;
    for (const auto& layer : model.layers) {
        const double base = 20e-6 + 200e-6 * u(rng) * double(layer.d_in * layer.d_out) / (4096.0 * 28672.0);
        for (int n : candidate_ntb(layer.d_in, layer.d_out)) {
            if (n > std::max(1, profile.sm_count / 2)) {
                break;
            }
            const double knee = 100.0 * u(rng);
            const double slope = base * (0.001 + 0.02 * u(rng));
            const double contention = base * 0.05 * u(rng) * n / profile.sm_count;
            double t = base;
            for (int k = 0; k <= k_max; k += grid) {
                double next = base;
                if (k > 0) {
                    next = base + contention + slope * std::max(0.0, k - knee) + base * 0.002 * u(rng);
                }
                t = std::max(t, next);
                out.push_back({layer.label, n, k, t});
            }
        }
    }
    return out;
}

inline ModelShape llama_like(int num_blocks = 32) {
    ModelShape m;
    m.num_blocks = num_blocks;
    m.layers = {{"qkv", 4096, 6144, 3, 1}, {"o", 4096, 4096, 3, 1}, {"gu", 4096, 28672, 3, 1}, {"d", 14336, 4096, 3, 1}};
    return m;
}

// No single +1 increment on a layer still free to move keeps the model within
// target. Layers pinned at zero by phase 1 are excluded.
inline bool locally_maximal(const ModelShape& model, const HardwareProfile& profile, const TimingOracle& oracle,
                            const TunerResult& r, double target) {
    std::vector<LayerSetting> base = r.per_layer;
    for (auto& s : base) s.k_chunk = 0;
    const double budget = (1.0 + target) * total_time(model, base, oracle);
    for (std::size_t i = 0; i < r.per_layer.size(); ++i) {
        if (std::find(r.frozen_zero.begin(), r.frozen_zero.end(), r.per_layer[i].label) != r.frozen_zero.end()) {
            continue;
        }
        auto bumped = r.per_layer;
        if (bumped[i].k_chunk >= kchunk_limit(model.layers[i], bumped[i].n_tb, profile, oracle)) {
            continue;
        }
        ++bumped[i].k_chunk;
        if (total_time(model, bumped, oracle) <= budget) {
            return false;
        }
    }
    return true;
}

} // namespace decdec::testing
