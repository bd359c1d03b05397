#include "decdec/hwmodel.hpp"

#include "decdec/errors.hpp"
#include "decdec/selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace decdec {

void HardwareProfile::validate() const {
    require(pcie_bw > 0.0 && mem_bw > pcie_bw, "profile " + name + ": need mem_bw > pcie_bw > 0");
    require(sm_count >= 1, "profile " + name + ": sm_count must be >= 1");
    require(shared_mem_bytes >= kMinSharedMemBytes,
            "profile " + name + ": shared_mem_bytes below the k_chunk=0 footprint of 2176");
    require(pcie_saturation_blocks >= 1, "profile " + name + ": pcie_saturation_blocks must be >= 1");
    require(contention_alpha >= 0.0 && contention_alpha < 1.0,
            "profile " + name + ": contention_alpha must be in [0, 1)");
}

void LayerShape::validate() const {
    require(!label.empty(), "layer label is empty");
    require(d_in >= 256 && d_out >= 256, "layer " + label + ": d_in and d_out must be >= 256");
    require(d_out % 256 == 0, "layer " + label + ": d_out must be a multiple of 256");
    require(base_bits >= 2 && base_bits <= 4, "layer " + label + ": base_bits must be 2, 3 or 4");
    require(count_per_block >= 1, "layer " + label + ": count_per_block must be >= 1");
}

void ModelShape::validate() const {
    require(!layers.empty(), "model has no layers");
    require(num_blocks >= 1, "num_blocks must be >= 1");
    std::set<std::string> labels;
    for (const auto& layer : layers) {
        layer.validate();
        require(labels.insert(layer.label).second, "duplicate layer label " + layer.label);
    }
}

std::vector<int> candidate_ntb(std::size_t d_in, std::size_t d_out) {
    require(d_in >= kChunkSize, "candidate_ntb: d_in must be >= 1024");
    require(d_out >= 256 && d_out % 256 == 0, "candidate_ntb: d_out must be a positive multiple of 256");
    const std::size_t chunks = d_in / kChunkSize;
    const std::size_t segments = d_out / 256;
    std::set<int> out;
    for (std::size_t n = 1; n <= chunks; ++n) {
        out.insert(static_cast<int>(n));
    }
    const auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
    for (std::size_t n = 1; n <= segments; ++n) {
        if (ceil_div(segments, ceil_div(segments, n)) == n) {
            out.insert(static_cast<int>(n));
        }
    }
    return {out.begin(), out.end()};
}

int ntb_for(std::size_t d_in, std::size_t d_out, int n_max) {
    require(n_max >= 1, "n_max_tb must be >= 1");
    const auto candidates = candidate_ntb(d_in, d_out);
    auto it = std::upper_bound(candidates.begin(), candidates.end(), n_max);
    return *std::prev(it);
}

int max_kchunk(long shared_mem_bytes) {
    require(shared_mem_bytes >= kMinSharedMemBytes,
            "shared memory budget " + std::to_string(shared_mem_bytes) + " below the 2176-byte minimum");
    return static_cast<int>((shared_mem_bytes - kMinSharedMemBytes) / 128);
}

double knee_point(double r_bw, int base_bits) {
    require(base_bits >= 2 && base_bits <= 4, "base_bits must be 2, 3 or 4");
    require(r_bw > 0.0, "R_bw must be positive");
    return (1024.0 * base_bits) / (4.0 * r_bw);
}

double knee_point(const HardwareProfile& profile, int base_bits) {
    return knee_point(profile.r_bw(), base_bits);
}

std::size_t buffer_bytes(std::size_t k_max) { return k_max * (4 + 2); }

LayerTime analytic_time(const LayerShape& layer, int r_bits, int k_chunk, int n_tb,
                        const HardwareProfile& profile) {
    require(k_chunk >= 0, "k_chunk must be >= 0");
    require(n_tb >= 1, "n_tb must be >= 1");
    require(r_bits == 2 || r_bits == 4 || r_bits == 8 || r_bits == 16, "r_bits must be 2, 4, 8 or 16");

    const double d_in = static_cast<double>(layer.d_in);
    const double d_out = static_cast<double>(layer.d_out);
    LayerTime t;
    t.base = d_in * d_out * layer.base_bits / 8.0 / profile.mem_bw;
    if (k_chunk == 0) {
        t.total = t.base;
        return t;
    }

    const double inflation = 1.0 - profile.contention_alpha * n_tb / profile.sm_count;
    require(inflation > 0.0, "n_tb=" + std::to_string(n_tb) + " saturates the contention model");

    const double k = static_cast<double>(selected_count(layer.d_in, static_cast<std::size_t>(k_chunk)));
    const double fetch_bytes = k * d_out * r_bits / 8.0 + 2.0 * d_out;
    const double pcie_eff = profile.pcie_bw * std::min(1.0, double(n_tb) / profile.pcie_saturation_blocks);
    const double topk = d_in * 2.0 / profile.mem_bw;
    const double t_comp = fetch_bytes / pcie_eff + topk;
    t.total = std::max(t.base / inflation, t_comp);
    return t;
}

AnalyticOracle::AnalyticOracle(HardwareProfile profile, int r_bits)
    : profile_(std::move(profile)), r_bits_(r_bits) {
    profile_.validate();
    require(r_bits_ == 2 || r_bits_ == 4 || r_bits_ == 8 || r_bits_ == 16, "r_bits must be 2, 4, 8 or 16");
}

double AnalyticOracle::time(const LayerShape& layer, int n_tb, int k_chunk) const {
    return analytic_time(layer, r_bits_, k_chunk, n_tb, profile_).total;
}

TableOracle::TableOracle(const std::vector<TimingSample>& samples) {
    for (const auto& s : samples) {
        require(!s.layer.empty(), "timing sample with empty layer label");
        require(s.n_tb >= 1 && s.k_chunk >= 0, "timing sample with invalid n_tb or k_chunk");
        require(std::isfinite(s.seconds) && s.seconds >= 0.0, "timing sample with invalid time");
        series_[{s.layer, s.n_tb}].emplace_back(s.k_chunk, s.seconds);
    }
    for (auto& [key, points] : series_) {
        std::sort(points.begin(), points.end());
        const std::string name = key.first + "/" + std::to_string(key.second);
        require(points.front().first == 0, "timing series " + name + " has no k_chunk=0 baseline");
        for (std::size_t i = 1; i < points.size(); ++i) {
            require(points[i].first != points[i - 1].first, "timing series " + name + " repeats a k_chunk");
            require(points[i].second >= points[i - 1].second,
                    "timing series " + name + " is not non-decreasing in k_chunk");
        }
    }
}

const TableOracle::Series& TableOracle::series(const std::string& label, int n_tb) const {
    auto it = series_.find({label, n_tb});
    require(it != series_.end(), "no timing series for layer " + label + " at n_tb=" + std::to_string(n_tb));
    return it->second;
}

double TableOracle::time(const LayerShape& layer, int n_tb, int k_chunk) const {
    return time(layer.label, n_tb, k_chunk);
}

double TableOracle::time(const std::string& label, int n_tb, int k_chunk) const {
    const Series& points = series(label, n_tb);
    require(k_chunk >= 0 && k_chunk <= points.back().first,
            "k_chunk=" + std::to_string(k_chunk) + " outside the measured grid for " + label);
    auto hi = std::lower_bound(points.begin(), points.end(), k_chunk,
                               [](const auto& p, int k) { return p.first < k; });
    if (hi->first == k_chunk) {
        return hi->second;
    }
    auto lo = std::prev(hi);
    const double f = double(k_chunk - lo->first) / double(hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
}

int TableOracle::k_limit(const LayerShape& layer, int n_tb) const {
    return series(layer.label, n_tb).back().first;
}

} // namespace decdec
