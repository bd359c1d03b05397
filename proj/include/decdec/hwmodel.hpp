#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace decdec {

struct HardwareProfile {
    std::string name;
    double mem_bw = 0.0;   // bytes/s
    double pcie_bw = 0.0;  // bytes/s
    int sm_count = 1;
    long shared_mem_bytes = 49152;  // per block
    int pcie_saturation_blocks = 8;
    double contention_alpha = 0.2;

    double r_bw() const { return mem_bw / pcie_bw; }
    void validate() const;
};

struct LayerShape {
    std::string label;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    int base_bits = 3;
    int count_per_block = 1;

    void validate() const;
};

struct ModelShape {
    std::vector<LayerShape> layers;
    int num_blocks = 1;

    void validate() const;
};

// Thread-block counts worth trying for one layer: every count up to the number
// of 1024-wide chunks, plus every count that yields a distinct number of
// 256-value output segments per block.
std::vector<int> candidate_ntb(std::size_t d_in, std::size_t d_out);

// Largest candidate <= n_max (1 is always a candidate).
int ntb_for(std::size_t d_in, std::size_t d_out, int n_max);

// Per-block shared memory for the Top-K stage is 128 + 128*k_chunk + 2*1024
// bytes; returns the largest k_chunk that fits.
int max_kchunk(long shared_mem_bytes);

inline constexpr long kMinSharedMemBytes = 128 + 2 * 1024;

// k_chunk at which residual transfer time equals base GEMV time for 4-bit
// residuals: 1024 / R_bw * base_bits / 4.
double knee_point(double r_bw, int base_bits);
double knee_point(const HardwareProfile& profile, int base_bits);

// Device buffer for sc_indices (4 bytes) plus x[sc_indices] (2 bytes).
std::size_t buffer_bytes(std::size_t k_max);

struct LayerTime {
    double total = 0.0;  // seconds
    double base = 0.0;   // seconds, uncontended base GEMV
};

// Two-branch timing model: compensation runs concurrently with the base GEMV,
// so the layer takes max(contended base time, transfer time).
LayerTime analytic_time(const LayerShape& layer, int r_bits, int k_chunk, int n_tb,
                        const HardwareProfile& profile);

// time(layer, n_tb, k_chunk) -> seconds. The tuner only talks to this.
class TimingOracle {
public:
    virtual ~TimingOracle() = default;
    virtual double time(const LayerShape& layer, int n_tb, int k_chunk) const = 0;
    // Largest k_chunk the oracle can answer for this series.
    virtual int k_limit(const LayerShape& /*layer*/, int /*n_tb*/) const {
        return std::numeric_limits<int>::max();
    }
};

class AnalyticOracle final : public TimingOracle {
public:
    AnalyticOracle(HardwareProfile profile, int r_bits);

    double time(const LayerShape& layer, int n_tb, int k_chunk) const override;
    const HardwareProfile& profile() const { return profile_; }
    int r_bits() const { return r_bits_; }

private:
    HardwareProfile profile_;
    int r_bits_;
};

struct TimingSample {
    std::string layer;
    int n_tb = 1;
    int k_chunk = 0;
    double seconds = 0.0;
};

// Measured timings, one series per (layer label, n_tb). Queries between grid
// points interpolate linearly; queries past the grid are errors.
class TableOracle final : public TimingOracle {
public:
    explicit TableOracle(const std::vector<TimingSample>& samples);

    double time(const LayerShape& layer, int n_tb, int k_chunk) const override;
    double time(const std::string& label, int n_tb, int k_chunk) const;
    int k_limit(const LayerShape& layer, int n_tb) const override;

private:
    using Series = std::vector<std::pair<int, double>>;  // (k_chunk, seconds), ascending
    const Series& series(const std::string& label, int n_tb) const;

    std::map<std::pair<std::string, int>, Series> series_;
};

} // namespace decdec
