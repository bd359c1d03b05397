#pragma once

#include "decdec/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace decdec {

inline constexpr std::size_t kChunkSize = 1024;
inline constexpr int kNumBuckets = 32;

// One activation vector per decoding step, [N x d_in]. Doubles as the
// calibration set when deriving bucket boundaries.
class ActivationTrace {
public:
    explicit ActivationTrace(Matrix steps);

    const Matrix& steps() const { return steps_; }
    std::size_t num_steps() const { return steps_.rows(); }
    std::size_t d_in() const { return steps_.cols(); }
    std::span<const float> step(std::size_t i) const { return steps_.row(i); }

private:
    Matrix steps_;
};

// The two calibrated anchors of the 32-bucket layout: b0 is the largest
// calibration magnitude, b15 the largest per-row k-th largest magnitude.
// Intermediate edges are derived on the fly by bucket_index.
struct BucketBoundaries {
    float b0 = 0.0f;
    float b15 = 0.0f;
    std::size_t k = 0;

    // Checks b0 >= b15 > 0 and finiteness.
    static BucketBoundaries make(float b0, float b15, std::size_t k);
};

// Salient channels for one step: strictly ascending indices and the
// activation values at those indices.
struct Selection {
    std::vector<std::size_t> indices;
    std::vector<float> values;

    std::size_t size() const { return indices.size(); }
};

// Sorts and deduplicates-checks the indices, then gathers x at them.
Selection make_selection(std::span<const float> x, std::vector<std::size_t> indices);

// Channel indices ordered by descending |x|, ties by lower index.
std::vector<std::size_t> magnitude_order(std::span<const float> x);

Selection exact_topk(std::span<const float> x, std::size_t k);

BucketBoundaries derive_boundaries(const ActivationTrace& calibration, std::size_t k);

// Maps a magnitude to a bucket in [0, 31]; larger magnitudes land in smaller
// buckets. The upper 16 buckets split [b15, b0) evenly (anything >= the last
// upper edge, including values past b0, falls in bucket 0); the lower 16 split
// [0, b15) evenly.
int bucket_index(float magnitude, const BucketBoundaries& b);

// Number of 1024-wide chunks covering d_in; the last one may be shorter.
std::size_t num_chunks(std::size_t d_in);

// Total channels approx_topk returns for this d_in and per-chunk quota.
std::size_t selected_count(std::size_t d_in, std::size_t k_chunk);

// Chunked bucket Top-K. Each chunk keeps k_chunk channels: whole buckets are
// gathered from bucket 0 upward, and the bucket that would overflow the quota
// is sampled without replacement using a generator seeded with
// seed ^ chunk_index.
Selection approx_topk(std::span<const float> x, std::size_t k_chunk, const BucketBoundaries& b,
                      std::uint64_t seed);

// |approx ∩ exact| / |exact|.
double recall(const Selection& approx, const Selection& exact);
double recall(std::span<const std::size_t> approx, std::span<const std::size_t> exact);

} // namespace decdec
