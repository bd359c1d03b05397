#include "decdec/selection.hpp"

#include "decdec/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace decdec {

ActivationTrace::ActivationTrace(Matrix steps) : steps_(std::move(steps)) {
    require(steps_.rows() >= 1 && steps_.cols() >= 1, "activation trace must have at least one step");
    require(all_finite(steps_.data()), "activation trace contains non-finite values");
}

BucketBoundaries BucketBoundaries::make(float b0, float b15, std::size_t k) {
    require(std::isfinite(b0) && std::isfinite(b15), "bucket boundaries must be finite");
    require(b15 > 0.0f, "b15 must be positive");
    require(b0 >= b15, "b0 must be >= b15");
    return BucketBoundaries{b0, b15, k};
}

Selection make_selection(std::span<const float> x, std::vector<std::size_t> indices) {
    std::sort(indices.begin(), indices.end());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < x.size(), "selection index out of range");
        require(i == 0 || indices[i] != indices[i - 1], "duplicate selection index");
    }
    Selection sel;
    sel.values.reserve(indices.size());
    for (auto i : indices) {
        sel.values.push_back(x[i]);
    }
    sel.indices = std::move(indices);
    return sel;
}

namespace {

bool magnitude_before(std::span<const float> x, std::size_t a, std::size_t b) {
    const float ma = std::fabs(x[a]);
    const float mb = std::fabs(x[b]);
    return ma > mb || (ma == mb && a < b);
}

float kth_largest_magnitude(std::span<const float> row, std::size_t k, std::vector<float>& scratch) {
    scratch.resize(row.size());
    std::transform(row.begin(), row.end(), scratch.begin(), [](float v) { return std::fabs(v); });
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end(), std::greater<>());
    return scratch[k - 1];
}

} // namespace

std::vector<std::size_t> magnitude_order(std::span<const float> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return magnitude_before(x, a, b); });
    return order;
}

Selection exact_topk(std::span<const float> x, std::size_t k) {
    require(k >= 1 && k <= x.size(),
            "k=" + std::to_string(k) + " out of range [1, " + std::to_string(x.size()) + "]");
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::size_t a, std::size_t b) { return magnitude_before(x, a, b); });
    order.resize(k);
    return make_selection(x, std::move(order));
}

BucketBoundaries derive_boundaries(const ActivationTrace& calibration, std::size_t k) {
    require(k >= 1 && k <= calibration.d_in(),
            "k=" + std::to_string(k) + " out of range [1, " + std::to_string(calibration.d_in()) + "]");
    float b0 = 0.0f;
    float b15 = 0.0f;
    std::vector<float> scratch;
    for (std::size_t s = 0; s < calibration.num_steps(); ++s) {
        const auto row = calibration.step(s);
        for (float v : row) {
            b0 = std::max(b0, std::fabs(v));
        }
        b15 = std::max(b15, kth_largest_magnitude(row, k, scratch));
    }
    require(b15 > 0.0f, "degenerate calibration: k-th largest magnitude is zero in every row");
    return BucketBoundaries::make(b0, b15, k);
}

int bucket_index(float magnitude, const BucketBoundaries& b) {
    if (magnitude >= b.b15) {
        if (b.b0 <= b.b15) {
            return 0;
        }
        const float step = (b.b0 - b.b15) / 16.0f;
        const float j = std::floor((magnitude - b.b15) / step);
        return j >= 15.0f ? 0 : 15 - static_cast<int>(j);
    }
    const float step = b.b15 / 16.0f;
    const float j = std::min(15.0f, std::floor(magnitude / step));
    return 31 - static_cast<int>(j);
}

std::size_t num_chunks(std::size_t d_in) { return (d_in + kChunkSize - 1) / kChunkSize; }

std::size_t selected_count(std::size_t d_in, std::size_t k_chunk) {
    std::size_t total = 0;
    for (std::size_t begin = 0; begin < d_in; begin += kChunkSize) {
        total += std::min(k_chunk, std::min(kChunkSize, d_in - begin));
    }
    return total;
}

Selection approx_topk(std::span<const float> x, std::size_t k_chunk, const BucketBoundaries& b,
                      std::uint64_t seed) {
    const std::size_t d_in = x.size();
    require(d_in >= 1, "activation vector is empty");
    require(k_chunk >= 1 && k_chunk <= kChunkSize,
            "k_chunk=" + std::to_string(k_chunk) + " out of range [1, 1024]");
    require(b.k == k_chunk * num_chunks(d_in),
            "boundaries were derived for k=" + std::to_string(b.k) + ", expected " +
                std::to_string(k_chunk * num_chunks(d_in)));
    require(all_finite(x), "activation vector contains non-finite values");

    std::vector<std::size_t> chosen;
    chosen.reserve(selected_count(d_in, k_chunk));
    std::array<std::vector<std::size_t>, kNumBuckets> buckets;

    for (std::size_t chunk = 0, begin = 0; begin < d_in; ++chunk, begin += kChunkSize) {
        const std::size_t end = std::min(d_in, begin + kChunkSize);
        const std::size_t quota = std::min(k_chunk, end - begin);

        for (auto& bucket : buckets) {
            bucket.clear();
        }
        for (std::size_t i = begin; i < end; ++i) {
            buckets[bucket_index(std::fabs(x[i]), b)].push_back(i);
        }

        std::size_t remaining = quota;
        for (auto& bucket : buckets) {
            if (remaining == 0) {
                break;
            }
            if (bucket.size() <= remaining) {
                chosen.insert(chosen.end(), bucket.begin(), bucket.end());
                remaining -= bucket.size();
                continue;
            }
            // Overflowing bucket: partial Fisher-Yates draws `remaining` members.
            std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(chunk));
            for (std::size_t i = 0; i < remaining; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, bucket.size() - 1);
                std::swap(bucket[i], bucket[pick(rng)]);
            }
            chosen.insert(chosen.end(), bucket.begin(), bucket.begin() + remaining);
            remaining = 0;
        }
    }
    return make_selection(x, std::move(chosen));
}

double recall(std::span<const std::size_t> approx, std::span<const std::size_t> exact) {
    require(!exact.empty(), "recall needs a nonempty exact set");
    std::vector<std::size_t> a(approx.begin(), approx.end());
    std::vector<std::size_t> e(exact.begin(), exact.end());
    std::sort(a.begin(), a.end());
    std::sort(e.begin(), e.end());
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), e.begin(), e.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(e.size());
}

double recall(const Selection& approx, const Selection& exact) {
    require(!approx.indices.empty(), "recall needs a nonempty approximate set");
    return recall(std::span<const std::size_t>(approx.indices), std::span<const std::size_t>(exact.indices));
}

} // namespace decdec
