#pragma once

#include "decdec/matrix.hpp"
#include "decdec/quantizer.hpp"
#include "decdec/selection.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace decdec {

using OutputVector = std::vector<float>;

// o[j] = sum_i w[i][j] * x[i], accumulated in f64 in ascending i.
OutputVector gemv(const Matrix& w, std::span<const float> x);

// Compensation term over the selected input channels:
// o_dec[j] = sum_{i in sel} x[i] * scale[j] * code[i][j].
OutputVector dec_gemv(const QuantizedResidual& qr, const Selection& sel);

// Base product plus compensation for an explicit selection.
OutputVector compensated_gemv(const WeightSet& ws, const QuantizedResidual& qr, std::span<const float> x,
                              const Selection& sel);

// o = W_hat x + dec_gemv(qr, approx_topk(x, k_chunk, b, seed)). k_chunk == 0
// skips compensation and returns the base product unchanged.
OutputVector decdec_forward(const WeightSet& ws, const QuantizedResidual& qr, std::span<const float> x,
                            std::size_t k_chunk, const BucketBoundaries& b, std::uint64_t seed);

double output_mse(std::span<const float> a, std::span<const float> b);

} // namespace decdec
