#pragma once

#include "decdec/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace decdec {

// Full-precision weights, their dequantized base-quantized counterpart and the
// residual between the two, all [d_in x d_out].
struct WeightSet {
    Matrix w;
    Matrix w_hat;
    Matrix residual;

    std::size_t d_in() const { return w.rows(); }
    std::size_t d_out() const { return w.cols(); }
};

// Builds a WeightSet from externally quantized weights; residual = w - w_hat.
WeightSet make_weight_set(Matrix w, Matrix w_hat);

// Group-wise asymmetric round-to-nearest quantization. Each output channel is
// split into contiguous groups of group_size input-channel entries; each group
// is mapped onto 2^bits evenly spaced levels spanning [min, max] of the group.
WeightSet base_quantize(const Matrix& w, int bits, std::size_t group_size = 128);

inline constexpr int kScaleGridPoints = 128;
inline constexpr double kScaleGridLow = 0.30;
inline constexpr double kScaleGridHigh = 1.00;

// Largest code magnitude for a residual bitwidth: 2^(bits-1) - 1.
int residual_qmax(int bits);

// Symmetric per-output-channel residual encoding. For bits < 16 codes hold
// clip(round(r / scale), -qmax, qmax); for bits == 16 the raw residual is kept
// and every scale is 1.
struct QuantizedResidual {
    int bits = 4;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    std::vector<float> scales;       // [d_out]
    std::vector<std::int8_t> codes;  // [d_in x d_out], bits < 16
    Matrix raw;                      // [d_in x d_out], bits == 16

    float code(std::size_t r, std::size_t c) const {
        return bits == 16 ? raw(r, c) : static_cast<float>(codes[r * d_out + c]);
    }
    float value(std::size_t r, std::size_t c) const { return scales[c] * code(r, c); }

    // Throws InvariantError if sizes, clip bounds or scale conventions are broken.
    void validate() const;
};

QuantizedResidual residual_quantize(const Matrix& residual, int bits);

// Dequantizes the listed input-channel rows, in list order.
Matrix residual_dequantize_rows(const QuantizedResidual& qr, std::span<const std::size_t> rows);

Matrix residual_dequantize(const QuantizedResidual& qr);

// Mean squared error between the residual and its dequantized encoding, per
// output channel.
std::vector<double> per_channel_mse(const Matrix& residual, const QuantizedResidual& qr);

} // namespace decdec
