#include "decdec/errors.hpp"
#include "decdec/quantizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace decdec;

namespace {

Matrix normal_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = static_cast<float>(n(rng));
    return m;
}

// Scalar round-to-nearest onto 2^bits levels between group min and max.
double rtn_oracle(double v, double lo, double hi, int bits) {
    if (hi == lo) return lo;
    const double levels = (1 << bits) - 1;
    const double step = (hi - lo) / levels;
    double q = std::floor((v - lo) / step + 0.5);
    q = std::min(std::max(q, 0.0), levels);
    return lo + q * step;
}

double column_mse(const std::vector<float>& col, double scale, int qmax) {
    double sum = 0.0;
    for (float v : col) {
        double q = std::round(v / scale);
        q = std::min(std::max(q, -double(qmax)), double(qmax));
        sum += (v - scale * q) * (v - scale * q);
    }
    return sum / col.size();
}

} // namespace

TEST(BaseQuantize, ZeroMatrixIsFixedPoint) {
    const WeightSet ws = base_quantize(Matrix(4, 4), 3, 4);
    for (float v : ws.w_hat.data()) EXPECT_EQ(v, 0.0f);
    for (float v : ws.residual.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BaseQuantize, GridPointsAreExact) {
    // Every column takes the 3-bit levels 0..7 of [-1, 6] in shuffled order.
    Matrix w(8, 3);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < 8; ++r) w(r, c) = static_cast<float>(int((r * 3 + c * 5) % 8) - 1);
    const WeightSet ws = base_quantize(w, 3, 8);
    for (float v : ws.residual.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BaseQuantize, Idempotent) {
    const Matrix w = normal_matrix(256, 64, 11);
    for (int bits : {2, 3, 4}) {
        const WeightSet once = base_quantize(w, bits, 128);
        const WeightSet twice = base_quantize(once.w_hat, bits, 128);
        EXPECT_EQ(once.w_hat, twice.w_hat) << bits;
        for (float v : twice.residual.data()) ASSERT_EQ(v, 0.0f);
    }
}

TEST(BaseQuantize, MatchesScalarOracle) {
    const Matrix w = normal_matrix(128, 128, 3);
    const WeightSet ws = base_quantize(w, 3, 128);
    for (std::size_t c = 0; c < 128; ++c) {
        double lo = w(0, c), hi = w(0, c);
        for (std::size_t r = 0; r < 128; ++r) {
            lo = std::min(lo, double(w(r, c)));
            hi = std::max(hi, double(w(r, c)));
        }
        double mse_oracle = 0.0, mse_impl = 0.0;
        for (std::size_t r = 0; r < 128; ++r) {
            // w_hat and the residual are f32 matrices, so round like storage does.
            const float w_hat = static_cast<float>(rtn_oracle(w(r, c), lo, hi, 3));
            const double e = w(r, c) - w_hat;
            mse_oracle += e * e;
            mse_impl += double(ws.residual(r, c)) * ws.residual(r, c);
        }
        EXPECT_NEAR(mse_impl / 128, mse_oracle / 128, 1e-12) << "column " << c;
    }
}

TEST(BaseQuantize, ResidualIsExactDifference) {
    const Matrix w = normal_matrix(256, 32, 5);
    const WeightSet ws = base_quantize(w, 4, 64);
    for (std::size_t i = 0; i < w.size(); ++i) {
        ASSERT_EQ(ws.residual.data()[i], ws.w.data()[i] - ws.w_hat.data()[i]);
    }
}

TEST(BaseQuantize, Errors) {
    EXPECT_THROW(base_quantize(Matrix(4, 4), 5, 4), PreconditionError);
    EXPECT_THROW(base_quantize(Matrix(6, 4), 3, 4), PreconditionError);
    Matrix bad(4, 4);
    bad(1, 1) = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(base_quantize(bad, 3, 4), PreconditionError);
    EXPECT_THROW(make_weight_set(Matrix(4, 4), Matrix(4, 5)), PreconditionError);
}

TEST(ResidualQuantize, ZeroChannelConvention) {
    Matrix r(5, 2);
    r(0, 1) = 0.5f;
    const QuantizedResidual qr = residual_quantize(r, 4);
    EXPECT_EQ(qr.scales[0], 1.0f);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(qr.code(i, 0), 0.0f);
    EXPECT_GT(qr.scales[1], 0.0f);
}

TEST(ResidualQuantize, ThreeEntryExample) {
    for (float s : {0.01f, 0.37f, 2.0f}) {
        Matrix r(3, 1, std::vector<float>{7 * s, -7 * s, 3.5f * s});
        const QuantizedResidual qr = residual_quantize(r, 4);
        // Brute-force every grid scale; the chosen one must be the argmin.
        double best = std::numeric_limits<double>::infinity();
        float best_scale = 0.0f;
        const auto col = r.column(0);
        double max_abs = 0.0;
        for (float v : col) max_abs = std::max(max_abs, double(std::fabs(v)));
        for (int t = 0; t < 128; ++t) {
            const float cand = static_cast<float>(max_abs / 7 * (0.30 + 0.70 * t / 127));
            const double mse = column_mse(col, cand, 7);
            if (mse <= best) {
                best = mse;
                best_scale = cand;
            }
        }
        EXPECT_EQ(qr.scales[0], best_scale);
        const double mse_at_s = column_mse(col, s, 7);
        EXPECT_NEAR(mse_at_s, std::pow(0.5 * s, 2) / 3, 1e-6 * s * s);
        EXPECT_LE(per_channel_mse(r, qr)[0], mse_at_s * (1 + 1e-9));
    }
}

TEST(ResidualQuantize, ThreeEntryCodesAtUnitScale) {
    // With the naive scale the stored codes are [7, -7, 4] (3.5 rounds away from zero).
    Matrix r(3, 1, std::vector<float>{7, -7, 3.5f});
    const QuantizedResidual qr = residual_quantize(r, 4);
    const Matrix rows = residual_dequantize_rows(qr, std::vector<std::size_t>{0, 1, 2});
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(rows(i, 0), qr.scales[0] * qr.code(i, 0));
    }
    if (qr.scales[0] == 1.0f) {
        EXPECT_EQ(qr.code(0, 0), 7.0f);
        EXPECT_EQ(qr.code(1, 0), -7.0f);
        EXPECT_EQ(qr.code(2, 0), 4.0f);
    }
}

TEST(ResidualQuantize, BeatsNaiveScaleOnGaussianChannels) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix r = normal_matrix(4096, 1, seed, 0.01);
        const QuantizedResidual qr = residual_quantize(r, 4);
        const auto col = r.column(0);
        double max_abs = 0.0;
        for (float v : col) max_abs = std::max(max_abs, double(std::fabs(v)));
        const double naive = column_mse(col, static_cast<float>(max_abs / 7), 7);
        EXPECT_LE(per_channel_mse(r, qr)[0], naive * (1 + 1e-12)) << seed;
    }
}

TEST(ResidualQuantize, GridOptimalityAndClipBound) {
    const Matrix r = normal_matrix(200, 24, 9);
    for (int bits : {2, 4, 8}) {
        const QuantizedResidual qr = residual_quantize(r, bits);
        ASSERT_NO_THROW(qr.validate());
        const int qmax = (1 << (bits - 1)) - 1;
        for (std::size_t c = 0; c < r.cols(); ++c) {
            const auto col = r.column(c);
            const double chosen = column_mse(col, qr.scales[c], qmax);
            double max_abs = 0.0;
            for (float v : col) max_abs = std::max(max_abs, double(std::fabs(v)));
            for (int t = 0; t < 128; ++t) {
                const float cand = static_cast<float>(max_abs / qmax * (0.30 + 0.70 * t / 127));
                ASSERT_GE(column_mse(col, cand, qmax), chosen) << bits << " " << c << " " << t;
            }
            for (std::size_t i = 0; i < r.rows(); ++i) {
                ASSERT_LE(std::fabs(qr.code(i, c)), qmax);
            }
        }
    }
}

TEST(ResidualQuantize, MonotoneFidelityInBits) {
    const Matrix r = normal_matrix(512, 32, 21);
    const auto m2 = per_channel_mse(r, residual_quantize(r, 2));
    const auto m4 = per_channel_mse(r, residual_quantize(r, 4));
    const auto m8 = per_channel_mse(r, residual_quantize(r, 8));
    for (std::size_t c = 0; c < 32; ++c) {
        EXPECT_LE(m8[c], m4[c]);
        EXPECT_LE(m4[c], m2[c]);
    }
}

TEST(ResidualQuantize, SixteenBitRoundTripIsExact) {
    const Matrix r = normal_matrix(64, 16, 4);
    const QuantizedResidual qr = residual_quantize(r, 16);
    for (float s : qr.scales) EXPECT_EQ(s, 1.0f);
    EXPECT_EQ(residual_dequantize(qr), r);
    std::vector<std::size_t> all(64);
    for (std::size_t i = 0; i < 64; ++i) all[i] = i;
    EXPECT_EQ(residual_dequantize_rows(qr, all), r);
}

TEST(ResidualQuantize, DequantizeRows) {
    const Matrix r = normal_matrix(10, 4, 8);
    const QuantizedResidual qr = residual_quantize(r, 4);
    const Matrix empty = residual_dequantize_rows(qr, {});
    EXPECT_EQ(empty.rows(), 0u);
    EXPECT_EQ(empty.cols(), 4u);
    const Matrix picked = residual_dequantize_rows(qr, std::vector<std::size_t>{7, 2});
    for (std::size_t c = 0; c < 4; ++c) {
        EXPECT_EQ(picked(0, c), qr.scales[c] * qr.code(7, c));
        EXPECT_EQ(picked(1, c), qr.scales[c] * qr.code(2, c));
    }
    EXPECT_THROW(residual_dequantize_rows(qr, std::vector<std::size_t>{10}), PreconditionError);
}

TEST(ResidualQuantize, Errors) {
    EXPECT_THROW(residual_quantize(Matrix(2, 2), 3), PreconditionError);
    Matrix bad(2, 2);
    bad(0, 0) = std::numeric_limits<float>::infinity();
    EXPECT_THROW(residual_quantize(bad, 4), PreconditionError);
}

TEST(ResidualQuantize, ValidateCatchesCorruption) {
    QuantizedResidual qr = residual_quantize(normal_matrix(4, 2, 1), 4);
    qr.codes[0] = 8;
    EXPECT_THROW(qr.validate(), InvariantError);
}
