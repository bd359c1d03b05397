#include "decdec/quantizer.hpp"

#include "decdec/errors.hpp"
#include "decdec/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace decdec {

namespace {

void require_weights(const Matrix& m, const char* what) {
    require(m.rows() >= 1 && m.cols() >= 1, std::string(what) + " must be at least 1x1");
    require(all_finite(m.data()), std::string(what) + " contains non-finite values");
}

// Candidate scale for grid point t; the f32 value is the one that is stored.
float grid_scale(double max_abs, int qmax, int t) {
    const double g = kScaleGridLow + (kScaleGridHigh - kScaleGridLow) * t / (kScaleGridPoints - 1);
    const float s = static_cast<float>(max_abs / qmax * g);
    return std::max(s, std::numeric_limits<float>::denorm_min());
}

double clip_round(double t, int qmax) { return std::clamp(std::round(t), -double(qmax), double(qmax)); }

// MSE of encoding at scale s. The symmetric code makes the error of v and -v
// equal, so this works on sorted magnitudes: a binary search per code level
// finds the magnitudes that round to it, then the errors are summed directly.
double encode_mse(std::span<const double> sorted_abs, float scale, int qmax) {
    const double s = scale;
    double sum = 0.0;
    auto begin = sorted_abs.begin();
    for (int q = 0; q <= qmax; ++q) {
        auto end = q == qmax ? sorted_abs.end()
                             : std::partition_point(begin, sorted_abs.end(),
                                                    [&](double a) { return std::round(a / s) <= q; });
        const double level = s * q;
        for (auto it = begin; it != end; ++it) {
            const double e = *it - level;
            sum += e * e;
        }
        begin = end;
    }
    return sum / static_cast<double>(sorted_abs.size());
}

} // namespace

WeightSet make_weight_set(Matrix w, Matrix w_hat) {
    require_weights(w, "w");
    require_weights(w_hat, "w_hat");
    require(w.same_shape(w_hat), "w and w_hat dimensions differ");

    Matrix residual(w.rows(), w.cols());
    auto out = residual.data();
    auto a = w.data();
    auto b = w_hat.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return WeightSet{std::move(w), std::move(w_hat), std::move(residual)};
}

WeightSet base_quantize(const Matrix& w, int bits, std::size_t group_size) {
    require(bits >= 2 && bits <= 4, "base bitwidth must be 2, 3 or 4");
    require_weights(w, "w");
    require(group_size >= 1 && w.rows() % group_size == 0,
            "group_size " + std::to_string(group_size) + " does not divide d_in " +
                std::to_string(w.rows()));

    const double levels = double((1 << bits) - 1);
    Matrix w_hat(w.rows(), w.cols());
    const std::size_t groups = w.rows() / group_size;

    parallel_for(w.cols(), [&](std::size_t c) {
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t begin = g * group_size;
            const std::size_t end = begin + group_size;
            float lo = w(begin, c);
            float hi = lo;
            for (std::size_t r = begin + 1; r < end; ++r) {
                lo = std::min(lo, w(r, c));
                hi = std::max(hi, w(r, c));
            }
            if (hi == lo) {
                for (std::size_t r = begin; r < end; ++r) {
                    w_hat(r, c) = lo;
                }
                continue;
            }
            // Computed in f64 so that re-quantizing w_hat reproduces the same
            // group min, max and step.
            const double step = (double(hi) - double(lo)) / levels;
            for (std::size_t r = begin; r < end; ++r) {
                const double q = std::clamp(std::round((double(w(r, c)) - lo) / step), 0.0, levels);
                w_hat(r, c) = static_cast<float>(lo + q * step);
            }
        }
    });

    return make_weight_set(w, std::move(w_hat));
}

int residual_qmax(int bits) {
    require(bits == 2 || bits == 4 || bits == 8 || bits == 16,
            "residual bitwidth must be 2, 4, 8 or 16, got " + std::to_string(bits));
    return bits == 16 ? 0 : (1 << (bits - 1)) - 1;
}

void QuantizedResidual::validate() const {
    const auto fail = [](const std::string& msg) { throw InvariantError("quantized residual: " + msg); };
    if (bits != 2 && bits != 4 && bits != 8 && bits != 16) {
        fail("unsupported bitwidth " + std::to_string(bits));
    }
    if (scales.size() != d_out) {
        fail("scale count does not match d_out");
    }
    if (bits == 16) {
        if (raw.rows() != d_in || raw.cols() != d_out) {
            fail("raw payload shape mismatch");
        }
        for (float s : scales) {
            if (s != 1.0f) {
                fail("16-bit scales must be 1");
            }
        }
        return;
    }
    if (codes.size() != d_in * d_out) {
        fail("code count does not match d_in x d_out");
    }
    const int qmax = residual_qmax(bits);
    for (auto q : codes) {
        if (q > qmax || q < -qmax) {
            fail("code outside clip bound");
        }
    }
    for (float s : scales) {
        if (!(s > 0.0f) || !std::isfinite(s)) {
            fail("scale must be positive and finite");
        }
    }
}

QuantizedResidual residual_quantize(const Matrix& residual, int bits) {
    const int qmax = residual_qmax(bits);
    require(residual.rows() >= 1 && residual.cols() >= 1, "residual must be at least 1x1");
    require(all_finite(residual.data()), "residual contains non-finite values");

    QuantizedResidual qr;
    qr.bits = bits;
    qr.d_in = residual.rows();
    qr.d_out = residual.cols();
    qr.scales.assign(qr.d_out, 1.0f);

    if (bits == 16) {
        qr.raw = residual;
        return qr;
    }

    qr.codes.assign(qr.d_in * qr.d_out, 0);
    parallel_for(qr.d_out, [&](std::size_t c) {
        std::vector<double> magnitudes(qr.d_in);
        for (std::size_t r = 0; r < qr.d_in; ++r) {
            magnitudes[r] = std::fabs(double(residual(r, c)));
        }
        std::sort(magnitudes.begin(), magnitudes.end());
        const double max_abs = magnitudes.back();
        if (max_abs == 0.0) {
            return;  // scale 1, codes 0
        }

        float best_scale = 0.0f;
        double best_mse = std::numeric_limits<double>::infinity();
        for (int t = 0; t < kScaleGridPoints; ++t) {
            const float s = grid_scale(max_abs, qmax, t);
            const double mse = encode_mse(magnitudes, s, qmax);
            if (mse <= best_mse) {  // ties go to the larger scale
                best_mse = mse;
                best_scale = s;
            }
        }

        qr.scales[c] = best_scale;
        for (std::size_t r = 0; r < qr.d_in; ++r) {
            const double t = double(residual(r, c)) / double(best_scale);
            qr.codes[r * qr.d_out + c] = static_cast<std::int8_t>(clip_round(t, qmax));
        }
    });
    return qr;
}

Matrix residual_dequantize_rows(const QuantizedResidual& qr, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), qr.d_out);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < qr.d_in, "row index " + std::to_string(rows[i]) + " out of range [0, " +
                                       std::to_string(qr.d_in) + ")");
        for (std::size_t c = 0; c < qr.d_out; ++c) {
            out(i, c) = qr.value(rows[i], c);
        }
    }
    return out;
}

Matrix residual_dequantize(const QuantizedResidual& qr) {
    std::vector<std::size_t> all(qr.d_in);
    for (std::size_t r = 0; r < qr.d_in; ++r) {
        all[r] = r;
    }
    return residual_dequantize_rows(qr, all);
}

std::vector<double> per_channel_mse(const Matrix& residual, const QuantizedResidual& qr) {
    require(residual.rows() == qr.d_in && residual.cols() == qr.d_out, "residual shape mismatch");
    std::vector<double> mse(qr.d_out, 0.0);
    for (std::size_t r = 0; r < qr.d_in; ++r) {
        for (std::size_t c = 0; c < qr.d_out; ++c) {
            const double e = double(residual(r, c)) - double(qr.value(r, c));
            mse[c] += e * e;
        }
    }
    for (auto& m : mse) {
        m /= static_cast<double>(qr.d_in);
    }
    return mse;
}

} // namespace decdec
