#include "decdec/compensation.hpp"

#include "decdec/errors.hpp"

#include <string>

namespace decdec {

namespace {

OutputVector to_f32(const std::vector<double>& acc) {
    return OutputVector(acc.begin(), acc.end());
}

void check_residual_matches(const WeightSet& ws, const QuantizedResidual& qr) {
    require(qr.d_in == ws.d_in() && qr.d_out == ws.d_out(),
            "quantized residual is " + std::to_string(qr.d_in) + "x" + std::to_string(qr.d_out) +
                ", weights are " + std::to_string(ws.d_in()) + "x" + std::to_string(ws.d_out()));
}

} // namespace

OutputVector gemv(const Matrix& w, std::span<const float> x) {
    require(x.size() == w.rows(), "gemv: |x|=" + std::to_string(x.size()) + " but d_in=" +
                                      std::to_string(w.rows()));
    std::vector<double> acc(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double xi = x[i];
        const auto row = w.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            acc[j] += double(row[j]) * xi;
        }
    }
    return to_f32(acc);
}

OutputVector dec_gemv(const QuantizedResidual& qr, const Selection& sel) {
    require(sel.indices.size() == sel.values.size(), "selection indices and values differ in length");
    std::vector<double> acc(qr.d_out, 0.0);
    for (std::size_t n = 0; n < sel.indices.size(); ++n) {
        const std::size_t i = sel.indices[n];
        require(i < qr.d_in, "selected channel " + std::to_string(i) + " out of range");
        const double v = sel.values[n];
        for (std::size_t j = 0; j < qr.d_out; ++j) {
            acc[j] += v * double(qr.scales[j]) * double(qr.code(i, j));
        }
    }
    return to_f32(acc);
}

OutputVector compensated_gemv(const WeightSet& ws, const QuantizedResidual& qr, std::span<const float> x,
                              const Selection& sel) {
    check_residual_matches(ws, qr);
    OutputVector out = gemv(ws.w_hat, x);
    if (sel.indices.empty()) {
        return out;
    }
    const OutputVector dec = dec_gemv(qr, sel);
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] += dec[j];
    }
    return out;
}

OutputVector decdec_forward(const WeightSet& ws, const QuantizedResidual& qr, std::span<const float> x,
                            std::size_t k_chunk, const BucketBoundaries& b, std::uint64_t seed) {
    check_residual_matches(ws, qr);
    if (k_chunk == 0) {
        return gemv(ws.w_hat, x);
    }
    return compensated_gemv(ws, qr, x, approx_topk(x, k_chunk, b, seed));
}

double output_mse(std::span<const float> a, std::span<const float> b) {
    require(a.size() == b.size(), "output_mse: length mismatch");
    require(!a.empty(), "output_mse: empty vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

} // namespace decdec
