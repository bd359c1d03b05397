#pragma once

#include "decdec/hwmodel.hpp"
#include "decdec/matrix.hpp"
#include "decdec/quantizer.hpp"
#include "decdec/selection.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace decdec {

// Whole-file helpers. Writes go to a sibling temp file that is then renamed
// over the destination.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// FNV-1a 64-bit, used for input digests in provenance headers.
std::uint64_t fnv1a64(std::string_view bytes);

// DDMX: "DDMX", u32 version (1), u32 rows, u32 cols, u8 dtype (0 = f32),
// then row-major f32 payload. All integers and floats little-endian.
std::string encode_ddmx(const Matrix& m);
Matrix decode_ddmx(std::string_view bytes);
Matrix read_ddmx(const std::filesystem::path& path);
void write_ddmx(const std::filesystem::path& path, const Matrix& m);

// DDQR: "DDQR", u32 version (1), u32 d_in, u32 d_out, u8 bits, d_out f32
// scales, then d_in x d_out codes as i8 (2/4/8-bit) or f32 (16-bit).
std::string encode_ddqr(const QuantizedResidual& qr);
QuantizedResidual decode_ddqr(std::string_view bytes);
QuantizedResidual read_ddqr(const std::filesystem::path& path);
void write_ddqr(const std::filesystem::path& path, const QuantizedResidual& qr);

// Reads full-precision and base-quantized weights from two DDMX files.
WeightSet import_weight_set(const std::filesystem::path& w, const std::filesystem::path& w_hat);

// One "k b0 b15" line per boundary set; lines starting with '#' are comments.
std::string format_boundaries(std::span<const BucketBoundaries> boundaries);
std::vector<BucketBoundaries> parse_boundaries(std::string_view text);

// "key = value" lines: name, mem_bw_gbps, pcie_bw_gbps, sm_count,
// shared_mem_bytes, pcie_saturation_blocks, contention_alpha.
HardwareProfile parse_profile(std::string_view text);
std::string format_profile(const HardwareProfile& profile);
HardwareProfile load_profile(const std::filesystem::path& path);

// CSV "layer,n_tb,k_chunk,micros".
std::vector<TimingSample> parse_timing_table(std::string_view text);
std::string format_timing_table(std::span<const TimingSample> samples);

// "num_blocks = N" plus CSV rows "label,d_in,d_out,base_bits,count_per_block".
ModelShape parse_model_shape(std::string_view text);
std::string format_model_shape(const ModelShape& model);
ModelShape load_model_shape(const std::filesystem::path& path);

} // namespace decdec
