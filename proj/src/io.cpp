#include "decdec/io.hpp"

#include "decdec/errors.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <sstream>

namespace decdec {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw FormatError("error reading " + path.string());
    }
    return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw FormatError("error writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw FormatError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
public:
    void bytes(std::string_view s) { out_.append(s); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
        }
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void i8(std::int8_t v) { out_.push_back(static_cast<char>(v)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(std::string_view data, const char* what) : data_(data), what_(what) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
    std::uint32_t u32() {
        auto s = bytes(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= std::uint32_t(static_cast<unsigned char>(s[i])) << (8 * i);
        }
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::int8_t i8() { return static_cast<std::int8_t>(bytes(1)[0]); }

    void expect_end() const {
        if (pos_ != data_.size()) {
            throw FormatError(std::string(what_) + ": " + std::to_string(data_.size() - pos_) + " trailing bytes");
        }
    }
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw FormatError(std::string(what_) + ": truncated");
        }
    }

private:
    std::string_view data_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xffffffffu) {
        throw PreconditionError(std::string(what) + " too large for the file format");
    }
    return static_cast<std::uint32_t>(v);
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

// Non-empty, non-comment lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string_view>> content_lines(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> out;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        out.emplace_back(line_no, line);
    }
    return out;
}

template <typename T>
T parse_number(std::string_view s, const std::string& context) {
    T value{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw FormatError(context + ": cannot parse '" + std::string(s) + "' as a number");
    }
    return value;
}

std::string at_line(const char* what, std::size_t line_no) {
    return std::string(what) + " line " + std::to_string(line_no);
}

} // namespace

std::string encode_ddmx(const Matrix& m) {
    ByteWriter w;
    w.bytes("DDMX");
    w.u32(kFormatVersion);
    w.u32(checked_u32(m.rows(), "row count"));
    w.u32(checked_u32(m.cols(), "column count"));
    w.u8(0);
    for (float v : m.data()) {
        w.f32(v);
    }
    return w.take();
}

Matrix decode_ddmx(std::string_view bytes) {
    ByteReader r(bytes, "DDMX");
    if (r.bytes(4) != "DDMX") {
        throw FormatError("DDMX: bad magic");
    }
    if (const auto version = r.u32(); version != kFormatVersion) {
        throw FormatError("DDMX: unsupported version " + std::to_string(version));
    }
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    if (const auto dtype = r.u8(); dtype != 0) {
        throw FormatError("DDMX: unsupported dtype " + std::to_string(dtype));
    }
    r.need(rows * cols * 4);
    std::vector<float> data(rows * cols);
    for (auto& v : data) {
        v = r.f32();
    }
    r.expect_end();
    return Matrix(rows, cols, std::move(data));
}

Matrix read_ddmx(const fs::path& path) {
    try {
        return decode_ddmx(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_ddmx(const fs::path& path, const Matrix& m) { write_file_atomic(path, encode_ddmx(m)); }

std::string encode_ddqr(const QuantizedResidual& qr) {
    qr.validate();
    ByteWriter w;
    w.bytes("DDQR");
    w.u32(kFormatVersion);
    w.u32(checked_u32(qr.d_in, "d_in"));
    w.u32(checked_u32(qr.d_out, "d_out"));
    w.u8(static_cast<std::uint8_t>(qr.bits));
    for (float s : qr.scales) {
        w.f32(s);
    }
    if (qr.bits == 16) {
        for (float v : qr.raw.data()) {
            w.f32(v);
        }
    } else {
        for (auto c : qr.codes) {
            w.i8(c);
        }
    }
    return w.take();
}

QuantizedResidual decode_ddqr(std::string_view bytes) {
    ByteReader r(bytes, "DDQR");
    if (r.bytes(4) != "DDQR") {
        throw FormatError("DDQR: bad magic");
    }
    if (const auto version = r.u32(); version != kFormatVersion) {
        throw FormatError("DDQR: unsupported version " + std::to_string(version));
    }
    QuantizedResidual qr;
    qr.d_in = r.u32();
    qr.d_out = r.u32();
    qr.bits = r.u8();
    if (qr.bits != 2 && qr.bits != 4 && qr.bits != 8 && qr.bits != 16) {
        throw FormatError("DDQR: unsupported bitwidth " + std::to_string(qr.bits));
    }
    r.need(qr.d_out * 4);
    qr.scales.resize(qr.d_out);
    for (auto& s : qr.scales) {
        s = r.f32();
    }
    const std::size_t n = qr.d_in * qr.d_out;
    if (qr.bits == 16) {
        r.need(n * 4);
        std::vector<float> raw(n);
        for (auto& v : raw) {
            v = r.f32();
        }
        qr.raw = Matrix(qr.d_in, qr.d_out, std::move(raw));
    } else {
        r.need(n);
        qr.codes.resize(n);
        for (auto& c : qr.codes) {
            c = r.i8();
        }
    }
    r.expect_end();
    try {
        qr.validate();
    } catch (const InvariantError& e) {
        throw FormatError(std::string("DDQR: ") + e.what());
    }
    return qr;
}

QuantizedResidual read_ddqr(const fs::path& path) {
    try {
        return decode_ddqr(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_ddqr(const fs::path& path, const QuantizedResidual& qr) { write_file_atomic(path, encode_ddqr(qr)); }

WeightSet import_weight_set(const fs::path& w, const fs::path& w_hat) {
    return make_weight_set(read_ddmx(w), read_ddmx(w_hat));
}

std::string format_boundaries(std::span<const BucketBoundaries> boundaries) {
    std::string out;
    for (const auto& b : boundaries) {
        out += fmt::format("{} {} {}\n", b.k, b.b0, b.b15);
    }
    return out;
}

std::vector<BucketBoundaries> parse_boundaries(std::string_view text) {
    std::vector<BucketBoundaries> out;
    for (auto [line_no, line] : content_lines(text)) {
        const std::string ctx = at_line("boundaries", line_no);
        std::vector<std::string_view> fields;
        for (auto f : split(line, ' ')) {
            if (!f.empty()) {
                fields.push_back(f);
            }
        }
        if (fields.size() != 3) {
            throw FormatError(ctx + ": expected 'k b0 b15'");
        }
        const auto k = parse_number<std::size_t>(fields[0], ctx);
        const auto b0 = parse_number<float>(fields[1], ctx);
        const auto b15 = parse_number<float>(fields[2], ctx);
        try {
            out.push_back(BucketBoundaries::make(b0, b15, k));
        } catch (const PreconditionError& e) {
            throw FormatError(ctx + ": " + e.what());
        }
    }
    return out;
}

HardwareProfile parse_profile(std::string_view text) {
    std::map<std::string, std::string, std::less<>> kv;
    for (auto [line_no, line] : content_lines(text)) {
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw FormatError(at_line("profile", line_no) + ": expected 'key = value'");
        }
        kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }

    HardwareProfile p;
    const auto take = [&](const char* key, bool required) -> const std::string* {
        auto it = kv.find(key);
        if (it == kv.end()) {
            if (required) {
                throw FormatError(std::string("profile: missing key ") + key);
            }
            return nullptr;
        }
        return &it->second;
    };
    const std::string ctx = "profile";
    p.name = *take("name", true);
    p.mem_bw = parse_number<double>(*take("mem_bw_gbps", true), ctx) * 1e9;
    p.pcie_bw = parse_number<double>(*take("pcie_bw_gbps", true), ctx) * 1e9;
    p.sm_count = parse_number<int>(*take("sm_count", true), ctx);
    if (const auto* v = take("shared_mem_bytes", false)) {
        p.shared_mem_bytes = parse_number<long>(*v, ctx);
    }
    if (const auto* v = take("pcie_saturation_blocks", false)) {
        p.pcie_saturation_blocks = parse_number<int>(*v, ctx);
    }
    if (const auto* v = take("contention_alpha", false)) {
        p.contention_alpha = parse_number<double>(*v, ctx);
    }
    for (const auto& [key, value] : kv) {
        static const char* known[] = {"name", "mem_bw_gbps", "pcie_bw_gbps", "sm_count",
                                      "shared_mem_bytes", "pcie_saturation_blocks", "contention_alpha"};
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
            std::end(known)) {
            throw FormatError("profile: unknown key " + key);
        }
    }
    try {
        p.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(e.what());
    }
    return p;
}

std::string format_profile(const HardwareProfile& p) {
    return fmt::format(
        "name = {}\nmem_bw_gbps = {}\npcie_bw_gbps = {}\nsm_count = {}\nshared_mem_bytes = {}\n"
        "pcie_saturation_blocks = {}\ncontention_alpha = {}\n",
        p.name, p.mem_bw / 1e9, p.pcie_bw / 1e9, p.sm_count, p.shared_mem_bytes, p.pcie_saturation_blocks,
        p.contention_alpha);
}

HardwareProfile load_profile(const fs::path& path) {
    try {
        return parse_profile(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<TimingSample> parse_timing_table(std::string_view text) {
    std::vector<TimingSample> out;
    for (auto [line_no, line] : content_lines(text)) {
        const auto fields = split(line, ',');
        const std::string ctx = at_line("timing table", line_no);
        if (fields.size() != 4) {
            throw FormatError(ctx + ": expected layer,n_tb,k_chunk,micros");
        }
        if (fields[0] == "layer") {
            continue;  // header
        }
        TimingSample s;
        s.layer = std::string(fields[0]);
        s.n_tb = parse_number<int>(fields[1], ctx);
        s.k_chunk = parse_number<int>(fields[2], ctx);
        s.seconds = parse_number<double>(fields[3], ctx) * 1e-6;
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_timing_table(std::span<const TimingSample> samples) {
    std::string out = "layer,n_tb,k_chunk,micros\n";
    for (const auto& s : samples) {
        out += fmt::format("{},{},{},{}\n", s.layer, s.n_tb, s.k_chunk, s.seconds * 1e6);
    }
    return out;
}

ModelShape parse_model_shape(std::string_view text) {
    ModelShape model;
    bool have_blocks = false;
    for (auto [line_no, line] : content_lines(text)) {
        const std::string ctx = at_line("model shape", line_no);
        if (const auto eq = line.find('='); eq != std::string_view::npos) {
            if (trim(line.substr(0, eq)) != "num_blocks") {
                throw FormatError(ctx + ": unknown setting");
            }
            model.num_blocks = parse_number<int>(trim(line.substr(eq + 1)), ctx);
            have_blocks = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 5) {
            throw FormatError(ctx + ": expected label,d_in,d_out,base_bits,count_per_block");
        }
        if (fields[0] == "label") {
            continue;  // header
        }
        LayerShape layer;
        layer.label = std::string(fields[0]);
        layer.d_in = parse_number<std::size_t>(fields[1], ctx);
        layer.d_out = parse_number<std::size_t>(fields[2], ctx);
        layer.base_bits = parse_number<int>(fields[3], ctx);
        layer.count_per_block = parse_number<int>(fields[4], ctx);
        model.layers.push_back(std::move(layer));
    }
    if (!have_blocks) {
        throw FormatError("model shape: missing 'num_blocks = <int>' line");
    }
    try {
        model.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(std::string("model shape: ") + e.what());
    }
    return model;
}

std::string format_model_shape(const ModelShape& model) {
    std::string out = fmt::format("num_blocks = {}\nlabel,d_in,d_out,base_bits,count_per_block\n", model.num_blocks);
    for (const auto& l : model.layers) {
        out += fmt::format("{},{},{},{},{}\n", l.label, l.d_in, l.d_out, l.base_bits, l.count_per_block);
    }
    return out;
}

ModelShape load_model_shape(const fs::path& path) {
    try {
        return parse_model_shape(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace decdec
