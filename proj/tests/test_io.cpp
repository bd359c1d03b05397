#include "decdec/errors.hpp"
#include "decdec/evaluation.hpp"
#include "decdec/io.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>

using namespace decdec;
namespace fs = std::filesystem;

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& s, float f) { put_u32(s, std::bit_cast<std::uint32_t>(f)); }

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / ("decdec_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                                  "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Ddmx, HandEncodedBytes) {
    Matrix m(2, 3);
    float v = 0.5f;
    for (auto& x : m.data()) x = (v *= -1.5f);
    std::string want = "DDMX";
    put_u32(want, 1);
    put_u32(want, 2);
    put_u32(want, 3);
    want.push_back('\0');
    for (float x : m.data()) put_f32(want, x);
    EXPECT_EQ(encode_ddmx(m), want);
    const Matrix back = decode_ddmx(want);
    EXPECT_EQ(back.rows(), 2u);
    EXPECT_EQ(back.cols(), 3u);
    EXPECT_TRUE(std::ranges::equal(back.data(), m.data()));
}

TEST(Ddmx, RejectsMalformed) {
    const std::string good = encode_ddmx(gaussian_matrix(3, 4, 1));
    EXPECT_NO_THROW(decode_ddmx(good));
    EXPECT_THROW(decode_ddmx(good.substr(0, good.size() - 1)), FormatError);
    EXPECT_THROW(decode_ddmx(good.substr(0, 10)), FormatError);
    EXPECT_THROW(decode_ddmx(good + "x"), FormatError);
    EXPECT_THROW(decode_ddmx(""), FormatError);
    std::string bad = good;
    bad[0] = 'X';
    EXPECT_THROW(decode_ddmx(bad), FormatError);
    bad = good;
    bad[4] = 2;
    EXPECT_THROW(decode_ddmx(bad), FormatError);
    bad = good;
    bad[16] = 1;
    EXPECT_THROW(decode_ddmx(bad), FormatError);
}

TEST(Ddqr, RoundTripEveryBitwidth) {
    const Matrix r = gaussian_matrix(40, 12, 3, 0.01);
    for (int bits : {2, 4, 8, 16}) {
        const auto qr = residual_quantize(r, bits);
        const std::string bytes = encode_ddqr(qr);
        const std::size_t payload = bits == 16 ? 40 * 12 * 4 : 40 * 12;
        EXPECT_EQ(bytes.size(), 4 + 12 + 1 + 12 * 4 + payload) << bits;
        EXPECT_EQ(bytes.substr(0, 4), "DDQR");
        EXPECT_EQ(static_cast<unsigned char>(bytes[16]), bits);
        const auto back = decode_ddqr(bytes);
        EXPECT_EQ(back.bits, bits);
        EXPECT_EQ(back.scales, qr.scales);
        for (std::size_t i = 0; i < 40; ++i)
            for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(back.value(i, j), qr.value(i, j));
        EXPECT_EQ(encode_ddqr(back), bytes);
    }
}

TEST(Ddqr, RejectsMalformed) {
    const std::string good = encode_ddqr(residual_quantize(gaussian_matrix(8, 4, 3), 4));
    EXPECT_THROW(decode_ddqr(good.substr(0, good.size() - 2)), FormatError);
    EXPECT_THROW(decode_ddqr(good + "\x01"), FormatError);
    std::string bad = good;
    bad[16] = 3;
    EXPECT_THROW(decode_ddqr(bad), FormatError);
    bad = good;
    bad[3] = 'X';
    EXPECT_THROW(decode_ddqr(bad), FormatError);
    // A 4-bit code outside [-7, 7].
    bad = good;
    bad[bad.size() - 1] = 9;
    EXPECT_THROW(decode_ddqr(bad), FormatError);
}

TEST(Files, AtomicWriteAndRead) {
    const auto dir = temp_dir();
    const auto p = dir / "m.ddmx";
    const Matrix m = gaussian_matrix(5, 7, 2);
    write_ddmx(p, m);
    EXPECT_FALSE(fs::exists(dir / "m.ddmx.tmp"));
    EXPECT_TRUE(std::ranges::equal(read_ddmx(p).data(), m.data()));
    write_file_atomic(p, "DDMX");
    EXPECT_EQ(read_file(p), "DDMX");
    EXPECT_THROW(read_ddmx(p), FormatError);
    EXPECT_THROW(read_file(dir / "missing"), FormatError);

    const auto qp = dir / "r.ddqr";
    const auto qr = residual_quantize(m, 8);
    write_ddqr(qp, qr);
    EXPECT_EQ(read_ddqr(qp).scales, qr.scales);
    EXPECT_THROW(read_ddmx(qp), FormatError);
    fs::remove_all(dir);
}

TEST(Files, ImportWeightSet) {
    const auto dir = temp_dir();
    const Matrix w = gaussian_matrix(6, 3, 4), w_hat = gaussian_matrix(6, 3, 5);
    write_ddmx(dir / "w.ddmx", w);
    write_ddmx(dir / "w_hat.ddmx", w_hat);
    const auto ws = import_weight_set(dir / "w.ddmx", dir / "w_hat.ddmx");
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(ws.residual(i, j), w(i, j) - w_hat(i, j));
    write_ddmx(dir / "small.ddmx", gaussian_matrix(5, 3, 6));
    EXPECT_THROW(import_weight_set(dir / "w.ddmx", dir / "small.ddmx"), PreconditionError);
    fs::remove_all(dir);
}

TEST(Boundaries, ParseAndFormat) {
    const auto b = parse_boundaries("# calibration\n8 4.5 0.25\n\n16 4.5 0.125\n");
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].k, 8u);
    EXPECT_EQ(b[0].b0, 4.5f);
    EXPECT_EQ(b[0].b15, 0.25f);
    EXPECT_EQ(b[1].b15, 0.125f);
    const auto again = parse_boundaries(format_boundaries(b));
    ASSERT_EQ(again.size(), 2u);
    EXPECT_EQ(again[1].k, 16u);
    EXPECT_EQ(again[1].b0, 4.5f);

    // Shortest round-trip formatting keeps every f32 bit.
    const BucketBoundaries odd = BucketBoundaries::make(0.1f + 1e-7f, 1.0e-30f, 3);
    const auto rt = parse_boundaries(format_boundaries(std::vector{odd}));
    EXPECT_EQ(rt[0].b0, odd.b0);
    EXPECT_EQ(rt[0].b15, odd.b15);

    EXPECT_THROW(parse_boundaries("8 4.5\n"), FormatError);
    EXPECT_THROW(parse_boundaries("8 x 1\n"), FormatError);
    EXPECT_THROW(parse_boundaries("8 1 4\n"), FormatError);
}

TEST(Profile, ParseDefaultsAndErrors) {
    const auto p = parse_profile("# test\nname = toy\nmem_bw_gbps = 256\npcie_bw_gbps = 16\nsm_count = 36\n");
    EXPECT_EQ(p.name, "toy");
    EXPECT_EQ(p.mem_bw, 256e9);
    EXPECT_EQ(p.pcie_bw, 16e9);
    EXPECT_EQ(p.sm_count, 36);
    EXPECT_EQ(p.shared_mem_bytes, 49152);
    EXPECT_EQ(p.pcie_saturation_blocks, 8);
    EXPECT_EQ(p.contention_alpha, 0.2);

    const auto q = parse_profile(format_profile(p));
    EXPECT_EQ(q.name, p.name);
    EXPECT_EQ(q.mem_bw, p.mem_bw);
    EXPECT_EQ(q.contention_alpha, p.contention_alpha);

    EXPECT_THROW(parse_profile("name = a\nmem_bw_gbps = 1\npcie_bw_gbps = 1\n"), FormatError);
    EXPECT_THROW(parse_profile("name = a\nmem_bw_gbps = 1\npcie_bw_gbps = 1\nsm_count = 2\nbogus = 1\n"), FormatError);
    EXPECT_THROW(parse_profile("name = a\nmem_bw_gbps = -1\npcie_bw_gbps = 1\nsm_count = 2\n"), FormatError);
    EXPECT_THROW(parse_profile("name a\n"), FormatError);
}

TEST(Profile, BundledTable) {
    struct Row {
        const char* file;
        double mem, pcie;
        int sm;
    };
    for (const Row& r : {Row{"4090", 1008, 32, 128}, Row{"4080s", 736, 32, 80}, Row{"4070s", 504, 32, 56},
                         Row{"4070m", 256, 16, 36}, Row{"4050m", 192, 16, 20}}) {
        const auto p = load_profile(fs::path(DECDEC_DATA_DIR) / "profiles" / (std::string(r.file) + ".txt"));
        EXPECT_EQ(p.mem_bw, r.mem * 1e9) << r.file;
        EXPECT_EQ(p.pcie_bw, r.pcie * 1e9) << r.file;
        EXPECT_EQ(p.sm_count, r.sm) << r.file;
    }
}

TEST(TimingTable, ParseAndFormat) {
    const auto s = parse_timing_table("layer,n_tb,k_chunk,micros\nqkv,8,0,12.5\nqkv,8,16,13\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].layer, "qkv");
    EXPECT_EQ(s[1].n_tb, 8);
    EXPECT_EQ(s[1].k_chunk, 16);
    EXPECT_NEAR(s[0].seconds, 12.5e-6, 1e-18);
    const auto again = parse_timing_table(format_timing_table(s));
    ASSERT_EQ(again.size(), 2u);
    EXPECT_NEAR(again[1].seconds, 13e-6, 1e-18);
    EXPECT_THROW(parse_timing_table("qkv,8,0\n"), FormatError);
    EXPECT_THROW(parse_timing_table("qkv,8,zero,1\n"), FormatError);
}

TEST(ModelShape, ParseFormatAndBundled) {
    const auto m = parse_model_shape("num_blocks = 2\nlabel,d_in,d_out,base_bits,count_per_block\na,1024,512,3,1\nb,2048,1024,4,2\n");
    EXPECT_EQ(m.num_blocks, 2);
    ASSERT_EQ(m.layers.size(), 2u);
    EXPECT_EQ(m.layers[1].label, "b");
    EXPECT_EQ(m.layers[1].d_in, 2048u);
    EXPECT_EQ(m.layers[1].base_bits, 4);
    EXPECT_EQ(m.layers[1].count_per_block, 2);
    const auto again = parse_model_shape(format_model_shape(m));
    EXPECT_EQ(again.layers.size(), 2u);
    EXPECT_EQ(again.num_blocks, 2);
    EXPECT_THROW(parse_model_shape("a,1024,512,3,1\n"), FormatError);
    EXPECT_THROW(parse_model_shape("num_blocks = 1\na,1024,512\n"), FormatError);
    EXPECT_THROW(parse_model_shape("num_blocks = 1\n"), FormatError);

    const auto llama = load_model_shape(fs::path(DECDEC_DATA_DIR) / "llama3-8b-shapes.csv");
    EXPECT_EQ(llama.num_blocks, 32);
    ASSERT_EQ(llama.layers.size(), 4u);
    const std::size_t want[4][2] = {{4096, 6144}, {4096, 4096}, {4096, 28672}, {14336, 4096}};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(llama.layers[i].d_in, want[i][0]);
        EXPECT_EQ(llama.layers[i].d_out, want[i][1]);
        EXPECT_EQ(llama.layers[i].base_bits, 3);
    }
}
