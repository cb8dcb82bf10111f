#include <pmiris/filter_bank.hpp>
#include <pmiris/iris_code.hpp>
#include <pmiris/rng.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cmath>
#include <filesystem>

using namespace pmiris;

namespace {

constexpr double kPi = 3.14159265358979323846;

FilterBank one_kernel_bank(const Kernel2D& k) {
    FilterBank b;
    b.kernels.push_back(k);
    return b;
}

CaptureMeta meta_of(const std::string& id) {
    CaptureMeta m;
    m.subject_id = "s1";
    m.eye = Eye::L;
    m.capture_id = id;
    return m;
}

}  // namespace

TEST_CASE("gabor kernels are zero mean and orientation selective", "[encoding]") {
    auto k = gabor_kernel(9, 15, 7.5, 0.0, 3.0, 0.5, 0.0);
    REQUIRE(k.rows == 9);
    REQUIRE(k.cols == 15);
    double sum = 0.0;
    for (double w : k.weights) sum += w;
    REQUIRE(std::abs(sum) < 1e-12);

    // even-phase horizontal kernel responds to a matching horizontal grating
    // and ignores an orthogonal one
    RealGrid horizontal(64, 32), vertical(64, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 64; ++x) {
            horizontal.at(x, y) = 0.5 + 0.4 * std::cos(2.0 * kPi * x / 7.5);
            vertical.at(x, y) = 0.5 + 0.4 * std::cos(2.0 * kPi * y / 7.5);
        }
    auto rh = convolve2d_wrap_x(horizontal, k);
    auto rv = convolve2d_wrap_x(vertical, k);
    REQUIRE(std::abs(rh.at(32, 16)) > 10.0 * std::abs(rv.at(32, 16)));
}

TEST_CASE("gabor phase controls even versus odd symmetry", "[encoding]") {
    auto even = gabor_kernel(9, 15, 7.5, 0.0, 3.0, 0.5, 0.0);
    auto odd = gabor_kernel(9, 15, 7.5, 0.0, 3.0, 0.5, kPi / 2.0);
    // even: symmetric about the center column; odd: antisymmetric up to the
    // mean correction
    for (int kx = 0; kx < 7; ++kx) {
        REQUIRE(even.at(4, kx) == Catch::Approx(even.at(4, 14 - kx)).margin(1e-9));
        REQUIRE((odd.at(4, kx) + odd.at(4, 14 - kx)) ==
                Catch::Approx(2.0 * odd.at(4, 7)).margin(1e-9));
    }
}

TEST_CASE("default bank shape", "[encoding]") {
    auto bank = default_bank();
    REQUIRE(bank.kernels.size() == 6);
    REQUIRE(bank.max_rows() == 9);
    int cols_seen[3] = {0, 0, 0};
    for (const auto& k : bank.kernels) {
        REQUIRE(k.rows == 9);
        if (k.cols == 15) ++cols_seen[0];
        if (k.cols == 27) ++cols_seen[1];
        if (k.cols == 51) ++cols_seen[2];
        REQUIRE(k.provenance == Provenance::gabor);
    }
    REQUIRE(cols_seen[0] == 2);
    REQUIRE(cols_seen[1] == 2);
    REQUIRE(cols_seen[2] == 2);
    REQUIRE(bank.index_of("gabor-9x27-odd") >= 0);
    REQUIRE_NOTHROW(bank.validate());
}

TEST_CASE("bank validation rejects duplicate labels and empties", "[encoding]") {
    FilterBank empty;
    REQUIRE_THROWS_AS(empty.validate(), InvalidParam);
    auto bank = default_bank();
    bank.kernels.push_back(bank.kernels.front());
    REQUIRE_THROWS_AS(bank.validate(), InvalidParam);
}

TEST_CASE("bank json round trip", "[encoding]") {
    auto dir = std::filesystem::temp_directory_path() / "pmiris_enc_test";
    std::filesystem::create_directories(dir);
    auto bank = default_bank();
    auto path = (dir / "bank.json").string();
    save_bank(path, bank);
    auto back = load_bank(path);
    REQUIRE(back.kernels.size() == bank.kernels.size());
    for (std::size_t i = 0; i < bank.kernels.size(); ++i) {
        REQUIRE(back.kernels[i].label == bank.kernels[i].label);
        REQUIRE(back.kernels[i].rows == bank.kernels[i].rows);
        REQUIRE(back.kernels[i].weights == bank.kernels[i].weights);
        REQUIRE(back.kernels[i].provenance == bank.kernels[i].provenance);
    }

    atomic_write_text(path, "{not json");
    REQUIRE_THROWS_AS(load_bank(path), ParseError);
}

TEST_CASE("bit plane basics and shifts", "[encoding]") {
    BitPlane p(70, 3);  // width not a multiple of 64
    p.set(0, 0, true);
    p.set(69, 2, true);
    p.set(33, 1, true);
    REQUIRE(p.get(0, 0));
    REQUIRE_FALSE(p.get(1, 0));
    REQUIRE(p.count() == 3);

    auto s = p.shifted_columns(1);
    REQUIRE(s.get(1, 0));
    REQUIRE(s.get(0, 2));  // 69 wraps to 0
    REQUIRE(s.count() == 3);

    auto back = s.shifted_columns(-1);
    REQUIRE(back == p);
}

TEST_CASE("bit plane shift matches naive reference on both path widths", "[encoding]") {
    Rng rng(77);
    for (int width : {512, 100, 64, 65}) {
        BitPlane p(width, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < width; ++x) p.set(x, y, rng.below(2) != 0);
        for (int shift : {0, 1, -1, 17, -31, width, 3 * width + 5}) {
            auto fast = p.shifted_columns(shift);
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < width; ++x) {
                    int sx = (x - shift) % width;
                    if (sx < 0) sx += width;
                    REQUIRE(fast.get(x, y) == p.get(sx, y));
                }
        }
    }
}

TEST_CASE("encode binarizes strictly positive responses", "[encoding]") {
    // identity kernel: response equals texture; 0.5 offset decides the bit
    Kernel2D probe(1, 1, {1.0}, Provenance::gabor, "probe");
    RealGrid tex(8, 4, 0.0);
    tex.at(1, 1) = 0.7;
    tex.at(2, 1) = -0.2;
    MaskGrid mask(8, 4, 1);
    auto code = encode(tex, mask, one_kernel_bank(probe), meta_of("bin"));
    REQUIRE(code.planes.size() == 1);
    REQUIRE(code.planes[0].get(1, 1));
    REQUIRE_FALSE(code.planes[0].get(2, 1));
    REQUIRE_FALSE(code.planes[0].get(3, 3));  // exact zero response -> 0
    // 1x1 kernel: no clamp band, mask untouched
    REQUIRE(code.mask.count() == 32);
}

TEST_CASE("encode trims the vertical clamp band from the mask", "[encoding]") {
    auto bank = default_bank();  // max rows 9 -> band 4
    RealGrid tex(polar_width, polar_height, 0.5);
    MaskGrid mask(polar_width, polar_height, 1);
    auto code = encode(tex, mask, bank, meta_of("band"));
    for (int x = 0; x < polar_width; ++x) {
        REQUIRE_FALSE(code.mask.get(x, 0));
        REQUIRE_FALSE(code.mask.get(x, 3));
        REQUIRE(code.mask.get(x, 4));
        REQUIRE(code.mask.get(x, 59));
        REQUIRE_FALSE(code.mask.get(x, 60));
        REQUIRE_FALSE(code.mask.get(x, 63));
    }
}

TEST_CASE("gabor symmetry under point reflection", "[encoding]") {
    auto even = gabor_kernel(9, 15, 7.5, 0.3, 3.0, 0.8, 0.0);
    auto odd = gabor_kernel(9, 15, 7.5, 0.3, 3.0, 0.8, kPi / 2.0);
    for (int ky = 0; ky < 9; ++ky)
        for (int kx = 0; kx < 15; ++kx) {
            REQUIRE(even.at(ky, kx) == Catch::Approx(even.at(8 - ky, 14 - kx)).margin(1e-12));
            REQUIRE(odd.at(ky, kx) == Catch::Approx(-odd.at(8 - ky, 14 - kx)).margin(1e-12));
        }
}

TEST_CASE("negated kernel flips every decided bit", "[encoding]") {
    Rng rng(81);
    RealGrid tex(96, 32);
    for (auto& v : tex.data()) v = rng.uniform();
    MaskGrid mask(96, 32, 1);
    auto k = testref::random_kernel(rng, 5, 9, "k");
    auto neg = k;
    for (auto& w : neg.weights) w = -w;
    neg.label = "neg";
    auto a = encode(tex, mask, one_kernel_bank(k), meta_of("p"));
    auto b = encode(tex, mask, one_kernel_bank(neg), meta_of("n"));
    auto resp = convolve2d_wrap_x(tex, k);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 96; ++x)
            if (std::abs(resp.at(x, y)) > 1e-12)
                REQUIRE(a.planes[0].get(x, y) == !b.planes[0].get(x, y));
}

TEST_CASE("constant texture encodes to all-zero bits", "[encoding]") {
    RealGrid tex(polar_width, polar_height, 0.73);
    MaskGrid mask(polar_width, polar_height, 1);
    auto code = encode(tex, mask, default_bank(), meta_of("const"));
    for (const auto& p : code.planes) REQUIRE(p.count() == 0);
}

TEST_CASE("encode equals the naive sign-of-convolution oracle", "[encoding]") {
    Rng rng(82);
    RealGrid tex(polar_width, polar_height);
    for (auto& v : tex.data()) v = rng.uniform();
    MaskGrid mask(polar_width, polar_height, 1);
    auto k = testref::random_kernel(rng, 9, 15, "probe");
    auto code = encode(tex, mask, one_kernel_bank(k), meta_of("oracle"));
    auto resp = testref::naive_convolve(tex, k);
    for (int y = 0; y < polar_height; ++y)
        for (int x = 0; x < polar_width; ++x)
            REQUIRE(code.planes[0].get(x, y) == (resp.at(x, y) > 0.0));
}

TEST_CASE("encoding commutes with circular column shift", "[encoding]") {
    Rng rng(83);
    RealGrid tex(polar_width, polar_height);
    for (auto& v : tex.data()) v = rng.uniform();
    MaskGrid mask(polar_width, polar_height, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = rng.below(5) != 0;
    auto bank = default_bank();

    for (int s : {1, -7, 100}) {
        auto shifted_in = encode(shift_columns(tex, s), shift_columns(mask, s), bank, meta_of("s"));
        auto shifted_out = encode(tex, mask, bank, meta_of("s"));
        for (std::size_t f = 0; f < shifted_in.planes.size(); ++f)
            REQUIRE(shifted_in.planes[f] == shifted_out.planes[f].shifted_columns(s));
        REQUIRE(shifted_in.mask == shifted_out.mask.shifted_columns(s));
    }
}

TEST_CASE("codes ignore texture under masked positions", "[encoding]") {
    Rng rng(55);
    RealGrid tex(128, 64);
    for (auto& v : tex.data()) v = rng.uniform();
    MaskGrid mask(128, 64, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = rng.below(4) != 0;

    auto bank = default_bank();
    auto base = encode(tex, mask, bank, meta_of("fuzz"));

    for (int trial = 0; trial < 5; ++trial) {
        RealGrid fuzzed = tex;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 128; ++x)
                if (!mask.at(x, y)) fuzzed.at(x, y) = rng.uniform(-10.0, 10.0);
        auto code = encode(fuzzed, mask, bank, meta_of("fuzz"));
        REQUIRE(code.mask == base.mask);
        for (std::size_t f = 0; f < code.planes.size(); ++f) REQUIRE(code.planes[f] == base.planes[f]);
    }
}

TEST_CASE("mean_code_value averages plane density over unmasked bits", "[encoding]") {
    Kernel2D probe(1, 1, {1.0}, Provenance::gabor, "probe");
    auto bank = one_kernel_bank(probe);

    RealGrid all_on(16, 4, 1.0), half(16, 4, 1.0);
    for (int x = 0; x < 16; ++x)
        for (int y = 0; y < 2; ++y) half.at(x, y) = -1.0;
    MaskGrid mask(16, 4, 1);

    std::vector<IrisCode> codes{encode(all_on, mask, bank, meta_of("a")),
                                encode(half, mask, bank, meta_of("b"))};
    REQUIRE(mean_code_value(codes, 0) == Catch::Approx(0.75));

    // fully masked code contributes 0
    MaskGrid none(16, 4, 0);
    codes.push_back(encode(all_on, none, bank, meta_of("c")));
    REQUIRE(mean_code_value(codes, 0) == Catch::Approx(0.5));

    REQUIRE_THROWS_AS(mean_code_value(codes, 1), IndexOutOfRange);
    REQUIRE_THROWS_AS(mean_code_value({}, 0), EmptyInput);
}

TEST_CASE("pmic round trip and error cases", "[encoding]") {
    auto dir = std::filesystem::temp_directory_path() / "pmiris_enc_test";
    std::filesystem::create_directories(dir);
    Rng rng(66);
    RealGrid tex(polar_width, polar_height);
    for (auto& v : tex.data()) v = rng.uniform();
    MaskGrid mask(polar_width, polar_height, 1);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = rng.below(8) != 0;
    auto code = encode(tex, mask, default_bank(), meta_of("rt"));

    auto path = (dir / "code.pmic").string();
    save_code(path, code);
    auto back = load_code(path);
    REQUIRE(back.plane_count() == code.plane_count());
    REQUIRE(back.mask == code.mask);
    for (int f = 0; f < code.plane_count(); ++f)
        REQUIRE(back.planes[std::size_t(f)] == code.planes[std::size_t(f)]);

    // serialization is stable byte for byte
    auto bytes = code_to_bytes(code);
    REQUIRE(bytes == code_to_bytes(load_code(path)));

    bytes[0] = 'X';
    REQUIRE_THROWS_AS(code_from_bytes(bytes, "mem"), UnsupportedFormat);
    bytes = code_to_bytes(code);
    bytes[4] = 9;  // version
    REQUIRE_THROWS_AS(code_from_bytes(bytes, "mem"), UnsupportedFormat);
    bytes = code_to_bytes(code);
    bytes.pop_back();
    REQUIRE_THROWS_AS(code_from_bytes(bytes, "mem"), ParseError);
}

TEST_CASE("pmic bit stream layout is pinned", "[encoding]") {
    // 3x2 single plane: bit index y*W+x, LSB first. Plane bit at (1,0) ->
    // stream bit 1; mask all ones -> first 6 stream bits set.
    Kernel2D probe(1, 1, {1.0}, Provenance::gabor, "probe");
    RealGrid tex(3, 2, -1.0);
    tex.at(1, 0) = 1.0;
    MaskGrid mask(3, 2, 1);
    auto code = encode(tex, mask, one_kernel_bank(probe), meta_of("pin"));
    auto bytes = code_to_bytes(code);
    // header: magic "PMIC", version 1, plane count 1, width 3 LE, height 2 LE
    REQUIRE(bytes[0] == 'P');
    REQUIRE(bytes[1] == 'M');
    REQUIRE(bytes[2] == 'I');
    REQUIRE(bytes[3] == 'C');
    REQUIRE(bytes[4] == 1);
    REQUIRE(bytes[5] == 1);
    REQUIRE(bytes[6] == 3);
    REQUIRE(bytes[7] == 0);
    REQUIRE(bytes[8] == 2);
    REQUIRE(bytes[9] == 0);
    REQUIRE(bytes[10] == 0b00111111);  // mask plane: 6 valid bits
    REQUIRE(bytes[11] == 0b00000010);  // data plane: only bit (1,0)
    REQUIRE(bytes.size() == 12);
}
