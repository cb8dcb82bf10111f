#include <pmiris/image_io.hpp>
#include <pmiris/rng.hpp>
#include <pmiris/segmentation.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>

using namespace pmiris;

namespace {

// Two nested discs with independent centers and 1 px edge blending. Values
// in [0,1]; vp pupil, vi iris, vb background.
GrayImage draw_eye(int w, int h, const Circle& pupil, const Circle& iris, double vp, double vi,
                   double vb) {
    GrayImage img(w, h);
    auto blend = [](double r, double edge, double inner, double outer) {
        if (r <= edge - 0.5) return inner;
        if (r >= edge + 0.5) return outer;
        const double f = r - (edge - 0.5);
        return (1.0 - f) * inner + f * outer;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double ri = std::hypot(x - iris.cx, y - iris.cy);
            double v = blend(ri, iris.r, vi, vb);
            const double rp = std::hypot(x - pupil.cx, y - pupil.cy);
            if (rp < pupil.r + 0.5) v = blend(rp, pupil.r, vp, v);
            img.at(x, y) = std::uint8_t(std::lround(v * 255.0));
        }
    return img;
}

bool close_circle(const Circle& got, double cx, double cy, double r) {
    return std::abs(got.cx - cx) <= 1.0 && std::abs(got.cy - cy) <= 1.0 && std::abs(got.r - r) <= 1.0;
}

}  // namespace

TEST_CASE("hough config validation", "[segmentation]") {
    HoughConfig cfg;
    cfg.r_min = 30;
    cfg.r_max = 20;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = {};
    cfg.r_min = 0;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = {};
    cfg.edge_threshold = -1.0;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = {};
    cfg.accumulator_step = 0;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidConfig);
}

TEST_CASE("segmentation result invariants", "[segmentation]") {
    REQUIRE_THROWS_AS(SegmentationResult({10, 10, 20}, {10, 10, 15}), InvalidParam);
    REQUIRE_THROWS_AS(SegmentationResult({10, 10, 0}, {10, 10, 15}), InvalidParam);
    REQUIRE_THROWS_AS(SegmentationResult({100, 10, 5}, {10, 10, 15}), InvalidParam);
    SegmentationResult ok({12, 11, 5}, {10, 10, 15});
    REQUIRE(ok.pupil.r == 5.0);
}

TEST_CASE("bright pupil inside darker iris is recovered", "[segmentation]") {
    // flash-lit pupil: bright disk inside darker disk on a light background
    auto img = draw_eye(128, 128, {64, 64, 20}, {64, 64, 50}, 0.95, 0.35, 0.85);
    auto seg = find_boundaries(img);
    REQUIRE(close_circle(seg.pupil, 64, 64, 20));
    REQUIRE(close_circle(seg.iris, 64, 64, 50));
}

TEST_CASE("dark pupil with offset center is recovered", "[segmentation]") {
    auto img = draw_eye(160, 120, {85, 57, 18}, {80, 60, 45}, 0.08, 0.45, 0.92);
    auto seg = find_boundaries(img);
    REQUIRE(close_circle(seg.pupil, 85, 57, 18));
    REQUIRE(close_circle(seg.iris, 80, 60, 45));
}

TEST_CASE("blank image raises NoCircleFound", "[segmentation]") {
    GrayImage flat(96, 96, 120);
    REQUIRE_THROWS_AS(find_boundaries(flat), NoCircleFound);
}

TEST_CASE("recovery is invariant under brightness offset", "[segmentation]") {
    auto img = draw_eye(128, 128, {60, 66, 15}, {62, 64, 42}, 0.10, 0.40, 0.88);
    auto bright = img;
    for (auto& v : bright.data()) v = std::uint8_t(std::min(255, v + 40));
    auto a = find_boundaries(img);
    auto b = find_boundaries(bright);
    REQUIRE(std::abs(a.pupil.cx - b.pupil.cx) <= 1.0);
    REQUIRE(std::abs(a.pupil.r - b.pupil.r) <= 1.0);
    REQUIRE(std::abs(a.iris.r - b.iris.r) <= 1.0);
}

TEST_CASE("random eyes across the frame are recovered", "[segmentation]") {
    Rng rng(31);
    int hits = 0;
    const int trials = 12;
    for (int t = 0; t < trials; ++t) {
        const double icx = rng.uniform(55.0, 105.0);
        const double icy = rng.uniform(50.0, 78.0);
        const double ir = rng.uniform(34.0, 48.0);
        const double pr = rng.uniform(10.0, 0.45 * ir);
        const double off = rng.uniform(0.0, 0.2 * ir);
        const double ang = rng.uniform(0.0, 6.28);
        const Circle pupil{icx + off * std::cos(ang), icy + off * std::sin(ang), pr};
        const Circle iris{icx, icy, ir};
        auto img = draw_eye(160, 128, pupil, iris, 0.08, 0.45, 0.92);
        auto seg = find_boundaries(img);
        hits += close_circle(seg.pupil, pupil.cx, pupil.cy, pupil.r) &&
                close_circle(seg.iris, iris.cx, iris.cy, iris.r);
    }
    REQUIRE(hits == trials);
}

TEST_CASE("default mask follows the strict pupil / inclusive iris rule", "[segmentation]") {
    SegmentationResult seg({40, 40, 10}, {40, 40, 30});
    auto m = default_mask(80, 80, seg);

    // compare against the per-pixel predicate
    std::size_t predicted = 0;
    for (int y = 0; y < 80; ++y)
        for (int x = 0; x < 80; ++x) {
            const double d2 = (x - 40.0) * (x - 40.0) + (y - 40.0) * (y - 40.0);
            const bool valid = d2 <= 30.0 * 30.0 && d2 > 10.0 * 10.0;
            predicted += valid;
            REQUIRE(int(m.at(x, y)) == int(valid));
        }
    REQUIRE(count_ones(m) == predicted);

    REQUIRE(m.at(50, 40) == 0);  // exactly on the pupil boundary
    REQUIRE(m.at(70, 40) == 1);  // exactly on the iris boundary
}

TEST_CASE("load_mask thresholds at 127 and checks dims", "[segmentation]") {
    auto dir = std::filesystem::temp_directory_path() / "pmiris_seg_test";
    std::filesystem::create_directories(dir);
    GrayImage img(4, 2);
    img.at(0, 0) = 127;
    img.at(1, 0) = 128;
    img.at(2, 0) = 255;
    auto path = (dir / "mask.png").string();
    save_gray(path, img);
    auto m = load_mask(path, 4, 2);
    REQUIRE(m.at(0, 0) == 0);
    REQUIRE(m.at(1, 0) == 1);
    REQUIRE(m.at(2, 0) == 1);
    REQUIRE(m.at(3, 1) == 0);
    REQUIRE_THROWS_AS(load_mask(path, 5, 2), DimensionMismatch);
}

TEST_CASE("intersect_masks is an AND", "[segmentation]") {
    MaskGrid a(2, 1), b(2, 1);
    a.at(0, 0) = 1;
    a.at(1, 0) = 1;
    b.at(1, 0) = 1;
    auto m = intersect_masks(a, b);
    REQUIRE(m.at(0, 0) == 0);
    REQUIRE(m.at(1, 0) == 1);
    MaskGrid c(3, 1);
    REQUIRE_THROWS_AS(intersect_masks(a, c), DimensionMismatch);
}
