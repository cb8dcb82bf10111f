#include <pmiris/evaluation.hpp>
#include <pmiris/rng.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace pmiris;

namespace {

double direct_fmr(const std::vector<double>& impostor, double t) {
    long n = 0;
    for (double v : impostor) n += v < t;
    return double(n) / double(impostor.size());
}

double direct_fnmr(const std::vector<double>& genuine, double t) {
    long n = 0;
    for (double v : genuine) n += v >= t;
    return double(n) / double(genuine.size());
}

// Dense threshold sweep: localize the FMR-FNMR sign flip on a 1e5 grid and
// interpolate the crossing of the two flanking operating points.
double grid_eer(const ScoreSet& s) {
    const int grid = 100000;
    double top = 0.0;
    for (double v : s.genuine) top = std::max(top, v);
    for (double v : s.impostor) top = std::max(top, v);
    const double step = (top + 2e-5) / grid;
    double prev_e = -1.0, prev_f = 0.0;
    for (int i = 0; i <= grid; ++i) {
        const double t = i * step;
        const double f = direct_fmr(s.impostor, t);
        const double e = f - direct_fnmr(s.genuine, t);
        if (e >= 0.0) {
            if (e == 0.0) return f;
            const double u = -prev_e / (e - prev_e);
            return prev_f + u * (f - prev_f);
        }
        prev_e = e;
        prev_f = f;
    }
    return 1.0;
}

// Largest grid threshold keeping FMR within the cap; FNMR evaluated there.
double grid_fnmr_at(const ScoreSet& s, double cap) {
    const int grid = 100000;
    double top = 0.0;
    for (double v : s.genuine) top = std::max(top, v);
    for (double v : s.impostor) top = std::max(top, v);
    const double step = (top + 2e-5) / grid;
    for (int i = grid; i >= 0; --i) {
        const double t = i * step;
        if (direct_fmr(s.impostor, t) <= cap) return direct_fnmr(s.genuine, t);
    }
    return 1.0;
}

ScoreSet random_set(Rng& rng, int n_genuine, int n_impostor) {
    ScoreSet s;
    for (int i = 0; i < n_genuine; ++i) s.genuine.push_back(rng.uniform(0.05, 0.55));
    for (int i = 0; i < n_impostor; ++i) s.impostor.push_back(rng.uniform(0.25, 0.75));
    return s;
}

// 1x1 identity-kernel codes whose single plane is constant `bits`; distance
// between two such codes is 0 or 1, which is enough to drive pair labeling.
IrisCode tiny_code(const std::string& subject, Eye eye, double pmi, const std::string& id,
                   bool bits = false) {
    FilterBank bank;
    bank.kernels.push_back(Kernel2D(1, 1, {1.0}, Provenance::gabor, "probe"));
    RealGrid tex(32, 16, bits ? 1.0 : -1.0);
    MaskGrid mask(32, 16, 1);
    CaptureMeta meta;
    meta.subject_id = subject;
    meta.eye = eye;
    meta.pmi_hours = pmi;
    meta.capture_id = id;
    return encode(tex, mask, bank, meta);
}

}  // namespace

TEST_CASE("pair enumeration matches the combinatorial oracle", "[evaluation]") {
    std::vector<IrisCode> codes;
    codes.push_back(tiny_code("s1", Eye::L, 0, "a0"));
    codes.push_back(tiny_code("s1", Eye::L, 10, "a1"));
    codes.push_back(tiny_code("s1", Eye::L, 20, "a2"));
    codes.push_back(tiny_code("s2", Eye::R, 5, "b0"));
    codes.push_back(tiny_code("s2", Eye::R, 15, "b1"));

    auto s = build_scores(codes, 1e9, MatchConfig{0, 1, 16});
    REQUIRE(s.genuine.size() == 4);   // C(3,2) + C(2,2)
    REQUIRE(s.impostor.size() == 6);  // 3 * 2 cross pairs
    REQUIRE(s.failures_to_compare == 0);

    // same subject, opposite eyes -> impostor
    std::vector<IrisCode> eyes;
    eyes.push_back(tiny_code("s1", Eye::L, 0, "l"));
    eyes.push_back(tiny_code("s1", Eye::R, 0, "r"));
    auto cross = build_scores(eyes, 1e9, MatchConfig{0, 1, 16});
    REQUIRE(cross.genuine.empty());
    REQUIRE(cross.impostor.size() == 1);
}

TEST_CASE("horizon filters pairs and errors when empty", "[evaluation]") {
    std::vector<IrisCode> codes;
    codes.push_back(tiny_code("s1", Eye::L, 0, "a0"));
    codes.push_back(tiny_code("s1", Eye::L, 50, "a1"));
    codes.push_back(tiny_code("s1", Eye::L, 200, "a2"));

    auto near = build_scores(codes, 60, MatchConfig{0, 1, 16});
    REQUIRE(near.genuine.size() == 1);
    auto all = build_scores(codes, 369, MatchConfig{0, 1, 16});
    REQUIRE(all.genuine.size() == 3);
    REQUIRE_THROWS_AS(build_scores(codes, 10, MatchConfig{0, 1, 16}), InsufficientData);

    // raising the horizon never removes pairs
    REQUIRE(all.genuine.size() + all.impostor.size() >= near.genuine.size() + near.impostor.size());
}

TEST_CASE("uncomparable pairs are counted not scored", "[evaluation]") {
    auto a = tiny_code("s1", Eye::L, 0, "a");
    auto b = tiny_code("s1", Eye::L, 0, "b");
    // disjoint masks
    MaskGrid ma(32, 16, 0), mb(32, 16, 0);
    for (int x = 0; x < 32; ++x) {
        ma.at(x, 0) = 1;
        mb.at(x, 15) = 1;
    }
    a.mask = mask_to_plane(ma);
    b.mask = mask_to_plane(mb);
    auto s = build_scores({a, b}, 1e9, MatchConfig{0, 1, 16});
    REQUIRE(s.failures_to_compare == 1);
    REQUIRE(s.genuine.empty());
    REQUIRE(s.impostor.empty());
}

TEST_CASE("score sets are independent of input order", "[evaluation]") {
    std::vector<IrisCode> codes;
    codes.push_back(tiny_code("s1", Eye::L, 0, "a0", false));
    codes.push_back(tiny_code("s1", Eye::L, 10, "a1", true));
    codes.push_back(tiny_code("s2", Eye::L, 5, "b0", false));
    codes.push_back(tiny_code("s3", Eye::R, 8, "c0", true));

    auto fwd = build_scores(codes, 1e9, MatchConfig{0, 1, 16});
    std::reverse(codes.begin(), codes.end());
    auto rev = build_scores(codes, 1e9, MatchConfig{0, 1, 16});
    auto sorted = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    REQUIRE(sorted(fwd.genuine) == sorted(rev.genuine));
    REQUIRE(sorted(fwd.impostor) == sorted(rev.impostor));
}

TEST_CASE("eer on pinned hand cases", "[evaluation]") {
    ScoreSet separable;
    separable.genuine = {0.1, 0.2};
    separable.impostor = {0.3, 0.4};
    REQUIRE(eer(separable).rate == 0.0);

    ScoreSet chance;
    chance.genuine = {0.3};
    chance.impostor = {0.3};
    REQUIRE(eer(chance).rate == Catch::Approx(0.5));

    ScoreSet overlapping;
    overlapping.genuine = {0.1, 0.3};
    overlapping.impostor = {0.2, 0.4};
    // at t=0.3: FMR 0.5, FNMR 0.5 -> exact crossing
    REQUIRE(eer(overlapping).rate == Catch::Approx(0.5));

    ScoreSet empty;
    empty.genuine = {0.1};
    REQUIRE_THROWS_AS(eer(empty), EmptyScores);
}

TEST_CASE("eer equals the dense grid oracle", "[evaluation]") {
    Rng rng(101);
    for (int t = 0; t < 50; ++t) {
        const int ng = 5 + int(rng.below(120));
        const int ni = 5 + int(rng.below(120));
        auto s = random_set(rng, ng, ni);
        REQUIRE(eer(s).rate == Catch::Approx(grid_eer(s)).margin(1e-3));
    }
}

TEST_CASE("eer is invariant under monotone score transforms", "[evaluation]") {
    Rng rng(103);
    auto s = random_set(rng, 60, 80);
    auto squared = s;
    for (auto& v : squared.genuine) v = v * v;
    for (auto& v : squared.impostor) v = v * v;
    REQUIRE(eer(squared).rate == Catch::Approx(eer(s).rate).margin(1e-12));
}

TEST_CASE("fnmr_at_fmr separable and validation cases", "[evaluation]") {
    ScoreSet separable;
    separable.genuine = {0.05, 0.1, 0.15, 0.2};
    separable.impostor = {0.4, 0.45, 0.5, 0.55};
    for (double cap : default_fmr_caps) {
        auto p = fnmr_at_fmr(separable, cap);
        REQUIRE(p.rate == 0.0);
        REQUIRE(p.threshold > 0.2);
        REQUIRE(p.threshold <= 0.4);
    }
    REQUIRE_THROWS_AS(fnmr_at_fmr(separable, 0.0), InvalidParam);
    REQUIRE_THROWS_AS(fnmr_at_fmr(separable, 1.0), InvalidParam);
    ScoreSet empty;
    empty.impostor = {0.1};
    REQUIRE_THROWS_AS(fnmr_at_fmr(empty, 0.01), EmptyScores);
}

TEST_CASE("fnmr_at_fmr tracks the grid oracle within one quantile", "[evaluation]") {
    Rng rng(107);
    for (int t = 0; t < 50; ++t) {
        const int ng = 10 + int(rng.below(90));
        const int ni = 10 + int(rng.below(90));
        auto s = random_set(rng, ng, ni);
        for (double cap : default_fmr_caps) {
            const double got = fnmr_at_fmr(s, cap).rate;
            const double ref = grid_fnmr_at(s, cap);
            REQUIRE(std::abs(got - ref) <= 1.0 / double(ng) + 1e-12);
        }
    }
}

TEST_CASE("fnmr caps are monotone", "[evaluation]") {
    Rng rng(109);
    for (int t = 0; t < 20; ++t) {
        auto s = random_set(rng, 40, 120);
        const double f1 = fnmr_at_fmr(s, 0.001).rate;
        const double f2 = fnmr_at_fmr(s, 0.01).rate;
        const double f3 = fnmr_at_fmr(s, 0.05).rate;
        REQUIRE(f1 >= f2);
        REQUIRE(f2 >= f3);
    }
}

TEST_CASE("roc points match brute force and are monotone", "[evaluation]") {
    Rng rng(113);
    auto s = random_set(rng, 30, 40);
    auto pts = roc_points(s);

    // brute force over the union of scores
    std::vector<double> u;
    u.insert(u.end(), s.genuine.begin(), s.genuine.end());
    u.insert(u.end(), s.impostor.begin(), s.impostor.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    REQUIRE(pts.size() == u.size() + 1);
    for (std::size_t i = 0; i < u.size(); ++i) {
        REQUIRE(pts[i].fmr == Catch::Approx(direct_fmr(s.impostor, u[i])).margin(1e-12));
        REQUIRE(pts[i].tpr == Catch::Approx(1.0 - direct_fnmr(s.genuine, u[i])).margin(1e-12));
    }
    REQUIRE(pts.back().fmr == 1.0);
    REQUIRE(pts.back().tpr == 1.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        REQUIRE(pts[i].fmr >= pts[i - 1].fmr);
        REQUIRE(pts[i].tpr >= pts[i - 1].tpr);
    }

    ScoreSet separable;
    separable.genuine = {0.1};
    separable.impostor = {0.9};
    auto sep = roc_points(separable);
    bool perfect = false;
    for (const auto& p : sep) perfect = perfect || (p.fmr == 0.0 && p.tpr == 1.0);
    REQUIRE(perfect);
}

TEST_CASE("csv and report formats", "[evaluation]") {
    std::vector<IrisCode> codes;
    codes.push_back(tiny_code("s1", Eye::L, 0, "a0", false));
    codes.push_back(tiny_code("s1", Eye::L, 12.5, "a1", true));
    codes.push_back(tiny_code("s2", Eye::R, 3, "b0", false));

    auto rows = score_all_pairs(codes, 1e9, MatchConfig{0, 1, 16});
    auto csv = scores_csv(rows, codes);
    REQUIRE(csv.rfind("capture_id_a,capture_id_b,subject_a,subject_b,pmi_a,pmi_b,distance,"
                      "best_shift,effective_bits,label\n", 0) == 0);
    REQUIRE(csv.find("a0,a1,s1,s1,0,12.5,1,0,512,genuine") != std::string::npos);
    REQUIRE(csv.find("a0,b0,s1,s2,0,3,0,0,512,impostor") != std::string::npos);

    auto s = scores_from_rows(rows, 369.0);
    auto report = horizon_report(s);
    REQUIRE(report["horizon"] == 369.0);
    REQUIRE(report["n_genuine"] == 1);
    REQUIRE(report["n_impostor"] == 2);
    REQUIRE(report.contains("eer"));
    REQUIRE(report["fnmr_at"].contains("0.001"));
    REQUIRE(report["fnmr_at"].contains("0.01"));
    REQUIRE(report["fnmr_at"].contains("0.05"));
    REQUIRE(report["failures_to_compare"] == 0);

    auto roc = roc_csv(roc_points(s));
    REQUIRE(roc.rfind("fmr,tpr\n", 0) == 0);
}

TEST_CASE("scores csv round trips through the pair reader", "[evaluation]") {
    std::vector<IrisCode> codes;
    codes.push_back(tiny_code("s1", Eye::L, 0, "a0"));
    codes.push_back(tiny_code("s1", Eye::L, 12.5, "a1"));
    codes.push_back(tiny_code("s2", Eye::R, 5, "b0", true));
    // Disjoint masks force one incomparable pair.
    MaskGrid ma(32, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x) ma.at(x, y) = y < 8;
    MaskGrid mb(32, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x) mb.at(x, y) = y >= 8;
    codes.push_back(tiny_code("s3", Eye::L, 3, "c0"));
    codes.push_back(tiny_code("s3", Eye::L, 4, "c1"));
    codes[3].mask = mask_to_plane(ma);
    codes[4].mask = mask_to_plane(mb);

    const auto rows = score_all_pairs(codes, 100.0);
    const std::string csv = scores_csv(rows, codes);
    const auto pairs = pairs_from_csv(csv);

    REQUIRE(pairs.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& p = pairs[i];
        CHECK(p.capture_id_a == codes[std::size_t(r.a)].meta.capture_id);
        CHECK(p.capture_id_b == codes[std::size_t(r.b)].meta.capture_id);
        CHECK(p.subject_a == codes[std::size_t(r.a)].meta.subject_id);
        CHECK(p.pmi_a == codes[std::size_t(r.a)].meta.pmi_hours);
        CHECK(p.genuine == r.genuine);
        CHECK(p.comparable == r.comparable);
        if (r.comparable) {
            CHECK(p.distance == r.distance);
            CHECK(p.best_shift == r.best_shift);
            CHECK(p.effective_bits == r.effective_bits);
        }
    }

    for (double h : {100.0, 6.0, 3.5}) {
        const ScoreSet direct = scores_from_rows(score_all_pairs(codes, h), h);
        const ScoreSet parsed = scores_from_pairs(pairs, h);
        CHECK(parsed.genuine == direct.genuine);
        CHECK(parsed.impostor == direct.impostor);
        CHECK(parsed.failures_to_compare == direct.failures_to_compare);
        CHECK(parsed.horizon_hours == h);
    }

    CHECK_THROWS_AS(pairs_from_csv(""), ParseError);
    CHECK_THROWS_AS(pairs_from_csv("wrong,header\n"), ParseError);
    const std::string header = csv.substr(0, csv.find('\n') + 1);
    CHECK_THROWS_AS(pairs_from_csv(header + "a,b,s,s,0,0,0.1,0\n"), ParseError);
    CHECK_THROWS_AS(pairs_from_csv(header + "a,b,s,s,0,zero,0.1,0,64,genuine\n"), ParseError);
    CHECK_THROWS_AS(pairs_from_csv(header + "a,b,s,s,0,0,0.1,0,64,real\n"), ParseError);
    CHECK(pairs_from_csv(header).empty());
}
