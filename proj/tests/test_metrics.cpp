#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "semikan/metrics.hpp"
#include "semikan/rng.hpp"

#include <algorithm>
#include <cmath>

using namespace semikan;

namespace {

using Mask = std::vector<uint8_t>;

Mask make_mask(int64_t H, int64_t W, std::initializer_list<std::pair<int64_t, int64_t>> pixels) {
    Mask m(size_t(H * W), 0);
    for (auto [y, x] : pixels) m[size_t(y * W + x)] = 1;
    return m;
}

Mask block_mask(int64_t H, int64_t W, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    Mask m(size_t(H * W), 0);
    for (int64_t y = y0; y < y0 + h; ++y)
        for (int64_t x = x0; x < x0 + w; ++x) m[size_t(y * W + x)] = 1;
    return m;
}

// Brute-force oracle: 4-adjacency boundary extraction (image border counts
// as background), all-pairs directed distances, then the union percentile
// computed independently.
struct BruteForceSurface {
    double hd95, asd, hausdorff;
};

BruteForceSurface brute_force_surface(const Mask& a, const Mask& b, int64_t H, int64_t W) {
    auto boundary = [&](const Mask& m) {
        std::vector<std::pair<int64_t, int64_t>> out;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                if (!m[size_t(y * W + x)]) continue;
                bool bg = false;
                if (y == 0 || !m[size_t((y - 1) * W + x)]) bg = true;
                if (y == H - 1 || !m[size_t((y + 1) * W + x)]) bg = true;
                if (x == 0 || !m[size_t(y * W + x - 1)]) bg = true;
                if (x == W - 1 || !m[size_t(y * W + x + 1)]) bg = true;
                if (bg) out.emplace_back(y, x);
            }
        return out;
    };
    auto ba = boundary(a);
    auto bb = boundary(b);
    std::vector<double> samples;
    auto directed = [&](const auto& from, const auto& to) {
        for (auto [y, x] : from) {
            double best = 1e300;
            for (auto [y2, x2] : to)
                best = std::min(best, std::sqrt(double((y - y2) * (y - y2)) +
                                                double((x - x2) * (x - x2))));
            samples.push_back(best);
        }
    };
    directed(ba, bb);
    directed(bb, ba);
    std::sort(samples.begin(), samples.end());
    double h = 0.95 * double(samples.size() - 1);
    size_t lo = size_t(std::floor(h));
    double hd95 = lo + 1 >= samples.size()
                      ? samples.back()
                      : samples[lo] + (h - double(lo)) * (samples[lo + 1] - samples[lo]);
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= double(samples.size());
    return {hd95, mean, samples.back()};
}

Mask random_blob_mask(int64_t H, int64_t W, Rng& rng) {
    // random rectangle union keeps boundaries non-trivial
    Mask m(size_t(H * W), 0);
    int64_t n = 1 + int64_t(rng.uniform_int(3));
    for (int64_t i = 0; i < n; ++i) {
        int64_t h = 2 + int64_t(rng.uniform_int(6));
        int64_t w = 2 + int64_t(rng.uniform_int(6));
        int64_t y0 = int64_t(rng.uniform_int(uint64_t(H - h)));
        int64_t x0 = int64_t(rng.uniform_int(uint64_t(W - w)));
        for (int64_t y = y0; y < y0 + h; ++y)
            for (int64_t x = x0; x < x0 + w; ++x) m[size_t(y * W + x)] = 1;
    }
    return m;
}

} // namespace

TEST_CASE("dice and jaccard on identical non-empty masks") {
    Mask m = block_mask(8, 8, 2, 2, 3, 3);
    OverlapMetrics om = dice_jaccard(m, m, 8, 8);
    CHECK(om.dice == 100.0);
    CHECK(om.jaccard == 100.0);
}

TEST_CASE("dice and jaccard on disjoint masks") {
    Mask a = block_mask(8, 8, 0, 0, 2, 2);
    Mask b = block_mask(8, 8, 5, 5, 2, 2);
    OverlapMetrics om = dice_jaccard(a, b, 8, 8);
    CHECK(om.dice == 0.0);
    CHECK(om.jaccard == 0.0);
}

TEST_CASE("dice and jaccard pixel-count fixture") {
    // P: 2x2 block, G: 3x3 block sharing a 2x2 corner
    Mask p = block_mask(8, 8, 0, 0, 2, 2);
    Mask g = block_mask(8, 8, 0, 0, 3, 3);
    OverlapMetrics om = dice_jaccard(p, g, 8, 8);
    CHECK(om.dice == doctest::Approx(200.0 * 4 / 13).epsilon(1e-12));
    CHECK(om.jaccard == doctest::Approx(100.0 * 4 / 9).epsilon(1e-12));
}

TEST_CASE("both masks empty scores 100 by convention") {
    Mask e(64, 0);
    OverlapMetrics om = dice_jaccard(e, e, 8, 8);
    CHECK(om.dice == 100.0);
    CHECK(om.jaccard == 100.0);
}

TEST_CASE("dice_jaccard rejects mismatched shapes") {
    Mask a(64, 0), b(32, 0);
    CHECK_THROWS_AS(dice_jaccard(a, b, 8, 8), DimensionError);
}

TEST_CASE("jaccard follows the dice identity") {
    Rng rng(100);
    for (int trial = 0; trial < 30; ++trial) {
        Mask a = random_blob_mask(16, 16, rng);
        Mask b = random_blob_mask(16, 16, rng);
        OverlapMetrics om = dice_jaccard(a, b, 16, 16);
        if (om.dice == 0.0) continue;
        double expect = om.dice / (200.0 - om.dice) * 100.0;
        CHECK(om.jaccard == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("surface distances of identical masks are zero") {
    Mask m = block_mask(8, 8, 2, 3, 3, 2);
    SurfaceMetrics sm = surface_distances(m, m, 8, 8);
    CHECK(sm.hd95 == 0.0);
    CHECK(sm.asd == 0.0);
}

TEST_CASE("two single pixels at distance five") {
    Mask a = make_mask(8, 8, {{0, 0}});
    Mask b = make_mask(8, 8, {{3, 4}});
    SurfaceMetrics sm = surface_distances(a, b, 8, 8);
    CHECK(sm.hd95 == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(sm.asd == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("empty masks make surface distances undefined") {
    Mask e(64, 0);
    Mask m = block_mask(8, 8, 1, 1, 2, 2);
    CHECK_THROWS_AS(surface_distances(e, m, 8, 8), UndefinedMetricError);
    CHECK_THROWS_AS(surface_distances(m, e, 8, 8), UndefinedMetricError);
}

TEST_CASE("surface distances agree with the brute-force oracle on random masks") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        Mask a = random_blob_mask(16, 16, rng);
        Mask b = random_blob_mask(16, 16, rng);
        SurfaceMetrics sm = surface_distances(a, b, 16, 16);
        BruteForceSurface bf = brute_force_surface(a, b, 16, 16);
        CHECK(std::abs(sm.hd95 - bf.hd95) <= 1e-9);
        CHECK(std::abs(sm.asd - bf.asd) <= 1e-9);
        CHECK(sm.hd95 <= bf.hausdorff + 1e-12);
    }
}

TEST_CASE("surface distances are symmetric in their arguments") {
    Rng rng(102);
    for (int trial = 0; trial < 10; ++trial) {
        Mask a = random_blob_mask(16, 16, rng);
        Mask b = random_blob_mask(16, 16, rng);
        SurfaceMetrics ab = surface_distances(a, b, 16, 16);
        SurfaceMetrics ba = surface_distances(b, a, 16, 16);
        CHECK(ab.hd95 == ba.hd95);
        CHECK(ab.asd == ba.asd);
    }
}

TEST_CASE("percentile uses linear interpolation") {
    CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(percentile({5.0}, 95.0) == 5.0);
    CHECK(percentile({1.0, 2.0}, 95.0) == doctest::Approx(1.95).epsilon(1e-12));
    CHECK_THROWS_AS(percentile({}, 50.0), ContractError);
}

TEST_CASE("multi-class evaluation reports per foreground class") {
    int64_t H = 8, W = 8;
    Mask gt(size_t(H * W), 0), pred(size_t(H * W), 0);
    // class 1 block, class 2 block
    for (int64_t y = 0; y < 3; ++y)
        for (int64_t x = 0; x < 3; ++x) gt[size_t(y * W + x)] = 1;
    for (int64_t y = 5; y < 8; ++y)
        for (int64_t x = 5; x < 8; ++x) gt[size_t(y * W + x)] = 2;
    pred = gt;
    MetricReport rep = evaluate_masks(pred, gt, H, W, 3);
    REQUIRE(rep.per_class.size() == 2);
    CHECK(rep.per_class[0].dice == 100.0);
    CHECK(rep.per_class[1].dice == 100.0);
    CHECK(rep.mean_dice == 100.0);
    REQUIRE(rep.per_class[0].hd95.has_value());
    CHECK(*rep.per_class[0].hd95 == 0.0);

    // class 2 absent in prediction: overlap 0, surface metrics missing
    for (auto& v : pred)
        if (v == 2) v = 0;
    MetricReport rep2 = evaluate_masks(pred, gt, H, W, 3);
    CHECK(rep2.per_class[1].dice == 0.0);
    CHECK_FALSE(rep2.per_class[1].hd95.has_value());
    REQUIRE(rep2.mean_hd95.has_value()); // class 1 still defined
}
