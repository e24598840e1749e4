#include "semikan/metrics.hpp"

#include "semikan/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semikan {

OverlapMetrics dice_jaccard(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                            int64_t height, int64_t width) {
    size_t n = size_t(height * width);
    if (pred.size() != n || gt.size() != n)
        throw DimensionError("dice_jaccard: mask sizes do not match " + std::to_string(height) +
                             "x" + std::to_string(width));
    int64_t inter = 0, np = 0, ng = 0;
    for (size_t i = 0; i < n; ++i) {
        bool p = pred[i] != 0, g = gt[i] != 0;
        inter += (p && g) ? 1 : 0;
        np += p ? 1 : 0;
        ng += g ? 1 : 0;
    }
    if (np == 0 && ng == 0) return {100.0, 100.0};
    int64_t uni = np + ng - inter;
    OverlapMetrics m;
    m.dice = 200.0 * double(inter) / double(np + ng);
    m.jaccard = uni > 0 ? 100.0 * double(inter) / double(uni) : 100.0;
    return m;
}

namespace {

std::vector<std::pair<int64_t, int64_t>> boundary_pixels(const std::vector<uint8_t>& mask,
                                                         int64_t H, int64_t W) {
    std::vector<std::pair<int64_t, int64_t>> out;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            if (!mask[size_t(y * W + x)]) continue;
            bool edge = y == 0 || y == H - 1 || x == 0 || x == W - 1 ||
                        !mask[size_t((y - 1) * W + x)] || !mask[size_t((y + 1) * W + x)] ||
                        !mask[size_t(y * W + x - 1)] || !mask[size_t(y * W + x + 1)];
            if (edge) out.emplace_back(y, x);
        }
    return out;
}

// Large-but-finite stand-in for infinity. Real squared distances on our
// grids stay far below it, so capped cells never win against a real site.
constexpr double kFar = 1e12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher 1-D squared distance transform.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int64_t n) {
    std::vector<int64_t> v(static_cast<size_t>(n), 0);
    std::vector<double> z(static_cast<size_t>(n) + 1, 0.0);
    int64_t k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int64_t q = 1; q < n; ++q) {
        double s = ((f[size_t(q)] + double(q * q)) -
                    (f[size_t(v[size_t(k)])] + double(v[size_t(k)] * v[size_t(k)]))) /
                   (2.0 * double(q - v[size_t(k)]));
        while (s <= z[size_t(k)]) {
            --k;
            s = ((f[size_t(q)] + double(q * q)) -
                 (f[size_t(v[size_t(k)])] + double(v[size_t(k)] * v[size_t(k)]))) /
                (2.0 * double(q - v[size_t(k)]));
        }
        ++k;
        v[size_t(k)] = q;
        z[size_t(k)] = s;
        z[size_t(k) + 1] = kInf;
    }
    k = 0;
    for (int64_t q = 0; q < n; ++q) {
        while (z[size_t(k) + 1] < double(q)) ++k;
        int64_t p = v[size_t(k)];
        d[size_t(q)] = double((q - p) * (q - p)) + f[size_t(p)];
    }
}

// Squared EDT of the point set `sites` over an H x W grid.
std::vector<double> edt_2d(const std::vector<std::pair<int64_t, int64_t>>& sites, int64_t H,
                           int64_t W) {
    std::vector<double> dist(size_t(H * W), kFar);
    for (auto [y, x] : sites) dist[size_t(y * W + x)] = 0.0;
    std::vector<double> col(static_cast<size_t>(H), 0.0), out_col(static_cast<size_t>(H), 0.0);
    for (int64_t x = 0; x < W; ++x) {
        for (int64_t y = 0; y < H; ++y) col[size_t(y)] = dist[size_t(y * W + x)];
        edt_1d(col, out_col, H);
        for (int64_t y = 0; y < H; ++y) dist[size_t(y * W + x)] = out_col[size_t(y)];
    }
    std::vector<double> row(static_cast<size_t>(W), 0.0), out_row(static_cast<size_t>(W), 0.0);
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) row[size_t(x)] = dist[size_t(y * W + x)];
        edt_1d(row, out_row, W);
        for (int64_t x = 0; x < W; ++x) dist[size_t(y * W + x)] = out_row[size_t(x)];
    }
    return dist;
}

} // namespace

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("percentile: empty sample");
    std::sort(values.begin(), values.end());
    double h = q / 100.0 * double(values.size() - 1);
    size_t lo = size_t(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    double frac = h - double(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

SurfaceMetrics surface_distances(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                                 int64_t height, int64_t width) {
    size_t n = size_t(height * width);
    if (pred.size() != n || gt.size() != n)
        throw DimensionError("surface_distances: mask sizes do not match");
    auto bp = boundary_pixels(pred, height, width);
    auto bg = boundary_pixels(gt, height, width);
    if (bp.empty() || bg.empty())
        throw UndefinedMetricError("surface_distances: empty mask has no boundary");

    std::vector<double> dist_to_g = edt_2d(bg, height, width);
    std::vector<double> dist_to_p = edt_2d(bp, height, width);

    std::vector<double> samples;
    samples.reserve(bp.size() + bg.size());
    for (auto [y, x] : bp) samples.push_back(std::sqrt(dist_to_g[size_t(y * width + x)]));
    for (auto [y, x] : bg) samples.push_back(std::sqrt(dist_to_p[size_t(y * width + x)]));

    // Sorting first makes both metrics bit-symmetric in (pred, gt): the
    // sorted union is identical either way.
    std::sort(samples.begin(), samples.end());
    SurfaceMetrics m;
    m.hd95 = percentile(samples, 95.0);
    double acc = 0.0;
    for (double v : samples) acc += v;
    m.asd = acc / double(samples.size());
    return m;
}

MetricReport evaluate_masks(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                            int64_t height, int64_t width, int64_t num_classes) {
    MetricReport report;
    double dice_sum = 0.0, jac_sum = 0.0, hd_sum = 0.0, asd_sum = 0.0;
    int64_t hd_count = 0;
    for (int64_t cls = 1; cls < num_classes; ++cls) {
        std::vector<uint8_t> p(pred.size()), g(gt.size());
        for (size_t i = 0; i < pred.size(); ++i) {
            p[i] = pred[i] == cls ? 1 : 0;
            g[i] = gt[i] == cls ? 1 : 0;
        }
        ClassMetrics cm;
        cm.cls = cls;
        OverlapMetrics om = dice_jaccard(p, g, height, width);
        cm.dice = om.dice;
        cm.jaccard = om.jaccard;
        try {
            SurfaceMetrics sm = surface_distances(p, g, height, width);
            cm.hd95 = sm.hd95;
            cm.asd = sm.asd;
            hd_sum += sm.hd95;
            asd_sum += sm.asd;
            ++hd_count;
        } catch (const UndefinedMetricError&) {
            // reported as missing
        }
        dice_sum += cm.dice;
        jac_sum += cm.jaccard;
        report.per_class.push_back(cm);
    }
    int64_t fg = num_classes - 1;
    if (fg > 0) {
        report.mean_dice = dice_sum / double(fg);
        report.mean_jaccard = jac_sum / double(fg);
    }
    if (hd_count > 0) {
        report.mean_hd95 = hd_sum / double(hd_count);
        report.mean_asd = asd_sum / double(hd_count);
    }
    return report;
}

} // namespace semikan
