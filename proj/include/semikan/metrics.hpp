#pragma once

#include "semikan/common.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace semikan {

// Binary mask utilities operate on row-major H x W uint8 buffers where any
// non-zero value is foreground.

struct OverlapMetrics {
    double dice = 0.0;    // percent
    double jaccard = 0.0; // percent
};

// 2|P∩G| / (|P|+|G|) and |P∩G| / |P∪G| in percent. Two empty masks score
// 100/100 by convention.
OverlapMetrics dice_jaccard(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                            int64_t height, int64_t width);

struct SurfaceMetrics {
    double hd95 = 0.0; // voxel units
    double asd = 0.0;
};

// Boundary pixels are mask pixels 4-adjacent to background (the outside of
// the image counts as background). Distances are Euclidean between pixel
// centers; hd95 is the 95th percentile (linear interpolation) and asd the
// mean of the union of both directed boundary-distance samples.
// Throws UndefinedMetricError when either mask is empty.
SurfaceMetrics surface_distances(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                                 int64_t height, int64_t width);

struct ClassMetrics {
    int64_t cls = 0;
    double dice = 0.0;
    double jaccard = 0.0;
    std::optional<double> hd95; // missing when undefined (empty boundary)
    std::optional<double> asd;
};

struct MetricReport {
    std::vector<ClassMetrics> per_class; // foreground classes only
    double mean_dice = 0.0;
    double mean_jaccard = 0.0;
    std::optional<double> mean_hd95; // over classes where defined
    std::optional<double> mean_asd;
};

// Per-foreground-class metrics for label maps with values < num_classes.
MetricReport evaluate_masks(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                            int64_t height, int64_t width, int64_t num_classes);

// q-th percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

} // namespace semikan
