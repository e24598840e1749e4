#pragma once

#include "semikan/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace semikan {

// One segmentation sample. The mask is present iff the sample is labeled;
// unlabeled samples never expose their generator mask to the trainer (the
// evaluator loads masks separately from disk).
struct SegSample {
    std::string id;
    Tensor image; // [1,H,W], values in [0,1]
    std::vector<uint8_t> mask; // H*W class indices; empty when unlabeled
    bool labeled = true;
    int64_t height = 0;
    int64_t width = 0;
};

enum class Difficulty { Easy, Hard };

Difficulty difficulty_from_name(const std::string& name);
std::string difficulty_name(Difficulty d);

// Textured blobs over a structured background. Easy mode keeps a strong
// uniform contrast (threshold-separable); hard mode varies contrast per
// blob, blurs boundaries and adds bright distractor smudges that carry no
// mask. Masks are exact by construction; every sample's foreground fraction
// lands in [0.05, 0.45]. Deterministic for a given seed.
std::vector<SegSample> generate_dataset(int64_t count, int64_t height, int64_t width,
                                        Difficulty difficulty, uint64_t seed);

struct DatasetSplit {
    std::vector<std::string> train_labeled;
    std::vector<std::string> train_unlabeled;
    std::vector<std::string> test;
    double ratio = 0.1;
    uint64_t seed = 0;
};

// Pure function of (ids, ratio, seed, test_fraction). The test partition is
// carved before the ratio is applied, so it is identical across ratios for a
// fixed seed. |train_labeled| = round(ratio * |train|).
DatasetSplit make_split(std::vector<std::string> ids, double ratio, uint64_t seed,
                        double test_fraction);

// Binary PGM (P5, maxval 255). Images quantize to 1/255 steps; masks store
// raw class indices as pixel values.
void save_pgm(const std::string& path, const Tensor& image);
Tensor load_pgm(const std::string& path);
void save_mask_pgm(const std::string& path, const std::vector<uint8_t>& mask, int64_t height,
                   int64_t width);
std::vector<uint8_t> load_mask_pgm(const std::string& path, int64_t& height, int64_t& width);

// Directory layout: images/<id>.pgm, masks/<id>.pgm,
// split_<ratio>_<seed>.txt with LABELED / UNLABELED / TEST sections.
void save_dataset(const std::string& dir, const std::vector<SegSample>& samples);
std::string split_file_path(const std::string& dir, double ratio, uint64_t seed);
void write_split_file(const std::string& path, const DatasetSplit& split);
DatasetSplit read_split_file(const std::string& path);
std::vector<std::string> list_dataset_ids(const std::string& dir);

// Loads one sample; masks are read only when with_mask is set.
SegSample load_sample(const std::string& dir, const std::string& id, bool with_mask);

// Stacks samples into a batch tensor [n,1,H,W] (+ masks [n,H,W] if any).
Tensor stack_images(const std::vector<const SegSample*>& samples);
Tensor stack_masks(const std::vector<const SegSample*>& samples);

// Fixed-threshold baseline (Otsu). Returns a binary mask; foreground is the
// above-threshold side. Used as the generator's learnability oracle.
std::vector<uint8_t> otsu_mask(const Tensor& image);

} // namespace semikan
