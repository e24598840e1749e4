#include "semikan/data.hpp"

#include "semikan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace semikan {

Difficulty difficulty_from_name(const std::string& name) {
    if (name == "easy") return Difficulty::Easy;
    if (name == "hard") return Difficulty::Hard;
    throw ConfigError("unknown difficulty: " + name);
}

std::string difficulty_name(Difficulty d) { return d == Difficulty::Easy ? "easy" : "hard"; }

namespace {

struct Blob {
    double cy, cx, r0;
    double amp[3];   // radial perturbation amplitudes (m = 2, 3, 4)
    double phase[3];
    double contrast;
};

double blob_radius(const Blob& b, double theta) {
    double r = 1.0;
    for (int m = 0; m < 3; ++m) r += b.amp[m] * std::cos(double(m + 2) * theta + b.phase[m]);
    return b.r0 * r;
}

// Smooth low-frequency field in [-1,1], sum of a few random cosines.
struct TextureField {
    double fx[3], fy[3], phase[3], w[3];
    static TextureField sample(Rng& rng, double max_freq) {
        TextureField t;
        for (int i = 0; i < 3; ++i) {
            t.fx[i] = rng.uniform(0.5, max_freq);
            t.fy[i] = rng.uniform(0.5, max_freq);
            t.phase[i] = rng.uniform(0.0, 2.0 * M_PI);
            t.w[i] = rng.uniform(0.4, 1.0);
        }
        return t;
    }
    double at(double ny, double nx) const {
        double acc = 0.0, norm = 0.0;
        for (int i = 0; i < 3; ++i) {
            acc += w[i] * std::cos(2.0 * M_PI * (fx[i] * nx + fy[i] * ny) + phase[i]);
            norm += w[i];
        }
        return acc / norm;
    }
};

// 3x3 box blur, `passes` times; used to soften hard-mode boundaries.
void box_blur(std::vector<double>& img, int64_t H, int64_t W, int passes) {
    std::vector<double> tmp(img.size());
    for (int p = 0; p < passes; ++p) {
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double acc = 0.0;
                int cnt = 0;
                for (int64_t dy = -1; dy <= 1; ++dy)
                    for (int64_t dx = -1; dx <= 1; ++dx) {
                        int64_t yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                        acc += img[size_t(yy * W + xx)];
                        ++cnt;
                    }
                tmp[size_t(y * W + x)] = acc / double(cnt);
            }
        img.swap(tmp);
    }
}

SegSample generate_sample(int64_t H, int64_t W, Difficulty diff, const std::string& id,
                          Rng rng) {
    bool hard = diff == Difficulty::Hard;
    double min_dim = double(std::min(H, W));

    std::vector<uint8_t> mask;
    std::vector<Blob> blobs;
    // Rejection loop: resample the blob set until the foreground fraction
    // lands in the documented range.
    for (int attempt = 0; attempt < 64; ++attempt) {
        blobs.clear();
        int64_t n_blobs = 1 + int64_t(rng.uniform_int(3));
        for (int64_t bi = 0; bi < n_blobs; ++bi) {
            for (int tries = 0; tries < 40; ++tries) {
                Blob b;
                b.r0 = rng.uniform(0.13, 0.24) * min_dim;
                b.cy = rng.uniform(b.r0 * 1.4, double(H) - b.r0 * 1.4);
                b.cx = rng.uniform(b.r0 * 1.4, double(W) - b.r0 * 1.4);
                double max_amp = hard ? 0.22 : 0.14;
                for (int m = 0; m < 3; ++m) {
                    b.amp[m] = rng.uniform(-max_amp, max_amp);
                    b.phase[m] = rng.uniform(0.0, 2.0 * M_PI);
                }
                b.contrast = hard ? rng.uniform(0.10, 0.30) : rng.uniform(0.30, 0.40);
                bool overlaps = false;
                for (const Blob& o : blobs) {
                    double d = std::hypot(b.cy - o.cy, b.cx - o.cx);
                    if (d < 1.35 * (b.r0 + o.r0)) overlaps = true;
                }
                if (!overlaps) {
                    blobs.push_back(b);
                    break;
                }
            }
        }
        mask.assign(size_t(H * W), 0);
        int64_t fg = 0;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                for (const Blob& b : blobs) {
                    double dy = double(y) - b.cy, dx = double(x) - b.cx;
                    double theta = std::atan2(dy, dx);
                    if (dy * dy + dx * dx < std::pow(blob_radius(b, theta), 2)) {
                        mask[size_t(y * W + x)] = 1;
                        ++fg;
                        break;
                    }
                }
            }
        double frac = double(fg) / double(H * W);
        if (frac >= 0.05 && frac <= 0.45) break;
    }

    TextureField bg_tex = TextureField::sample(rng, hard ? 3.0 : 2.0);
    double bg_amp = hard ? 0.13 : 0.05;
    double noise_sigma = hard ? 0.035 : 0.012;

    // Distractor smudges (hard mode): bright smooth bumps with no mask.
    struct Smudge {
        double cy, cx, sigma, amp;
    };
    std::vector<Smudge> smudges;
    if (hard) {
        int64_t n = int64_t(rng.uniform_int(3)); // 0..2
        for (int64_t i = 0; i < n; ++i) {
            Smudge s;
            s.cy = rng.uniform(0.1, 0.9) * double(H);
            s.cx = rng.uniform(0.1, 0.9) * double(W);
            s.sigma = rng.uniform(0.08, 0.16) * min_dim;
            s.amp = rng.uniform(0.08, 0.18);
            smudges.push_back(s);
        }
    }

    // Per-blob foreground field; blurred in hard mode so edges are soft.
    std::vector<double> fg_field(size_t(H * W), 0.0);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            if (mask[size_t(y * W + x)]) {
                // contrast of the owning blob
                for (const Blob& b : blobs) {
                    double dy = double(y) - b.cy, dx = double(x) - b.cx;
                    double theta = std::atan2(dy, dx);
                    if (dy * dy + dx * dx < std::pow(blob_radius(b, theta), 2)) {
                        fg_field[size_t(y * W + x)] = b.contrast;
                        break;
                    }
                }
            }
    if (hard) box_blur(fg_field, H, W, 2);

    std::vector<double> img(size_t(H * W));
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            double ny = double(y) / double(H), nx = double(x) / double(W);
            double v = 0.45 + bg_amp * bg_tex.at(ny, nx);
            v += fg_field[size_t(y * W + x)];
            for (const Smudge& s : smudges) {
                double d2 = std::pow(double(y) - s.cy, 2) + std::pow(double(x) - s.cx, 2);
                v += s.amp * std::exp(-d2 / (2.0 * s.sigma * s.sigma));
            }
            v += rng.normal(0.0, noise_sigma);
            img[size_t(y * W + x)] = std::clamp(v, 0.0, 1.0);
        }

    SegSample sample;
    sample.id = id;
    sample.image = Tensor::from_data({1, H, W}, std::move(img));
    sample.mask = std::move(mask);
    sample.labeled = true;
    sample.height = H;
    sample.width = W;
    return sample;
}

} // namespace

std::vector<SegSample> generate_dataset(int64_t count, int64_t height, int64_t width,
                                        Difficulty difficulty, uint64_t seed) {
    if (count < 1 || height < 8 || width < 8) throw ConfigError("generate_dataset: bad size");
    Rng root(seed);
    std::vector<SegSample> out;
    out.reserve(size_t(count));
    for (int64_t i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "s%05lld", (long long)i);
        out.push_back(generate_sample(height, width, difficulty, id, root.fork(uint64_t(i))));
    }
    return out;
}

DatasetSplit make_split(std::vector<std::string> ids, double ratio, uint64_t seed,
                        double test_fraction) {
    if (ratio <= 0.0 || ratio > 1.0) throw ConfigError("make_split: ratio must be in (0,1]");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("make_split: test fraction must be in [0,1)");
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);
    DatasetSplit split;
    split.ratio = ratio;
    split.seed = seed;
    size_t test_count = size_t(std::llround(test_fraction * double(ids.size())));
    size_t train_count = ids.size() - test_count;
    size_t labeled_count = size_t(std::llround(ratio * double(train_count)));
    labeled_count = std::min(std::max<size_t>(labeled_count, 1), train_count);
    split.test.assign(ids.begin(), ids.begin() + long(test_count));
    split.train_labeled.assign(ids.begin() + long(test_count),
                               ids.begin() + long(test_count + labeled_count));
    split.train_unlabeled.assign(ids.begin() + long(test_count + labeled_count), ids.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(split.train_labeled.begin(), split.train_labeled.end());
    std::sort(split.train_unlabeled.begin(), split.train_unlabeled.end());
    return split;
}

// ---------------------------------------------------------------------------
// PGM I/O
// ---------------------------------------------------------------------------

namespace {

void write_pgm_bytes(const std::string& path, const uint8_t* bytes, int64_t H, int64_t W) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_pgm: cannot open " + path);
    f << "P5\n" << W << " " << H << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes), std::streamsize(H * W));
    if (!f) throw IoError("save_pgm: write failure on " + path);
}

// Strict-ish P5 reader: optional '#' comments between tokens, maxval 255.
std::vector<uint8_t> read_pgm_bytes(const std::string& path, int64_t& H, int64_t& W) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_pgm: cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto skip_ws = [&]() {
        while (pos < content.size()) {
            char c = content[pos];
            if (c == '#') {
                while (pos < content.size() && content[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&](const char* what) {
        skip_ws();
        size_t start = pos;
        while (pos < content.size() && content[pos] >= '0' && content[pos] <= '9') ++pos;
        if (pos == start)
            throw ParseError(std::string("load_pgm: expected ") + what + " in " + path, start);
        return std::stoll(content.substr(start, pos - start));
    };
    if (content.size() < 2 || content[0] != 'P' || content[1] != '5')
        throw ParseError("load_pgm: not a P5 file: " + path, 0);
    pos = 2;
    int64_t width = read_int("width");
    int64_t height = read_int("height");
    int64_t maxval = read_int("maxval");
    if (width < 1 || height < 1) throw ParseError("load_pgm: bad dimensions", pos);
    if (maxval != 255) throw ParseError("load_pgm: maxval must be 255", pos);
    if (pos >= content.size()) throw ParseError("load_pgm: missing raster", pos);
    ++pos; // single whitespace byte after maxval
    size_t need = size_t(width * height);
    if (content.size() - pos < need)
        throw ParseError("load_pgm: truncated raster, need " + std::to_string(need) + " bytes",
                         pos);
    std::vector<uint8_t> bytes(need);
    std::copy(content.begin() + long(pos), content.begin() + long(pos + need), bytes.begin());
    H = height;
    W = width;
    return bytes;
}

} // namespace

void save_pgm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 1)
        throw DimensionError("save_pgm: image must be [1,H,W]");
    int64_t H = image.dim(1), W = image.dim(2);
    std::vector<uint8_t> bytes(size_t(H * W));
    const double* p = image.ptr();
    for (size_t i = 0; i < bytes.size(); ++i) {
        double v = std::clamp(p[i], 0.0, 1.0);
        bytes[i] = uint8_t(std::lround(v * 255.0));
    }
    write_pgm_bytes(path, bytes.data(), H, W);
}

Tensor load_pgm(const std::string& path) {
    int64_t H = 0, W = 0;
    std::vector<uint8_t> bytes = read_pgm_bytes(path, H, W);
    std::vector<double> data(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) data[i] = double(bytes[i]) / 255.0;
    return Tensor::from_data({1, H, W}, std::move(data));
}

void save_mask_pgm(const std::string& path, const std::vector<uint8_t>& mask, int64_t height,
                   int64_t width) {
    if (int64_t(mask.size()) != height * width)
        throw DimensionError("save_mask_pgm: mask size mismatch");
    write_pgm_bytes(path, mask.data(), height, width);
}

std::vector<uint8_t> load_mask_pgm(const std::string& path, int64_t& height, int64_t& width) {
    return read_pgm_bytes(path, height, width);
}

// ---------------------------------------------------------------------------
// dataset directory
// ---------------------------------------------------------------------------

void save_dataset(const std::string& dir, const std::vector<SegSample>& samples) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    for (const SegSample& s : samples) {
        save_pgm((fs::path(dir) / "images" / (s.id + ".pgm")).string(), s.image);
        save_mask_pgm((fs::path(dir) / "masks" / (s.id + ".pgm")).string(), s.mask, s.height,
                      s.width);
    }
}

std::string split_file_path(const std::string& dir, double ratio, uint64_t seed) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "split_%.2f_%llu.txt", ratio, (unsigned long long)seed);
    return (fs::path(dir) / buf).string();
}

void write_split_file(const std::string& path, const DatasetSplit& split) {
    std::ofstream f(path);
    if (!f) throw IoError("write_split_file: cannot open " + path);
    f << "LABELED\n";
    for (const auto& id : split.train_labeled) f << id << "\n";
    f << "UNLABELED\n";
    for (const auto& id : split.train_unlabeled) f << id << "\n";
    f << "TEST\n";
    for (const auto& id : split.test) f << id << "\n";
}

DatasetSplit read_split_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("read_split_file: cannot open " + path);
    DatasetSplit split;
    std::vector<std::string>* section = nullptr;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line == "LABELED") section = &split.train_labeled;
        else if (line == "UNLABELED") section = &split.train_unlabeled;
        else if (line == "TEST") section = &split.test;
        else if (section) section->push_back(line);
        else throw IoError("read_split_file: id before section header in " + path);
    }
    return split;
}

std::vector<std::string> list_dataset_ids(const std::string& dir) {
    std::vector<std::string> ids;
    fs::path images = fs::path(dir) / "images";
    if (!fs::exists(images)) throw IoError("list_dataset_ids: no images/ under " + dir);
    for (const auto& entry : fs::directory_iterator(images))
        if (entry.path().extension() == ".pgm") ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

SegSample load_sample(const std::string& dir, const std::string& id, bool with_mask) {
    SegSample s;
    s.id = id;
    s.image = load_pgm((fs::path(dir) / "images" / (id + ".pgm")).string());
    s.height = s.image.dim(1);
    s.width = s.image.dim(2);
    s.labeled = with_mask;
    if (with_mask) {
        int64_t H = 0, W = 0;
        s.mask = load_mask_pgm((fs::path(dir) / "masks" / (id + ".pgm")).string(), H, W);
        if (H != s.height || W != s.width)
            throw IoError("load_sample: image/mask size mismatch for " + id);
    }
    return s;
}

Tensor stack_images(const std::vector<const SegSample*>& samples) {
    if (samples.empty()) throw ContractError("stack_images: empty batch");
    int64_t H = samples[0]->height, W = samples[0]->width;
    Tensor out({int64_t(samples.size()), 1, H, W});
    double* po = out.ptr();
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i]->height != H || samples[i]->width != W)
            throw DimensionError("stack_images: mixed sample sizes");
        std::copy(samples[i]->image.data().begin(), samples[i]->image.data().end(),
                  po + int64_t(i) * H * W);
    }
    return out;
}

Tensor stack_masks(const std::vector<const SegSample*>& samples) {
    if (samples.empty()) throw ContractError("stack_masks: empty batch");
    int64_t H = samples[0]->height, W = samples[0]->width;
    Tensor out({int64_t(samples.size()), H, W});
    double* po = out.ptr();
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i]->mask.empty()) throw ContractError("stack_masks: unlabeled sample in batch");
        for (size_t j = 0; j < samples[i]->mask.size(); ++j)
            po[i * size_t(H * W) + j] = double(samples[i]->mask[j]);
    }
    return out;
}

std::vector<uint8_t> otsu_mask(const Tensor& image) {
    // 256-bin histogram threshold maximizing between-class variance.
    std::vector<int64_t> hist(256, 0);
    for (double v : image.data()) {
        int bin = int(std::clamp(v, 0.0, 1.0) * 255.0);
        ++hist[size_t(bin)];
    }
    int64_t total = image.numel();
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += double(i) * double(hist[size_t(i)]);
    double sum_b = 0.0;
    int64_t w_b = 0;
    double best_var = -1.0;
    int best_t = 127;
    for (int t = 0; t < 256; ++t) {
        w_b += hist[size_t(t)];
        if (w_b == 0) continue;
        int64_t w_f = total - w_b;
        if (w_f == 0) break;
        sum_b += double(t) * double(hist[size_t(t)]);
        double m_b = sum_b / double(w_b);
        double m_f = (sum_all - sum_b) / double(w_f);
        double var = double(w_b) * double(w_f) * (m_b - m_f) * (m_b - m_f);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    double threshold = double(best_t) / 255.0;
    std::vector<uint8_t> mask(size_t(image.numel()));
    auto d = image.data();
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = d[i] > threshold ? 1 : 0;
    return mask;
}

} // namespace semikan
