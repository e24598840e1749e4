#include "semikan/trainer.hpp"

#include "semikan/ops.hpp"
#include "semikan/serialize.hpp"
#include "semikan/threadpool.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace semikan {

// ---------------------------------------------------------------------------
// config round-trip
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + v);
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": " + v);
    }
}

int64_t parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": " + v);
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

} // namespace

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "decoders = " << cfg.model.num_decoders << "\n";
    os << "channels = " << cfg.model.channels[0] << "," << cfg.model.channels[1] << ","
       << cfg.model.channels[2] << "\n";
    os << "patch = " << cfg.model.patch << "\n";
    os << "embed_dim = " << cfg.model.embed_dim << "\n";
    os << "spline_order = " << cfg.model.spline_order << "\n";
    os << "grid_size = " << cfg.model.grid_size << "\n";
    os << "domain_min = " << fmt_double(cfg.model.domain_min) << "\n";
    os << "domain_max = " << fmt_double(cfg.model.domain_max) << "\n";
    os << "kan_blocks = " << cfg.model.kan_blocks << "\n";
    os << "classes = " << cfg.model.num_classes << "\n";
    os << "in_channels = " << cfg.model.in_channels << "\n";
    os << "strategies = ";
    for (int64_t d = 0; d < cfg.model.num_decoders; ++d) {
        if (d) os << ",";
        os << upsample_name(cfg.model.strategies[size_t(d)]);
    }
    os << "\n";
    os << "use_kan = " << (cfg.model.use_kan ? "true" : "false") << "\n";
    os << "temperature = " << fmt_double(cfg.objective.temperature) << "\n";
    os << "alpha = " << fmt_double(cfg.objective.alpha) << "\n";
    os << "lambda_max = " << fmt_double(cfg.objective.lambda_max) << "\n";
    os << "ramp_fraction = " << fmt_double(cfg.objective.ramp_fraction) << "\n";
    os << "lr = " << fmt_double(cfg.lr) << "\n";
    os << "beta1 = " << fmt_double(cfg.beta1) << "\n";
    os << "beta2 = " << fmt_double(cfg.beta2) << "\n";
    os << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "data_dir = " << cfg.data_dir << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "ratio = " << fmt_double(cfg.ratio) << "\n";
    os << "test_fraction = " << fmt_double(cfg.test_fraction) << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "threads = " << cfg.threads << "\n";
    return os.str();
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("config: expected key = value: " + t);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key == "decoders") cfg.model.num_decoders = parse_int(value, key);
        else if (key == "channels") {
            auto parts = split_list(value);
            if (parts.size() != 3) throw ConfigError("config: channels needs 3 entries");
            for (size_t i = 0; i < 3; ++i) cfg.model.channels[i] = parse_int(parts[i], key);
        } else if (key == "patch") cfg.model.patch = parse_int(value, key);
        else if (key == "embed_dim") cfg.model.embed_dim = parse_int(value, key);
        else if (key == "spline_order") cfg.model.spline_order = int(parse_int(value, key));
        else if (key == "grid_size") cfg.model.grid_size = int(parse_int(value, key));
        else if (key == "domain_min") cfg.model.domain_min = parse_double(value, key);
        else if (key == "domain_max") cfg.model.domain_max = parse_double(value, key);
        else if (key == "kan_blocks") cfg.model.kan_blocks = parse_int(value, key);
        else if (key == "classes") cfg.model.num_classes = parse_int(value, key);
        else if (key == "in_channels") cfg.model.in_channels = parse_int(value, key);
        else if (key == "strategies") {
            cfg.model.strategies.clear();
            for (const std::string& name : split_list(value))
                cfg.model.strategies.push_back(upsample_from_name(name));
        } else if (key == "use_kan") cfg.model.use_kan = parse_bool(value, key);
        else if (key == "temperature") cfg.objective.temperature = parse_double(value, key);
        else if (key == "alpha") cfg.objective.alpha = parse_double(value, key);
        else if (key == "lambda_max") cfg.objective.lambda_max = parse_double(value, key);
        else if (key == "ramp_fraction") cfg.objective.ramp_fraction = parse_double(value, key);
        else if (key == "lr") cfg.lr = parse_double(value, key);
        else if (key == "beta1") cfg.beta1 = parse_double(value, key);
        else if (key == "beta2") cfg.beta2 = parse_double(value, key);
        else if (key == "weight_decay") cfg.weight_decay = parse_double(value, key);
        else if (key == "batch_size") cfg.batch_size = parse_int(value, key);
        else if (key == "epochs") cfg.epochs = parse_int(value, key);
        else if (key == "data_dir") cfg.data_dir = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "ratio") cfg.ratio = parse_double(value, key);
        else if (key == "test_fraction") cfg.test_fraction = parse_double(value, key);
        else if (key == "seed") cfg.seed = uint64_t(parse_int(value, key));
        else if (key == "threads") cfg.threads = parse_int(value, key);
        else throw ConfigError("config: unknown key " + key);
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_config_file: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

AdamW::AdamW(double lr, double beta1, double beta2, double weight_decay, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

void AdamW::step(std::vector<std::pair<std::string, Tensor>>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(size_t(params[i].second.numel()), 0.0);
            v_[i].assign(size_t(params[i].second.numel()), 0.0);
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].second;
        auto g = static_cast<const Tensor&>(p).grad();
        double* theta = p.ptr();
        double* m = m_[i].data();
        double* v = v_[i].data();
        int64_t n = p.numel();
        for (int64_t j = 0; j < n; ++j) {
            double gj = g.empty() ? 0.0 : g[size_t(j)];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            theta[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * theta[j]);
        }
    }
}

void AdamW::zero_grads(std::vector<std::pair<std::string, Tensor>>& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> AdamW::state_tensors(
    const std::vector<std::pair<std::string, Tensor>>& params) const {
    std::vector<std::pair<std::string, Tensor>> out;
    if (m_.empty()) return out;
    for (size_t i = 0; i < params.size(); ++i) {
        out.emplace_back("adam.m." + params[i].first,
                         Tensor::from_data(params[i].second.shape(), m_[i]));
        out.emplace_back("adam.v." + params[i].first,
                         Tensor::from_data(params[i].second.shape(), v_[i]));
    }
    return out;
}

void AdamW::load_state(const std::vector<std::pair<std::string, Tensor>>& state,
                       const std::vector<std::pair<std::string, Tensor>>& params, int64_t steps) {
    m_.resize(params.size());
    v_.resize(params.size());
    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& [n, t] : state)
            if (n == name) return &t;
        return nullptr;
    };
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor* m = find("adam.m." + params[i].first);
        const Tensor* v = find("adam.v." + params[i].first);
        if (!m || !v) throw ConfigError("AdamW::load_state: missing state for " + params[i].first);
        m_[i].assign(m->data().begin(), m->data().end());
        v_[i].assign(v->data().begin(), v->data().end());
    }
    t_ = steps;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

constexpr uint64_t kDataRngSalt = 0xd47a5eedULL;

std::string checkpoint_path(const std::string& out_dir, int64_t epoch) {
    return (fs::path(out_dir) / ("ckpt_epoch_" + std::to_string(epoch) + ".skck")).string();
}

void write_checkpoint(const std::string& path, const RunConfig& cfg, SemiKanModel& model,
                      const AdamW& opt, const Rng& data_rng, int64_t next_epoch,
                      int64_t global_step) {
    Checkpoint ck;
    ck.config_echo = dump_config(cfg);
    auto params = model.parameters();
    for (const auto& [name, t] : params)
        ck.tensors.emplace_back(name, Tensor::from_data(t.shape(), {t.data().begin(),
                                                                    t.data().end()}));
    for (const auto& [name, t] : model.buffers())
        ck.tensors.emplace_back(name, Tensor::from_data(t.shape(), {t.data().begin(),
                                                                    t.data().end()}));
    for (auto& entry : opt.state_tensors(params)) ck.tensors.push_back(std::move(entry));
    auto rng_words = data_rng.state();
    ck.rng_state.assign(rng_words.begin(), rng_words.end());
    ck.rng_state.push_back(uint64_t(next_epoch));
    ck.rng_state.push_back(uint64_t(global_step));
    ck.rng_state.push_back(uint64_t(opt.steps_taken()));
    ck.save(path);
}

std::string csv_row(int64_t step, const LossReport& r) {
    std::ostringstream os;
    os << step << "," << fmt_double(r.dice_loss) << "," << fmt_double(r.uncertainty_loss) << ","
       << fmt_double(r.rectify_loss) << "," << fmt_double(r.consistency_loss) << ","
       << fmt_double(r.ramp_weight) << "," << fmt_double(r.total_loss);
    return os.str();
}

} // namespace

TrainResult train(const RunConfig& cfg, const std::string& resume_checkpoint) {
    if (cfg.threads > 0) ThreadPool::instance().set_threads(int(cfg.threads));
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("train: bad batch_size/epochs");
    fs::create_directories(cfg.out_dir);

    std::string split_path = split_file_path(cfg.data_dir, cfg.ratio, cfg.seed);
    if (!fs::exists(split_path)) throw IoError("train: missing split file " + split_path);
    DatasetSplit split = read_split_file(split_path);
    if (split.train_labeled.empty()) throw ContractError("train: split has no labeled samples");

    std::vector<SegSample> labeled, unlabeled;
    for (const auto& id : split.train_labeled) labeled.push_back(load_sample(cfg.data_dir, id, true));
    for (const auto& id : split.train_unlabeled)
        unlabeled.push_back(load_sample(cfg.data_dir, id, false));

    // lambda_max == 0 trains on the labeled subset alone: unlabeled data is
    // never forwarded, so batch statistics see labeled samples only.
    bool use_unlabeled = !unlabeled.empty() && cfg.objective.lambda_max > 0.0;
    int64_t lab_bs = use_unlabeled ? std::max<int64_t>(1, cfg.batch_size / 2) : cfg.batch_size;
    int64_t ulab_bs = use_unlabeled ? std::max<int64_t>(1, cfg.batch_size - lab_bs) : 0;
    int64_t steps_per_epoch = (int64_t(labeled.size()) + lab_bs - 1) / lab_bs;
    int64_t total_steps = cfg.epochs * steps_per_epoch;
    int64_t ramp_steps = std::llround(cfg.objective.ramp_fraction * double(total_steps));

    SemiKanModel model = SemiKanModel::build(cfg.model, cfg.seed);
    auto params = model.parameters();
    AdamW opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
    Rng data_rng(cfg.seed ^ kDataRngSalt);
    int64_t start_epoch = 0, global_step = 0;

    if (!resume_checkpoint.empty()) {
        Checkpoint ck = Checkpoint::load(resume_checkpoint);
        model.load_state(ck.tensors);
        if (ck.rng_state.size() < 7)
            throw ParseError("train: checkpoint rng section too short", 0);
        std::array<uint64_t, 4> words{ck.rng_state[0], ck.rng_state[1], ck.rng_state[2],
                                      ck.rng_state[3]};
        data_rng.set_state(words);
        start_epoch = int64_t(ck.rng_state[4]);
        global_step = int64_t(ck.rng_state[5]);
        opt.load_state(ck.tensors, params, int64_t(ck.rng_state[6]));
    }

    {
        std::ofstream echo((fs::path(cfg.out_dir) / "config_echo.txt").string());
        echo << dump_config(cfg);
    }
    TrainResult result;
    result.parameter_count = model.parameter_count();
    result.log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
    std::ofstream log(result.log_path);
    if (!log) throw IoError("train: cannot open log " + result.log_path);
    log << "step,dice,uncertainty,rectify,consistency,lambda,total\n";

    std::string last_ckpt = resume_checkpoint;
    for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> perm_lab(labeled.size());
        for (size_t i = 0; i < perm_lab.size(); ++i) perm_lab[i] = i;
        data_rng.shuffle(perm_lab);
        std::vector<size_t> perm_ulab(unlabeled.size());
        for (size_t i = 0; i < perm_ulab.size(); ++i) perm_ulab[i] = i;
        if (use_unlabeled) data_rng.shuffle(perm_ulab);
        size_t ulab_cursor = 0;

        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<const SegSample*> lab_batch;
            int64_t lb = s * lab_bs;
            int64_t le = std::min<int64_t>(int64_t(labeled.size()), lb + lab_bs);
            for (int64_t i = lb; i < le; ++i) lab_batch.push_back(&labeled[perm_lab[size_t(i)]]);

            Tensor lab_images = stack_images(lab_batch);
            Tensor lab_masks = stack_masks(lab_batch);
            Tensor ulab_images;
            if (use_unlabeled) {
                std::vector<const SegSample*> ulab_batch;
                for (int64_t i = 0; i < ulab_bs; ++i) {
                    ulab_batch.push_back(&unlabeled[perm_ulab[ulab_cursor]]);
                    ulab_cursor = (ulab_cursor + 1) % perm_ulab.size();
                }
                ulab_images = stack_images(ulab_batch);
            }

            LossReport report;
            {
                Tape tape;
                TapeScope scope(tape);
                Tensor loss = total_loss(model, lab_images, lab_masks, ulab_images, global_step,
                                         ramp_steps, cfg.objective, report);
                if (!std::isfinite(report.total_loss)) {
                    result.aborted = true;
                    result.abort_message =
                        "non-finite loss at step " + std::to_string(global_step) +
                        "; last good checkpoint: " + (last_ckpt.empty() ? "<none>" : last_ckpt);
                    result.final_checkpoint = last_ckpt;
                    result.steps = global_step;
                    return result;
                }
                tape.backward(loss);
            }
            opt.step(params);
            opt.zero_grads(params);
            log << csv_row(global_step, report) << "\n";
            result.last_report = report;
            ++global_step;
        }
        last_ckpt = checkpoint_path(cfg.out_dir, epoch + 1);
        write_checkpoint(last_ckpt, cfg, model, opt, data_rng, epoch + 1, global_step);
    }
    result.final_checkpoint = last_ckpt;
    result.steps = global_step;
    return result;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

std::pair<RunConfig, SemiKanModel> load_model_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    RunConfig cfg = parse_config(ck.config_echo);
    SemiKanModel model = SemiKanModel::build(cfg.model, cfg.seed);
    model.load_state(ck.tensors);
    return {std::move(cfg), std::move(model)};
}

namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

} // namespace

EvaluationSummary evaluate(const std::string& checkpoint_path, const std::string& out_csv) {
    auto [cfg, model] = load_model_checkpoint(checkpoint_path);
    DatasetSplit split = read_split_file(split_file_path(cfg.data_dir, cfg.ratio, cfg.seed));
    if (split.test.empty()) throw ContractError("evaluate: split has no TEST section entries");

    EvaluationSummary summary;
    int64_t K = cfg.model.num_classes;
    const int64_t chunk = 8;
    for (size_t base = 0; base < split.test.size(); base += chunk) {
        size_t end = std::min(split.test.size(), base + chunk);
        std::vector<SegSample> samples;
        std::vector<const SegSample*> ptrs;
        for (size_t i = base; i < end; ++i) {
            samples.push_back(load_sample(cfg.data_dir, split.test[i], true));
            for (uint8_t v : samples.back().mask)
                if (int64_t(v) >= K)
                    throw ConfigError("evaluate: mask class " + std::to_string(int(v)) +
                                      " exceeds checkpoint classes " + std::to_string(K));
        }
        for (const SegSample& s : samples) ptrs.push_back(&s);
        Tensor images = stack_images(ptrs);
        Tensor pred = model.predict(images);
        int64_t H = images.dim(2), W = images.dim(3);
        for (size_t i = 0; i < samples.size(); ++i) {
            std::vector<uint8_t> pmask(size_t(H * W));
            const double* pp = pred.ptr() + int64_t(i) * H * W;
            for (size_t j = 0; j < pmask.size(); ++j) pmask[j] = uint8_t(pp[j]);
            MetricReport rep = evaluate_masks(pmask, samples[i].mask, H, W, K);
            for (const ClassMetrics& cm : rep.per_class) {
                EvaluationRow row;
                row.sample_id = samples[i].id;
                row.cls = cm.cls;
                row.dice = cm.dice;
                row.jaccard = cm.jaccard;
                row.hd95 = cm.hd95;
                row.asd = cm.asd;
                summary.rows.push_back(row);
            }
        }
    }

    // per-class means over samples (surface metrics over defined rows only)
    std::ofstream csv(out_csv);
    if (!csv) throw IoError("evaluate: cannot open " + out_csv);
    csv << "sample_id,class,dice,jaccard,hd95,asd\n";
    for (const EvaluationRow& r : summary.rows)
        csv << r.sample_id << "," << r.cls << "," << fmt_double(r.dice) << ","
            << fmt_double(r.jaccard) << "," << opt_cell(r.hd95) << "," << opt_cell(r.asd) << "\n";

    double dice_sum = 0.0, jac_sum = 0.0;
    int64_t count = 0;
    for (int64_t cls = 1; cls < K; ++cls) {
        double d = 0.0, j = 0.0, hd = 0.0, as = 0.0;
        int64_t n = 0, nh = 0;
        for (const EvaluationRow& r : summary.rows) {
            if (r.cls != cls) continue;
            d += r.dice;
            j += r.jaccard;
            ++n;
            if (r.hd95) {
                hd += *r.hd95;
                as += *r.asd;
                ++nh;
            }
        }
        if (n == 0) continue;
        EvaluationRow m;
        m.sample_id = "mean";
        m.cls = cls;
        m.dice = d / double(n);
        m.jaccard = j / double(n);
        if (nh > 0) {
            m.hd95 = hd / double(nh);
            m.asd = as / double(nh);
        }
        csv << m.sample_id << "," << m.cls << "," << fmt_double(m.dice) << ","
            << fmt_double(m.jaccard) << "," << opt_cell(m.hd95) << "," << opt_cell(m.asd) << "\n";
        dice_sum += m.dice;
        jac_sum += m.jaccard;
        if (m.hd95) {
            summary.mean_hd95 = summary.mean_hd95.value_or(0.0) + *m.hd95;
            summary.mean_asd = summary.mean_asd.value_or(0.0) + *m.asd;
        }
        ++count;
    }
    if (count > 0) {
        summary.mean_dice = dice_sum / double(count);
        summary.mean_jaccard = jac_sum / double(count);
        if (summary.mean_hd95) {
            *summary.mean_hd95 /= double(count);
            *summary.mean_asd /= double(count);
        }
    }
    summary.csv_path = out_csv;
    return summary;
}

// ---------------------------------------------------------------------------
// interpretability export
// ---------------------------------------------------------------------------

ExportResult export_interpretability(const std::string& checkpoint_path,
                                     const std::string& sample_id, const std::string& out_dir,
                                     double prune_threshold) {
    auto [cfg, model] = load_model_checkpoint(checkpoint_path);
    fs::create_directories(out_dir);

    std::string id = sample_id;
    if (id.empty()) {
        DatasetSplit split = read_split_file(split_file_path(cfg.data_dir, cfg.ratio, cfg.seed));
        if (split.test.empty()) throw ContractError("export: split has no TEST entries");
        id = split.test.front();
    }
    SegSample sample = load_sample(cfg.data_dir, id, false);
    int64_t H = sample.height, W = sample.width;
    Tensor batch = reshape(sample.image, {1, 1, H, W});

    ExportResult result;

    // (a) bottleneck feature heat map, channel-mean, nearest-upsampled.
    Tensor feats = model.bottleneck_features(batch); // [1,C,h,w]
    int64_t C = feats.dim(1), h = feats.dim(2), w = feats.dim(3);
    Tensor heat({1, 1, h, w});
    {
        const double* pf = feats.ptr();
        double* ph = heat.ptr();
        for (int64_t i = 0; i < h * w; ++i) {
            double acc = 0.0;
            for (int64_t c = 0; c < C; ++c) acc += pf[c * h * w + i];
            ph[i] = acc / double(C);
        }
        double lo = ph[0], hi = ph[0];
        for (int64_t i = 0; i < h * w; ++i) {
            lo = std::min(lo, ph[i]);
            hi = std::max(hi, ph[i]);
        }
        double span = hi - lo;
        for (int64_t i = 0; i < h * w; ++i) ph[i] = span > 0 ? (ph[i] - lo) / span : 0.0;
    }
    Tensor heat_up = upsample_nearest(heat, H / h); // [1,1,H,W]
    Tensor heat_img = reshape(heat_up, {1, H, W});

    result.input_pgm = (fs::path(out_dir) / ("input_" + id + ".pgm")).string();
    save_pgm(result.input_pgm, sample.image);
    result.feature_pgm = (fs::path(out_dir) / ("feature_" + id + ".pgm")).string();
    save_pgm(result.feature_pgm, heat_img);
    result.overlay_pgm = (fs::path(out_dir) / ("overlay_" + id + ".pgm")).string();
    save_pgm(result.overlay_pgm, (sample.image * 0.5) + (heat_img * 0.5));

    // (b) activation dumps: phi(x) at 101 uniform points per edge.
    const int points = 101;
    for (auto& [name, layer] : model.kan_layers()) {
        std::string path = (fs::path(out_dir) / ("activations_" + name + ".csv")).string();
        std::ofstream f(path);
        if (!f) throw IoError("export: cannot open " + path);
        f << "edge_out,edge_in,x,phi\n";
        const SplineGrid& grid = layer->grid;
        int nb = grid.num_basis();
        double dmin = grid.t_min, dmax = grid.t_max;
        // Basis values are shared across edges; precompute per sample point.
        std::vector<double> xs(points), bas(size_t(points * nb)), act(points);
        for (int j = 0; j < points; ++j) {
            xs[size_t(j)] = dmin + (dmax - dmin) * double(j) / double(points - 1);
            grid.basis_row(xs[size_t(j)], bas.data() + size_t(j * nb), nullptr);
            double x = xs[size_t(j)];
            act[size_t(j)] = x / (1.0 + std::exp(-x));
        }
        std::string buf;
        buf.reserve(1 << 20);
        const double* pwb = layer->w_base.ptr();
        const double* pws = layer->w_spline.ptr();
        const double* pm = layer->edge_mask.ptr();
        const double* pc = layer->coeffs.ptr();
        int64_t in = layer->in_dim;
        for (int64_t o = 0; o < layer->out_dim; ++o)
            for (int64_t i = 0; i < in; ++i) {
                int64_t e = o * in + i;
                for (int j = 0; j < points; ++j) {
                    double spline = 0.0;
                    const double* b = bas.data() + size_t(j * nb);
                    const double* c = pc + e * nb;
                    for (int q = 0; q < nb; ++q) spline += c[q] * b[q];
                    double phi = pm[e] * (pwb[e] * act[size_t(j)] + pws[e] * spline);
                    buf += std::to_string(o);
                    buf += ',';
                    buf += std::to_string(i);
                    buf += ',';
                    buf += fmt_double(xs[size_t(j)]);
                    buf += ',';
                    buf += fmt_double(phi);
                    buf += '\n';
                    if (buf.size() > (1 << 20)) {
                        f << buf;
                        buf.clear();
                    }
                }
            }
        f << buf;
        result.activation_csvs.push_back(path);
    }

    // (c) prune report on this throwaway model instance.
    result.prune_report_path = (fs::path(out_dir) / "prune_report.csv").string();
    {
        std::ofstream f(result.prune_report_path);
        if (!f) throw IoError("export: cannot open " + result.prune_report_path);
        f << "layer,total_edges,removed,fraction_removed\n";
        std::ostringstream removed_list;
        for (auto& [name, layer] : model.kan_layers_mut()) {
            PruneReport rep = prune_edges(*layer, prune_threshold);
            f << name << "," << rep.total_edges << "," << rep.removed.size() << ","
              << fmt_double(rep.fraction_removed) << "\n";
            for (auto [o, i] : rep.removed)
                removed_list << name << "," << o << "," << i << "\n";
        }
        f << "# removed edges: layer,edge_out,edge_in\n";
        f << removed_list.str();
    }
    return result;
}

} // namespace semikan
