#pragma once

#include "semikan/data.hpp"
#include "semikan/metrics.hpp"
#include "semikan/model.hpp"
#include "semikan/objective.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semikan {

struct RunConfig {
    ModelConfig model;
    ObjectiveConfig objective;
    // optimizer (Adam with decoupled weight decay)
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-3;
    int64_t batch_size = 8;
    int64_t epochs = 10;
    // data
    std::string data_dir = "data";
    std::string out_dir = "run";
    double ratio = 0.1;
    double test_fraction = 0.2;
    uint64_t seed = 42;
    int64_t threads = 0; // 0 = hardware default
};

// Line-oriented `key = value` round-trip. parse() starts from defaults so a
// partial file is valid; unknown keys raise ConfigError. dump(parse(dump(c)))
// is byte-identical.
std::string dump_config(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Adam with decoupled weight decay over the model's registered parameters.
class AdamW {
  public:
    AdamW(double lr, double beta1, double beta2, double weight_decay, double eps = 1e-8);

    void step(std::vector<std::pair<std::string, Tensor>>& params);
    void zero_grads(std::vector<std::pair<std::string, Tensor>>& params);

    int64_t steps_taken() const { return t_; }
    // Moment estimates as named tensors ("adam.m.<param>", "adam.v.<param>").
    std::vector<std::pair<std::string, Tensor>> state_tensors(
        const std::vector<std::pair<std::string, Tensor>>& params) const;
    void load_state(const std::vector<std::pair<std::string, Tensor>>& state,
                    const std::vector<std::pair<std::string, Tensor>>& params, int64_t steps);

  private:
    double lr_, beta1_, beta2_, weight_decay_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
    std::string final_checkpoint;
    std::string log_path;
    int64_t steps = 0;
    int64_t parameter_count = 0;
    LossReport last_report;
    bool aborted = false;        // NaN/Inf loss
    std::string abort_message;
};

// Full training run per the config; writes train_log.csv, config_echo.txt
// and per-epoch checkpoints under cfg.out_dir. Resumes bit-exactly from a
// checkpoint written by the same build.
TrainResult train(const RunConfig& cfg, const std::string& resume_checkpoint = "");

struct EvaluationRow {
    std::string sample_id;
    int64_t cls = 0;
    double dice = 0.0;
    double jaccard = 0.0;
    std::optional<double> hd95;
    std::optional<double> asd;
};

struct EvaluationSummary {
    std::vector<EvaluationRow> rows; // per sample x class
    double mean_dice = 0.0;
    double mean_jaccard = 0.0;
    std::optional<double> mean_hd95;
    std::optional<double> mean_asd;
    std::string csv_path;
};

// Evaluates a checkpoint on the TEST section of its split and writes
// sample_id,class,dice,jaccard,hd95,asd rows plus per-class mean rows.
EvaluationSummary evaluate(const std::string& checkpoint_path, const std::string& out_csv);

struct ExportResult {
    std::string input_pgm;
    std::string feature_pgm;
    std::string overlay_pgm;
    std::vector<std::string> activation_csvs;
    std::string prune_report_path;
};

// Interpretability exports for one sample: bottleneck feature heat map
// (nearest-upsampled to input size) as PGM, per-KAN-layer activation dumps
// phi(x) at 101 uniform points per edge, and an edge prune report.
ExportResult export_interpretability(const std::string& checkpoint_path,
                                     const std::string& sample_id, const std::string& out_dir,
                                     double prune_threshold = 1e-3);

// Shared helper: rebuild the model held in a checkpoint.
std::pair<RunConfig, SemiKanModel> load_model_checkpoint(const std::string& path);

} // namespace semikan
