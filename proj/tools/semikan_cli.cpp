// Command-line driver: dataset generation, splitting, training, evaluation
// and interpretability export.

#include "semikan/data.hpp"
#include "semikan/serialize.hpp"
#include "semikan/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace semikan;

int main(int argc, char** argv) {
    CLI::App app{"semikan: semi-supervised KAN U-Net segmentation on CPU"};
    app.require_subcommand(1);

    // ---- generate ----
    auto* gen = app.add_subcommand("generate", "Generate a synthetic segmentation dataset");
    std::string gen_out = "data";
    int64_t gen_count = 60, gen_h = 64, gen_w = 64;
    std::string gen_diff = "easy";
    uint64_t gen_seed = 42;
    gen->add_option("--out-dir", gen_out, "Dataset directory");
    gen->add_option("--count", gen_count, "Number of samples");
    gen->add_option("--height", gen_h, "Image height");
    gen->add_option("--width", gen_w, "Image width");
    gen->add_option("--difficulty", gen_diff, "easy or hard");
    gen->add_option("--seed", gen_seed, "Generator seed");

    // ---- split ----
    auto* spl = app.add_subcommand("split", "Write a labeled/unlabeled/test split file");
    std::string spl_dir = "data";
    double spl_ratio = 0.1, spl_test = 0.2;
    uint64_t spl_seed = 42;
    spl->add_option("--data-dir", spl_dir, "Dataset directory");
    spl->add_option("--ratio", spl_ratio, "Labeled fraction of the train partition");
    spl->add_option("--test-fraction", spl_test, "Test fraction of all samples");
    spl->add_option("--seed", spl_seed, "Split seed");

    // ---- train ----
    auto* tr = app.add_subcommand("train", "Train a model");
    std::string tr_config, tr_resume;
    std::string tr_data, tr_out, tr_strategies;
    double tr_ratio = 0, tr_lr = 0, tr_temp = 0, tr_alpha = 0, tr_lambda = 0, tr_ramp = 0,
           tr_wd = 0, tr_testfrac = 0;
    int64_t tr_epochs = 0, tr_bs = 0, tr_decoders = 0, tr_threads = 0, tr_seed = -1;
    bool tr_no_kan = false;
    tr->add_option("--config", tr_config, "Config file (key = value lines)");
    tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
    tr->add_option("--data-dir", tr_data, "Dataset directory");
    tr->add_option("--out-dir", tr_out, "Run output directory");
    tr->add_option("--ratio", tr_ratio, "Labeled fraction");
    tr->add_option("--test-fraction", tr_testfrac, "Test fraction");
    tr->add_option("--seed", tr_seed, "Seed");
    tr->add_option("--epochs", tr_epochs, "Max epochs");
    tr->add_option("--batch-size", tr_bs, "Batch size");
    tr->add_option("--lr", tr_lr, "Learning rate");
    tr->add_option("--weight-decay", tr_wd, "Decoupled weight decay");
    tr->add_option("--temperature", tr_temp, "Sharpening temperature T");
    tr->add_option("--alpha", tr_alpha, "Consistency mixing weight");
    tr->add_option("--lambda-max", tr_lambda, "Consistency ramp ceiling");
    tr->add_option("--ramp-fraction", tr_ramp, "Ramp length as fraction of steps");
    tr->add_option("--decoders", tr_decoders, "Number of decoders");
    tr->add_option("--strategies", tr_strategies, "Comma list of upsampling strategies");
    tr->add_option("--threads", tr_threads, "Worker threads (0 = auto)");
    tr->add_flag("--no-kan", tr_no_kan, "Ablation: replace KAN-Conv stages by conv blocks");

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on its test split");
    std::string ev_ckpt, ev_out = "metrics.csv";
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--out", ev_out, "Metrics CSV path");

    // ---- export ----
    auto* ex = app.add_subcommand("export", "Interpretability exports for one sample");
    std::string ex_ckpt, ex_sample, ex_out = "export";
    double ex_threshold = 1e-3;
    ex->add_option("--checkpoint", ex_ckpt, "Checkpoint path")->required();
    ex->add_option("--sample", ex_sample, "Sample id (default: first test sample)");
    ex->add_option("--out-dir", ex_out, "Export directory");
    ex->add_option("--prune-threshold", ex_threshold, "Edge prune threshold");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto samples = generate_dataset(gen_count, gen_h, gen_w,
                                            difficulty_from_name(gen_diff), gen_seed);
            save_dataset(gen_out, samples);
            std::printf("wrote %lld samples (%lldx%lld, %s) to %s\n", (long long)gen_count,
                        (long long)gen_h, (long long)gen_w, gen_diff.c_str(), gen_out.c_str());
        } else if (spl->parsed()) {
            auto ids = list_dataset_ids(spl_dir);
            DatasetSplit split = make_split(ids, spl_ratio, spl_seed, spl_test);
            std::string path = split_file_path(spl_dir, spl_ratio, spl_seed);
            write_split_file(path, split);
            std::printf("wrote %s: %zu labeled / %zu unlabeled / %zu test\n", path.c_str(),
                        split.train_labeled.size(), split.train_unlabeled.size(),
                        split.test.size());
        } else if (tr->parsed()) {
            RunConfig cfg;
            if (!tr_config.empty()) cfg = load_config_file(tr_config);
            if (tr->count("--data-dir")) cfg.data_dir = tr_data;
            if (tr->count("--out-dir")) cfg.out_dir = tr_out;
            if (tr->count("--ratio")) cfg.ratio = tr_ratio;
            if (tr->count("--test-fraction")) cfg.test_fraction = tr_testfrac;
            if (tr->count("--seed")) cfg.seed = uint64_t(tr_seed);
            if (tr->count("--epochs")) cfg.epochs = tr_epochs;
            if (tr->count("--batch-size")) cfg.batch_size = tr_bs;
            if (tr->count("--lr")) cfg.lr = tr_lr;
            if (tr->count("--weight-decay")) cfg.weight_decay = tr_wd;
            if (tr->count("--temperature")) cfg.objective.temperature = tr_temp;
            if (tr->count("--alpha")) cfg.objective.alpha = tr_alpha;
            if (tr->count("--lambda-max")) cfg.objective.lambda_max = tr_lambda;
            if (tr->count("--ramp-fraction")) cfg.objective.ramp_fraction = tr_ramp;
            if (tr->count("--decoders")) cfg.model.num_decoders = tr_decoders;
            if (tr->count("--threads")) cfg.threads = tr_threads;
            if (tr->count("--strategies")) {
                cfg.model.strategies.clear();
                std::string cur;
                for (char c : tr_strategies + ",") {
                    if (c == ',') {
                        if (!cur.empty()) cfg.model.strategies.push_back(upsample_from_name(cur));
                        cur.clear();
                    } else {
                        cur += c;
                    }
                }
            }
            if (tr_no_kan) cfg.model.use_kan = false;
            TrainResult result = train(cfg, tr_resume);
            if (result.aborted) {
                std::fprintf(stderr, "training aborted: %s\n", result.abort_message.c_str());
                return 2;
            }
            std::printf("trained %lld steps (%lld parameters); final checkpoint %s\n",
                        (long long)result.steps, (long long)result.parameter_count,
                        result.final_checkpoint.c_str());
        } else if (ev->parsed()) {
            EvaluationSummary summary = evaluate(ev_ckpt, ev_out);
            std::printf("wrote %s\n", summary.csv_path.c_str());
            std::printf("mean dice %.2f%%  jaccard %.2f%%", summary.mean_dice,
                        summary.mean_jaccard);
            if (summary.mean_hd95)
                std::printf("  hd95 %.3f  asd %.3f", *summary.mean_hd95, *summary.mean_asd);
            std::printf("\n");
        } else if (ex->parsed()) {
            ExportResult result = export_interpretability(ex_ckpt, ex_sample, ex_out, ex_threshold);
            std::printf("feature: %s\noverlay: %s\nprune report: %s\n", result.feature_pgm.c_str(),
                        result.overlay_pgm.c_str(), result.prune_report_path.c_str());
            for (const auto& p : result.activation_csvs) std::printf("activations: %s\n", p.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
