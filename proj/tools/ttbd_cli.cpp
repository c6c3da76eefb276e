#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ttbd/pipeline.hpp"
#include "ttbd/rng.hpp"
#include "ttbd/synth.hpp"

namespace fs = std::filesystem;
using namespace ttbd;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> method;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file (key=value lines)");
    cmd->add_option("--out", opts.out_dir, "output directory for artifacts");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--workers", opts.workers, "override the worker count");
    cmd->add_option("--method", opts.method, "detection method: ddp, teco or dual");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = ExperimentConfig::load(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.workers) cfg.workers = *opts.workers;
    if (opts.method) cfg.detect_method = *opts.method;
    return cfg;
}

// Stage commands re-derive the defender batch deterministically from the
// config, so detect/shapley/repair compose through the artifact files alone.
struct StageContext {
    ExperimentConfig cfg;
    Model model;
    DatasetPair data;
    TriggerSpec trigger;
    DefenderData defender;
    std::vector<int> original_preds;
};

StageContext make_stage_context(const ExperimentConfig& cfg, const std::string& out_dir,
                                bool sparse) {
    StageContext ctx;
    ctx.cfg = cfg;
    const TrainOutcome tr = ensure_checkpoint(cfg, out_dir);
    ctx.model = load_checkpoint(tr.checkpoint_path);
    ctx.data = load_config_data(cfg);
    ctx.trigger = cfg.resolve_trigger(ctx.data.test.channels(), ctx.data.test.height(),
                                      ctx.data.test.width());
    ctx.defender = make_defender_data(cfg, ctx.data.test, ctx.trigger, sparse);
    ctx.original_preds = predict(ctx.model, ctx.defender.pooled_images);
    return ctx;
}

int cmd_train(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const TrainOutcome tr = ensure_checkpoint(cfg, opts.out_dir);
    const Model model = load_checkpoint(tr.checkpoint_path);
    DatasetPair data = load_config_data(cfg);
    const TriggerSpec trigger =
        cfg.resolve_trigger(data.test.channels(), data.test.height(), data.test.width());
    const EvalResult ev = evaluate(model, {}, data.test, trigger, cfg.workers);
    std::cout << "checkpoint=" << tr.checkpoint_path << (tr.cache_hit ? " (cached)" : "") << "\n";
    std::cout << "log=" << tr.log_path << "\n";
    std::cout << "acc=" << ev.acc_percent << " asr=" << ev.asr_percent << "\n";
    return 0;
}

int cmd_poison(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    DatasetPair data = load_config_data(cfg);
    const TriggerSpec trigger =
        cfg.resolve_trigger(data.train.channels(), data.train.height(), data.train.width());
    const LabeledDataset poisoned =
        poison_training_set(data.train, trigger, cfg.poisoning_rate, derive_seed(cfg.seed, 0x9047));
    fs::create_directories(opts.out_dir);
    write_mnist_idx(poisoned, (fs::path(opts.out_dir) / "poisoned-images-idx3-ubyte").string(),
                    (fs::path(opts.out_dir) / "poisoned-labels-idx1-ubyte").string());
    std::ofstream flags((fs::path(opts.out_dir) / "poisoned-flags.txt").string());
    for (std::size_t i = 0; i < poisoned.size(); ++i) {
        if (poisoned.poison_flags[i]) flags << i << "\n";
    }
    std::cout << "poisoned " << poisoned.size() << " samples, flagged "
              << static_cast<std::size_t>(std::count(poisoned.poison_flags.begin(),
                                                     poisoned.poison_flags.end(), 1))
              << ", artifacts in " << opts.out_dir << "\n";
    return 0;
}

int cmd_detect(const CommonOpts& opts, bool sparse) {
    const ExperimentConfig cfg = resolve_config(opts);
    const StageContext ctx = make_stage_context(cfg, opts.out_dir, sparse);
    const DetectMethod method =
        sparse ? DetectMethod::Dual : parse_detect_method(cfg.detect_method);
    DetectionReport report;
    switch (method) {
        case DetectMethod::DDP:
            report = ddp_detect(ctx.model, ctx.defender.pooled_images, cfg.ddp_n_detect,
                                cfg.ddp_params(), cfg.workers);
            break;
        case DetectMethod::TeCo:
            report = teco_detect(ctx.model, ctx.defender.pooled_images, cfg.teco_n_detect,
                                 all_corruptions(), derive_seed(cfg.seed, 0x7EC0), cfg.workers);
            break;
        case DetectMethod::Dual: {
            std::vector<Tensor> batch_tensors;
            for (const auto& b : ctx.defender.batches) batch_tensors.push_back(b.images);
            report = dual_detect_sparse(ctx.model, batch_tensors, cfg.ddp_n_detect,
                                        cfg.ddp_params(), all_corruptions(),
                                        derive_seed(cfg.seed, 0x7EC0), cfg.workers);
            break;
        }
    }
    fs::create_directories(opts.out_dir);
    save_detection_report(report, (fs::path(opts.out_dir) / "detection.txt").string());
    std::cout << detection_report_to_text(report);
    return 0;
}

int cmd_shapley(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const std::string det_path = (fs::path(opts.out_dir) / "detection.txt").string();
    const DetectionReport detection = load_detection_report(det_path);
    const bool sparse = detection.scores.size() > cfg.batch_size;
    const StageContext ctx = make_stage_context(cfg, opts.out_dir, sparse);
    const Tensor& batch = ctx.defender.pooled_images;
    const std::vector<NeuronId> players = ctx.model.prunable_neurons();

    const std::size_t stride = batch.size() / batch.shape[0];
    Tensor det_images({detection.detected.size(), batch.shape[1], batch.shape[2], batch.shape[3]});
    std::vector<int> det_refs(detection.detected.size());
    for (std::size_t i = 0; i < detection.detected.size(); ++i) {
        const std::size_t s = detection.detected[i];
        std::copy(batch.data.begin() + static_cast<std::ptrdiff_t>(s * stride),
                  batch.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * stride),
                  det_images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        det_refs[i] = ctx.original_preds[s];
    }

    McShapleyParams asr_params;
    asr_params.permutations = cfg.shapley_iterations;
    asr_params.truncation_threshold = cfg.asr_truncation;
    asr_params.seed = derive_seed(cfg.seed, 0xA5A);
    asr_params.workers = cfg.workers;
    McShapleyParams acc_params = asr_params;
    acc_params.truncation_threshold = cfg.acc_truncation;
    acc_params.seed = derive_seed(cfg.seed, 0xACC);

    const ShapleyReport asr =
        estimate_neuron_shapley(ctx.model, players, det_images, det_refs, asr_params);
    const ShapleyReport acc =
        estimate_neuron_shapley(ctx.model, players, batch, ctx.original_preds, acc_params);
    const NeuronAttribution attribution = combine_attribution(asr, acc);
    save_attribution(attribution, (fs::path(opts.out_dir) / "shapley.txt").string());
    std::cout << "wrote " << (fs::path(opts.out_dir) / "shapley.txt").string() << " ("
              << attribution.players.size() << " neurons)\n";
    return 0;
}

int cmd_repair(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const DetectionReport detection =
        load_detection_report((fs::path(opts.out_dir) / "detection.txt").string());
    const NeuronAttribution attribution =
        load_attribution((fs::path(opts.out_dir) / "shapley.txt").string());
    const bool sparse = detection.scores.size() > cfg.batch_size;
    const StageContext ctx = make_stage_context(cfg, opts.out_dir, sparse);

    const RepairPlan plan = select_prune_set(attribution, cfg.repair_k, cfg.repair_m);
    RepairStop stop;
    stop.asr_value_target = cfg.asr_value_target;
    stop.max_prune = static_cast<std::size_t>(
        cfg.max_prune_fraction * static_cast<double>(ctx.model.prunable_neurons().size()));
    const RepairOutcome outcome = repair(ctx.model, plan, ctx.defender.pooled_images,
                                         detection.detected, ctx.original_preds, stop);
    save_mask(outcome.mask, "config-hash=" + cfg.training_hash(),
              (fs::path(opts.out_dir) / "mask.txt").string());
    const EvalResult after = evaluate(ctx.model, outcome.mask, ctx.data.test, ctx.trigger,
                                      cfg.workers);
    std::cout << "pruned=" << outcome.neurons_pruned << " acc=" << after.acc_percent
              << " asr=" << after.asr_percent << "\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& mask_path) {
    const ExperimentConfig cfg = resolve_config(opts);
    const TrainOutcome tr = ensure_checkpoint(cfg, opts.out_dir);
    const Model model = load_checkpoint(tr.checkpoint_path);
    DatasetPair data = load_config_data(cfg);
    const TriggerSpec trigger =
        cfg.resolve_trigger(data.test.channels(), data.test.height(), data.test.width());
    PruneMask mask;
    if (!mask_path.empty()) mask = load_mask(mask_path);
    const EvalResult ev = evaluate(model, mask, data.test, trigger, cfg.workers);
    std::cout << "acc=" << ev.acc_percent << " asr=" << ev.asr_percent
              << " pruned=" << ev.neurons_pruned << " fraction=" << ev.fraction_pruned << "\n";
    return 0;
}

int cmd_pipeline(const CommonOpts& opts, bool sparse) {
    const ExperimentConfig cfg = resolve_config(opts);
    const PipelineResult r = run_pipeline(cfg, opts.out_dir, sparse);
    std::cout << r.report_text;
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis_name,
              std::vector<double> values) {
    const ExperimentConfig cfg = resolve_config(opts);
    const SweepAxis axis = parse_sweep_axis(axis_name);
    if (values.empty()) {
        values = axis == SweepAxis::BatchSize ? std::vector<double>{50, 100, 200}
                                              : std::vector<double>{0.05, 0.10, 0.20};
    }
    const auto rows = run_sweep(cfg, axis, values, opts.out_dir);
    const std::string table = sweep_table_text(cfg, axis, rows);
    std::ofstream((fs::path(opts.out_dir) / "sweep.txt").string()) << table;
    std::cout << table;
    return 0;
}

int cmd_ablate(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const AblationResult r = run_ablate(cfg, opts.out_dir);
    std::cout << r.report_text;
    return 0;
}

int cmd_gen_data(const std::string& dir, std::size_t train_count, std::size_t test_count,
                 std::uint64_t seed) {
    write_synth_corpus(dir, train_count, test_count, seed);
    std::cout << "wrote " << train_count << " train / " << test_count << " test samples to " << dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ttbd: trains small backdoored classifiers, detects poisoned test samples "
                 "(DDP / TeCo), and repairs the model by Shapley-guided neuron pruning"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool sparse = false;
    std::string mask_path;
    std::string axis = "rate";
    std::vector<double> sweep_values;
    std::string gen_dir = "data/synth";
    std::size_t gen_train = 8000, gen_test = 2000;
    std::uint64_t gen_seed = 20240501;

    auto* train = app.add_subcommand("train", "train the poisoned model and write a checkpoint");
    add_common(train, opts);

    auto* poison = app.add_subcommand("poison", "materialize the poisoned training set");
    add_common(poison, opts);

    auto* detect = app.add_subcommand("detect", "score the defender batch and write detection.txt");
    add_common(detect, opts);
    detect->add_flag("--sparse", sparse, "aggregate batch.count batches with dual detection");

    auto* shapley = app.add_subcommand("shapley", "estimate neuron attributions from detection.txt");
    add_common(shapley, opts);

    auto* repair = app.add_subcommand("repair", "select and prune neurons, write mask.txt");
    add_common(repair, opts);

    auto* evaluate = app.add_subcommand("evaluate", "ACC/ASR of the checkpoint under a mask");
    add_common(evaluate, opts);
    evaluate->add_option("--mask", mask_path, "mask file to apply (default: none)");

    auto* pipeline = app.add_subcommand("pipeline", "detect -> shapley -> repair -> evaluate");
    add_common(pipeline, opts);
    pipeline->add_flag("--sparse", sparse, "aggregate batch.count batches with dual detection");

    auto* sweep = app.add_subcommand("sweep", "pipeline across batch sizes or batch rates");
    add_common(sweep, opts);
    sweep->add_option("--axis", axis, "batch_size or rate")->required();
    sweep->add_option("--values", sweep_values, "axis values (defaults per axis)");

    auto* ablate = app.add_subcommand("ablate", "TTBD-RAND / TTBD-ACT / TTBD-DDP comparison");
    add_common(ablate, opts);

    auto* gen = app.add_subcommand("gen-data", "write the synthetic digit corpus as IDX files");
    gen->add_option("--out", gen_dir, "target directory");
    gen->add_option("--train", gen_train, "train sample count");
    gen->add_option("--test", gen_test, "test sample count");
    gen->add_option("--seed", gen_seed, "corpus seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opts);
        if (poison->parsed()) return cmd_poison(opts);
        if (detect->parsed()) return cmd_detect(opts, sparse);
        if (shapley->parsed()) return cmd_shapley(opts);
        if (repair->parsed()) return cmd_repair(opts);
        if (evaluate->parsed()) return cmd_evaluate(opts, mask_path);
        if (pipeline->parsed()) return cmd_pipeline(opts, sparse);
        if (sweep->parsed()) return cmd_sweep(opts, axis, sweep_values);
        if (ablate->parsed()) return cmd_ablate(opts);
        if (gen->parsed()) return cmd_gen_data(gen_dir, gen_train, gen_test, gen_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
