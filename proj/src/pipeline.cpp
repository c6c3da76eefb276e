#include "ttbd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ttbd/parallel.hpp"
#include "ttbd/rng.hpp"
#include "ttbd/synth.hpp"

namespace fs = std::filesystem;

namespace ttbd {

namespace {

// Fixed corpus seed: the synthetic dataset is an input, not part of the
// experiment randomness, so it stays identical across experiment seeds.
constexpr std::uint64_t kSynthCorpusSeed = 20240501;

std::string fmt(double v, int digits = 2) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace

DatasetPair load_config_data(const ExperimentConfig& cfg) {
    const DataFormat format = parse_data_format(cfg.dataset_format);
    const fs::path dir(cfg.dataset_path);
    if (format == DataFormat::MnistIdx && !fs::exists(dir / "train-images-idx3-ubyte")) {
        std::cerr << "[data] " << cfg.dataset_path
                  << " has no IDX files; generating the synthetic digit corpus ("
                  << cfg.synth_train_count << " train / " << cfg.synth_test_count << " test)\n";
        write_synth_corpus(cfg.dataset_path, cfg.synth_train_count, cfg.synth_test_count,
                           kSynthCorpusSeed);
    }
    DatasetPair pair = load_dataset_dir(cfg.dataset_path, format);
    pair.train = pair.train.truncated(cfg.train_limit);
    pair.test = pair.test.truncated(cfg.test_limit);
    return pair;
}

TrainOutcome ensure_checkpoint(const ExperimentConfig& cfg, const std::string& out_dir) {
    const std::string hash = cfg.training_hash();
    const fs::path cache_dir = fs::path(out_dir) / "cache";
    fs::create_directories(cache_dir);
    TrainOutcome out;
    out.checkpoint_path = (cache_dir / ("ckpt-" + hash + ".ttbd")).string();
    out.log_path = (cache_dir / ("train-" + hash + ".log")).string();
    if (fs::exists(out.checkpoint_path)) {
        out.cache_hit = true;
        return out;
    }

    DatasetPair data = load_config_data(cfg);
    const TriggerSpec trigger =
        cfg.resolve_trigger(data.train.channels(), data.train.height(), data.train.width());
    const LabeledDataset poisoned =
        poison_training_set(data.train, trigger, cfg.poisoning_rate, derive_seed(cfg.seed, 0x9047));

    if (cfg.arch != "reference") {
        throw std::runtime_error("unknown architecture id: " + cfg.arch);
    }
    const Model arch = reference_model(10, poisoned.channels(), poisoned.height(),
                                       poisoned.width());

    std::ostringstream log;
    log << "# ttbd training log v1\n";
    log << "config-hash=" << hash << "\n";
    log << "poisoned=" << poisoned.size() << " flagged="
        << std::count(poisoned.poison_flags.begin(), poisoned.poison_flags.end(), 1) << "\n";
    log << "# epoch loss acc asr\n";

    const auto on_epoch = [&](const EpochStats& stats, const Model& m) {
        const EvalResult ev = evaluate(m, {}, data.test, trigger, cfg.workers);
        log << stats.epoch << " " << fmt(stats.mean_loss, 6) << " " << fmt(ev.acc_percent) << " "
            << fmt(ev.asr_percent) << "\n";
        std::cerr << "[train] epoch " << stats.epoch << " loss " << fmt(stats.mean_loss, 4)
                  << " acc " << fmt(ev.acc_percent) << " asr " << fmt(ev.asr_percent) << "\n";
    };

    const Model trained =
        train(arch, poisoned.images, poisoned.labels, cfg.hyperparams(), nullptr, on_epoch);
    save_checkpoint(trained, out.checkpoint_path);
    write_text_file(out.log_path, log.str());
    return out;
}

DefenderData make_defender_data(const ExperimentConfig& cfg, const LabeledDataset& clean_test,
                                const TriggerSpec& trigger, bool sparse) {
    DefenderData out;
    if (!sparse) {
        out.batches.push_back(make_defender_batch(clean_test, trigger, cfg.batch_size,
                                                  cfg.batch_rate, derive_seed(cfg.seed, 0xD3F)));
    } else {
        const std::size_t nb = cfg.batch_count;
        const std::size_t need = nb * cfg.batch_size;
        if (need > clean_test.size()) {
            throw std::runtime_error("sparse mode needs " + std::to_string(need) +
                                     " test samples, have " + std::to_string(clean_test.size()));
        }
        // Disjoint batches; the overall poison budget lands on a seeded half
        // of them so the rest stay totally clean.
        std::vector<std::size_t> order(clean_test.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, 0x5BA7));
        rng.shuffle(order);

        const std::size_t total_poison = static_cast<std::size_t>(std::llround(
            cfg.batch_rate * static_cast<double>(cfg.batch_size) * static_cast<double>(nb)));
        std::vector<std::size_t> batch_ids(nb);
        std::iota(batch_ids.begin(), batch_ids.end(), 0);
        Rng sel(derive_seed(cfg.seed, 0x5E1));
        sel.shuffle(batch_ids);
        const std::size_t carriers = total_poison == 0 ? 0 : std::max<std::size_t>(1, nb / 2);
        std::vector<std::size_t> quota(nb, 0);
        for (std::size_t i = 0; i < total_poison; ++i) quota[batch_ids[i % carriers]] += 1;

        for (std::size_t b = 0; b < nb; ++b) {
            std::vector<std::size_t> slice(order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                                           order.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg.batch_size));
            const LabeledDataset source = clean_test.subset(slice);
            const double rate =
                static_cast<double>(quota[b]) / static_cast<double>(cfg.batch_size);
            out.batches.push_back(make_defender_batch(source, trigger, cfg.batch_size, rate,
                                                      derive_seed(cfg.seed, 0xD3F, b)));
        }
    }

    std::size_t total = 0;
    for (const auto& b : out.batches) total += b.size();
    std::vector<std::size_t> shape = out.batches[0].images.shape;
    shape[0] = total;
    out.pooled_images = Tensor(shape);
    std::size_t off = 0;
    for (const auto& b : out.batches) {
        std::copy(b.images.data.begin(), b.images.data.end(),
                  out.pooled_images.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += b.images.size();
        out.pooled_flags.insert(out.pooled_flags.end(), b.poison_flags.begin(),
                                b.poison_flags.end());
        out.pooled_labels.insert(out.pooled_labels.end(), b.labels.begin(), b.labels.end());
    }
    return out;
}

double auc_score(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                 bool higher_is_positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });

    // average ranks over ties
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double pos_rank_sum = 0.0;
    std::size_t npos = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (truth[k]) {
            pos_rank_sum += rank[k];
            ++npos;
        }
    }
    const std::size_t nneg = n - npos;
    if (npos == 0 || nneg == 0) return 0.5;
    const double u = pos_rank_sum - static_cast<double>(npos) * (npos + 1) / 2.0;
    double auc = u / (static_cast<double>(npos) * static_cast<double>(nneg));
    if (!higher_is_positive) auc = 1.0 - auc;
    return auc;
}

namespace {

std::string method_row_name(DetectMethod m, bool sparse) {
    if (sparse) return "TTBD-SPARSE";
    switch (m) {
        case DetectMethod::DDP: return "TTBD-DDP";
        case DetectMethod::TeCo: return "TTBD-TeCo";
        case DetectMethod::Dual: return "TTBD-Dual";
    }
    return "TTBD";
}

std::string render_report(const ExperimentConfig& cfg, const std::string& row_name,
                          const EvalResult& before, const EvalResult& after,
                          std::size_t players_total) {
    std::ostringstream os;
    os << "# ttbd pipeline report v1\n";
    os << "config-hash=" << cfg.training_hash() << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "\n";
    os << "row          ACC      ASR      pruned  fraction\n";
    os << "Before       " << fmt(before.acc_percent) << "    " << fmt(before.asr_percent)
       << "     0       0.000\n";
    os << row_name << std::string(row_name.size() < 13 ? 13 - row_name.size() : 1, ' ')
       << fmt(after.acc_percent) << "    " << fmt(after.asr_percent) << "     "
       << after.neurons_pruned << "      " << fmt(after.fraction_pruned, 3) << "\n";
    os << "\nprunable-neurons=" << players_total << "\n";
    return os.str();
}

nlohmann::ordered_json eval_to_json(const EvalResult& e) {
    return {{"acc_percent", e.acc_percent},
            {"asr_percent", e.asr_percent},
            {"neurons_pruned", e.neurons_pruned},
            {"fraction_pruned", e.fraction_pruned}};
}

}  // namespace

static PipelineResult run_pipeline_stages(const ExperimentConfig& cfg, const std::string& out_dir,
                                          bool sparse, const char*& stage);

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir, bool sparse) {
    const char* stage = "setup";
    try {
        return run_pipeline_stages(cfg, out_dir, sparse, stage);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(stage) + " stage failed: " + e.what());
    }
}

static PipelineResult run_pipeline_stages(const ExperimentConfig& cfg, const std::string& out_dir,
                                          bool sparse, const char*& stage) {
    fs::create_directories(out_dir);
    const DetectMethod method = sparse ? DetectMethod::Dual : parse_detect_method(cfg.detect_method);

    PipelineResult result;
    result.method_row = method_row_name(method, sparse);

    stage = "train";
    result.train = ensure_checkpoint(cfg, out_dir);
    const Model model = load_checkpoint(result.train.checkpoint_path);
    const std::vector<NeuronId> players = model.prunable_neurons();
    result.players_total = players.size();

    DatasetPair data = load_config_data(cfg);
    const TriggerSpec trigger =
        cfg.resolve_trigger(data.test.channels(), data.test.height(), data.test.width());

    // The defense path below only ever touches pooled_images / per-batch
    // images; labels and flags stay harness-side.
    const DefenderData defender = make_defender_data(cfg, data.test, trigger, sparse);
    const Tensor& batch_images = defender.pooled_images;

    stage = "detect";
    std::cerr << "[detect] method=" << detect_method_name(method) << " samples="
              << batch_images.shape[0] << "\n";
    switch (method) {
        case DetectMethod::DDP:
            result.detection = ddp_detect(model, batch_images, cfg.ddp_n_detect, cfg.ddp_params(),
                                          cfg.workers);
            break;
        case DetectMethod::TeCo:
            result.detection = teco_detect(model, batch_images, cfg.teco_n_detect,
                                           all_corruptions(), derive_seed(cfg.seed, 0x7EC0),
                                           cfg.workers);
            break;
        case DetectMethod::Dual: {
            std::vector<Tensor> batch_tensors;
            for (const auto& b : defender.batches) batch_tensors.push_back(b.images);
            result.detection =
                dual_detect_sparse(model, batch_tensors, cfg.ddp_n_detect, cfg.ddp_params(),
                                   all_corruptions(), derive_seed(cfg.seed, 0x7EC0), cfg.workers);
            break;
        }
    }
    result.detection.check_consistent();
    // DDP scores rise with suspicion; CRC and rank-sum fall.
    const bool higher_is_suspicious = method == DetectMethod::DDP;
    result.detection_auc =
        auc_score(result.detection.scores, defender.pooled_flags, higher_is_suspicious);
    for (std::size_t s : result.detection.detected) {
        if (defender.pooled_flags[s]) ++result.detected_true_positives;
    }
    save_detection_report(result.detection, (fs::path(out_dir) / "detection.txt").string());
    if (method != DetectMethod::DDP) {
        write_text_file((fs::path(out_dir) / "corruptions.cfg").string(), severity_table_text());
    }

    stage = "shapley";
    const std::vector<int> original_preds = predict(model, batch_images);
    Tensor detected_images({result.detection.detected.size(), batch_images.shape[1],
                            batch_images.shape[2], batch_images.shape[3]});
    std::vector<int> detected_refs(result.detection.detected.size());
    const std::size_t stride = batch_images.size() / batch_images.shape[0];
    for (std::size_t i = 0; i < result.detection.detected.size(); ++i) {
        const std::size_t s = result.detection.detected[i];
        std::copy(batch_images.data.begin() + static_cast<std::ptrdiff_t>(s * stride),
                  batch_images.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * stride),
                  detected_images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        detected_refs[i] = original_preds[s];
    }

    // The ACC value function always sees one batch worth of samples; in
    // sparse mode that is a seeded subsample of the pool.
    Tensor acc_images;
    std::vector<int> acc_refs;
    if (batch_images.shape[0] <= cfg.batch_size) {
        acc_images = batch_images;
        acc_refs = original_preds;
    } else {
        std::vector<std::size_t> idx(batch_images.shape[0]);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(derive_seed(cfg.seed, 0xACC5));
        rng.shuffle(idx);
        idx.resize(cfg.batch_size);
        std::sort(idx.begin(), idx.end());
        acc_images = Tensor({idx.size(), batch_images.shape[1], batch_images.shape[2],
                             batch_images.shape[3]});
        acc_refs.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy(batch_images.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * stride),
                      batch_images.data.begin() + static_cast<std::ptrdiff_t>((idx[i] + 1) * stride),
                      acc_images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
            acc_refs[i] = original_preds[idx[i]];
        }
    }

    McShapleyParams asr_params;
    asr_params.permutations = cfg.shapley_iterations;
    asr_params.truncation_threshold = cfg.asr_truncation;
    asr_params.seed = derive_seed(cfg.seed, 0xA5A);
    asr_params.workers = cfg.workers;
    McShapleyParams acc_params = asr_params;
    acc_params.truncation_threshold = cfg.acc_truncation;
    acc_params.seed = derive_seed(cfg.seed, 0xACC);

    std::cerr << "[shapley] asr walk over " << detected_images.shape[0] << " detected samples, T="
              << asr_params.permutations << "\n";
    const ShapleyReport asr_report =
        estimate_neuron_shapley(model, players, detected_images, detected_refs, asr_params);
    std::cerr << "[shapley] acc walk over " << acc_images.shape[0] << " batch samples, T="
              << acc_params.permutations << "\n";
    const ShapleyReport acc_report =
        estimate_neuron_shapley(model, players, acc_images, acc_refs, acc_params);
    result.attribution = combine_attribution(asr_report, acc_report);
    save_attribution(result.attribution, (fs::path(out_dir) / "shapley.txt").string());

    stage = "repair";
    const RepairPlan plan = select_prune_set(result.attribution, cfg.repair_k, cfg.repair_m);
    RepairStop stop;
    stop.asr_value_target = cfg.asr_value_target;
    stop.max_prune = static_cast<std::size_t>(cfg.max_prune_fraction *
                                              static_cast<double>(players.size()));
    const RepairOutcome outcome = repair(model, plan, batch_images, result.detection.detected,
                                         original_preds, stop);
    result.mask = outcome.mask;
    std::cerr << "[repair] pruned " << outcome.neurons_pruned << " of " << players.size()
              << " neurons, asr-proxy " << fmt(outcome.final_asr_value, 3) << "\n";
    {
        std::ostringstream prov;
        prov << "config-hash=" << cfg.training_hash() << " seed=" << cfg.seed
             << " detection=detection.txt shapley=shapley.txt";
        save_mask(result.mask, prov.str(), (fs::path(out_dir) / "mask.txt").string());
    }

    stage = "evaluate";
    result.before = evaluate(model, {}, data.test, trigger, cfg.workers);
    result.after = evaluate(model, result.mask, data.test, trigger, cfg.workers);

    result.report_text =
        render_report(cfg, result.method_row, result.before, result.after, players.size());
    write_text_file((fs::path(out_dir) / "report.txt").string(), result.report_text);
    cfg.save((fs::path(out_dir) / "config.resolved").string());

    nlohmann::ordered_json j;
    j["config_hash"] = cfg.training_hash();
    j["seed"] = cfg.seed;
    j["method"] = result.method_row;
    j["before"] = eval_to_json(result.before);
    j["after"] = eval_to_json(result.after);
    j["detection"] = {{"method", detect_method_name(result.detection.method)},
                      {"params", result.detection.params_text},
                      {"auc", result.detection_auc},
                      {"detected", result.detection.detected},
                      {"true_positives", result.detected_true_positives}};
    j["repair"] = {{"neurons_pruned", outcome.neurons_pruned},
                   {"final_asr_value", outcome.final_asr_value},
                   {"players_total", players.size()}};
    j["checkpoint"] = result.train.checkpoint_path;
    j["config"] = cfg.to_text();
    write_text_file((fs::path(out_dir) / "report.json").string(), j.dump(2) + "\n");

    return result;
}

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "batch_size" || name == "batch-size") return SweepAxis::BatchSize;
    if (name == "rate") return SweepAxis::Rate;
    throw std::invalid_argument("unknown sweep axis: " + name + " (want batch_size or rate)");
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values, const std::string& out_dir) {
    std::vector<SweepRow> rows;
    for (double v : values) {
        ExperimentConfig c = cfg;
        std::string label;
        if (axis == SweepAxis::BatchSize) {
            c.batch_size = static_cast<std::size_t>(v);
            label = "TTBD-" + std::to_string(c.batch_size);
        } else {
            c.batch_rate = v;
            label = "TTBD-" + fmt(100.0 * v, 0) + "%";
        }
        const std::string sub = (fs::path(out_dir) / ("sweep-" + label)).string();
        const PipelineResult r = run_pipeline(c, sub);
        rows.push_back({label, r.before, r.after});
    }
    return rows;
}

std::string sweep_table_text(const ExperimentConfig& cfg, SweepAxis axis,
                             const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "# ttbd sweep report v1\n";
    os << "config-hash=" << cfg.training_hash() << "\n";
    os << "axis=" << (axis == SweepAxis::BatchSize ? "batch_size" : "rate") << "\n\n";
    os << "row          ACC      ASR      pruned\n";
    if (!rows.empty()) {
        os << "Before       " << fmt(rows[0].before.acc_percent) << "    "
           << fmt(rows[0].before.asr_percent) << "     0\n";
    }
    for (const SweepRow& r : rows) {
        os << r.label << std::string(r.label.size() < 13 ? 13 - r.label.size() : 1, ' ')
           << fmt(r.after.acc_percent) << "    " << fmt(r.after.asr_percent) << "     "
           << r.after.neurons_pruned << "\n";
    }
    return os.str();
}

AblationResult run_ablate(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    AblationResult result;

    const TrainOutcome tr = ensure_checkpoint(cfg, out_dir);
    const Model model = load_checkpoint(tr.checkpoint_path);
    const std::vector<NeuronId> players = model.prunable_neurons();
    DatasetPair data = load_config_data(cfg);
    const TriggerSpec trigger =
        cfg.resolve_trigger(data.test.channels(), data.test.height(), data.test.width());
    const DefenderData defender = make_defender_data(cfg, data.test, trigger, /*sparse=*/false);
    const Tensor& batch_images = defender.pooled_images;
    const std::vector<int> original_preds = predict(model, batch_images);

    result.before = evaluate(model, {}, data.test, trigger, cfg.workers);

    RepairStop stop;
    stop.asr_value_target = cfg.asr_value_target;
    stop.max_prune =
        static_cast<std::size_t>(cfg.max_prune_fraction * static_cast<double>(players.size()));

    const DetectionReport ddp_report =
        ddp_detect(model, batch_images, cfg.ddp_n_detect, cfg.ddp_params(), cfg.workers);

    auto shapley_repair = [&](const std::vector<std::size_t>& detected) {
        Tensor det_images({detected.size(), batch_images.shape[1], batch_images.shape[2],
                           batch_images.shape[3]});
        std::vector<int> det_refs(detected.size());
        const std::size_t stride = batch_images.size() / batch_images.shape[0];
        for (std::size_t i = 0; i < detected.size(); ++i) {
            std::copy(
                batch_images.data.begin() + static_cast<std::ptrdiff_t>(detected[i] * stride),
                batch_images.data.begin() + static_cast<std::ptrdiff_t>((detected[i] + 1) * stride),
                det_images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
            det_refs[i] = original_preds[detected[i]];
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
            estimate_neuron_shapley(model, players, det_images, det_refs, asr_params);
        const ShapleyReport acc =
            estimate_neuron_shapley(model, players, batch_images, original_preds, acc_params);
        const NeuronAttribution attribution = combine_attribution(asr, acc);
        const RepairPlan plan = select_prune_set(attribution, cfg.repair_k, cfg.repair_m);
        return repair(model, plan, batch_images, detected, original_preds, stop);
    };

    // TTBD-RAND: seeded uniform sample stands in for the detected set.
    {
        std::vector<std::size_t> idx(batch_images.shape[0]);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(derive_seed(cfg.seed, 0x4A2D));
        rng.shuffle(idx);
        idx.resize(std::min<std::size_t>(cfg.ddp_n_detect, idx.size()));
        std::sort(idx.begin(), idx.end());
        const RepairOutcome o = shapley_repair(idx);
        result.rows.push_back(
            {"TTBD-RAND", result.before, evaluate(model, o.mask, data.test, trigger, cfg.workers)});
    }

    // TTBD-ACT: DDP detection, activation-ranked pruning instead of Shapley.
    {
        const RepairPlan plan = select_by_activation(model, batch_images, ddp_report.detected);
        const RepairOutcome o =
            repair(model, plan, batch_images, ddp_report.detected, original_preds, stop);
        result.rows.push_back(
            {"TTBD-ACT", result.before, evaluate(model, o.mask, data.test, trigger, cfg.workers)});
    }

    // TTBD-DDP: the full method.
    {
        const RepairOutcome o = shapley_repair(ddp_report.detected);
        result.rows.push_back(
            {"TTBD-DDP", result.before, evaluate(model, o.mask, data.test, trigger, cfg.workers)});
    }

    std::ostringstream os;
    os << "# ttbd ablation report v1\n";
    os << "config-hash=" << cfg.training_hash() << "\n\n";
    os << "row          ACC      ASR      pruned\n";
    os << "Before       " << fmt(result.before.acc_percent) << "    "
       << fmt(result.before.asr_percent) << "     0\n";
    for (const SweepRow& r : result.rows) {
        os << r.label << std::string(r.label.size() < 13 ? 13 - r.label.size() : 1, ' ')
           << fmt(r.after.acc_percent) << "    " << fmt(r.after.asr_percent) << "     "
           << r.after.neurons_pruned << "\n";
    }
    result.report_text = os.str();
    write_text_file((fs::path(out_dir) / "ablation.txt").string(), result.report_text);
    return result;
}

}  // namespace ttbd
