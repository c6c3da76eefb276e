#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttbd/checkpoint.hpp"
#include "ttbd/config.hpp"
#include "ttbd/dataset.hpp"
#include "ttbd/detect.hpp"
#include "ttbd/repair.hpp"
#include "ttbd/shapley.hpp"

namespace ttbd {

/// Loads the configured dataset, materializing the synthetic corpus first
/// when the directory does not exist yet (mnist-idx format only).
DatasetPair load_config_data(const ExperimentConfig& cfg);

struct TrainOutcome {
    std::string checkpoint_path;
    std::string log_path;
    bool cache_hit = false;
};

/// Trains the poisoned model for the config (or reuses the cached checkpoint
/// keyed by the training hash) and writes a per-epoch loss/ACC/ASR log.
TrainOutcome ensure_checkpoint(const ExperimentConfig& cfg, const std::string& out_dir);

/// The defender's batch(es) plus harness-only ground truth.
struct DefenderData {
    std::vector<LabeledDataset> batches;  // 1 in normal mode, batch_count in sparse
    Tensor pooled_images;                 // all batch images, defense-path view
    std::vector<std::uint8_t> pooled_flags;  // harness-only
    std::vector<int> pooled_labels;          // harness-only
};

DefenderData make_defender_data(const ExperimentConfig& cfg, const LabeledDataset& clean_test,
                                const TriggerSpec& trigger, bool sparse);

struct PipelineResult {
    std::string method_row;  // "TTBD-DDP" etc.
    EvalResult before;
    EvalResult after;
    DetectionReport detection;
    NeuronAttribution attribution;
    PruneMask mask;
    std::size_t players_total = 0;
    double detection_auc = 0.0;          // harness metric vs ground truth
    std::size_t detected_true_positives = 0;
    TrainOutcome train;
    std::string report_text;
};

/// detect -> shapley -> repair -> evaluate, with artifacts persisted under
/// out_dir. `sparse` switches to the pooled multi-batch dual-detection mode.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                            bool sparse = false);

struct SweepRow {
    std::string label;
    EvalResult before;
    EvalResult after;
};

enum class SweepAxis { BatchSize, Rate };
SweepAxis parse_sweep_axis(const std::string& name);

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                const std::vector<double>& values, const std::string& out_dir);
std::string sweep_table_text(const ExperimentConfig& cfg, SweepAxis axis,
                             const std::vector<SweepRow>& rows);

enum class AblationMode { Rand, Act, Ddp };

struct AblationResult {
    EvalResult before;
    std::vector<SweepRow> rows;  // TTBD-RAND, TTBD-ACT, TTBD-DDP
    std::string report_text;
};

AblationResult run_ablate(const ExperimentConfig& cfg, const std::string& out_dir);

/// Rank-based AUC of `scores` against binary ground truth, counting ties as
/// one half. higher_is_positive selects the score direction.
double auc_score(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                 bool higher_is_positive);

}  // namespace ttbd
