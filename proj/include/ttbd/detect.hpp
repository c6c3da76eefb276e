#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ttbd/corruptions.hpp"
#include "ttbd/model.hpp"
#include "ttbd/tensor.hpp"

namespace ttbd {

enum class DetectMethod { DDP, TeCo, Dual };
const char* detect_method_name(DetectMethod m);
DetectMethod parse_detect_method(const std::string& name);

struct DdpParams {
    std::size_t prune_step = 2;
    double budget_fraction = 0.15;      // of prunable neurons
    double agreement_threshold = 0.75;  // early stop when batch agreement drops below
    double shapley_keep_fraction = 0.80;  // keep bottom-l by ACC Shapley when supplied
};

/// Per-sample suspicion scores plus the ranking they induce. `detected` is
/// always the prefix of `ranking`.
struct DetectionReport {
    DetectMethod method = DetectMethod::DDP;
    std::vector<double> scores;
    std::vector<std::size_t> ranking;   // most suspicious first
    std::vector<std::size_t> detected;  // top n_detect
    std::string params_text;            // thresholds used, for the audit record

    void check_consistent() const;
};

/// Prediction-change score of one sample: prunes neurons in descending order
/// of this sample's activations (optionally restricted to the bottom-l
/// fraction by ACC Shapley), in groups, until batch agreement with the
/// original predictions drops below the threshold or the budget is spent.
/// Returns the number of changed predictions at the stopping point. The model
/// itself is never modified.
int ddp_score(const Model& model, const Tensor& batch_images, std::size_t sample_index,
              const std::vector<int>& original_predictions, const DdpParams& params,
              const std::map<NeuronId, double>* acc_shapley = nullptr);

DetectionReport ddp_detect(const Model& model, const Tensor& batch_images, std::size_t n_detect,
                           const DdpParams& params, int workers = 1,
                           const std::map<NeuronId, double>* acc_shapley = nullptr);

/// Ranks samples by ascending corruption-robustness deviation (most
/// consistent first). Default n_detect is 10.
DetectionReport teco_detect(const Model& model, const Tensor& batch_images, std::size_t n_detect,
                            const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                            int workers = 1);

/// Multi-batch mode for very low poisoning rates: pools every batch, computes
/// DDP ranks (per-batch context) and TeCo ranks per pooled sample, and fuses
/// by rank sum (smaller = more suspicious).
DetectionReport dual_detect_sparse(const Model& model, const std::vector<Tensor>& batches,
                                   std::size_t n_detect, const DdpParams& ddp_params,
                                   const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                                   int workers = 1);

std::string detection_report_to_text(const DetectionReport& r);
DetectionReport detection_report_from_text(const std::string& text);
void save_detection_report(const DetectionReport& r, const std::string& path);
DetectionReport load_detection_report(const std::string& path);

}  // namespace ttbd
