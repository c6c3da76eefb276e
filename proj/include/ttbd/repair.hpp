#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttbd/dataset.hpp"
#include "ttbd/model.hpp"
#include "ttbd/shapley.hpp"
#include "ttbd/trigger.hpp"

namespace ttbd {

/// Neurons cleared for pruning: the intersection of the top-k candidates by
/// ASR Shapley and the bottom-m protected-complement by ACC absolute Shapley,
/// ordered by descending ASR Shapley.
struct RepairPlan {
    std::size_t k = 0;
    std::size_t m = 0;
    std::vector<NeuronId> prune_set;
};

RepairPlan select_prune_set(const NeuronAttribution& attribution, std::size_t k, std::size_t m);

struct RepairStop {
    double asr_value_target = 0.1;  // pseudo-label agreement on detected samples
    std::size_t max_prune = 0;      // hard cap on pruned neurons
};

struct RepairOutcome {
    PruneMask mask;
    std::size_t neurons_pruned = 0;
    double final_asr_value = 1.0;
    std::vector<double> value_trace;  // ASR proxy after each prune
};

/// Greedy removal: prunes plan neurons one at a time, re-checking the ASR
/// proxy (agreement with the original predictions on the detected samples)
/// before each step; stops once it reaches the target or the budget. The
/// model's weights are untouched — the repair is the returned mask.
RepairOutcome repair(const Model& model, const RepairPlan& plan, const Tensor& batch_images,
                     const std::vector<std::size_t>& detected,
                     const std::vector<int>& original_predictions, const RepairStop& stop);

struct EvalResult {
    double acc_percent = 0.0;
    double asr_percent = 0.0;
    std::size_t neurons_pruned = 0;
    double fraction_pruned = 0.0;
};

/// Ground-truth evaluation (harness privilege): clean accuracy plus attack
/// success rate over triggered non-target-class test samples.
EvalResult evaluate(const Model& model, const PruneMask& mask, const LabeledDataset& clean_test,
                    const TriggerSpec& trigger, int workers = 1);

/// Ablation helper: prune order by descending mean activation over the
/// detected samples instead of Shapley selection.
RepairPlan select_by_activation(const Model& model, const Tensor& batch_images,
                                const std::vector<std::size_t>& detected);

// Mask file: plain-text pruned (layer,unit) pairs with a provenance header.
std::string mask_to_text(const PruneMask& mask, const std::string& provenance);
PruneMask mask_from_text(const std::string& text);
void save_mask(const PruneMask& mask, const std::string& provenance, const std::string& path);
PruneMask load_mask(const std::string& path);

}  // namespace ttbd
