#pragma once

#include <cstdint>
#include <string>

#include "ttbd/dataset.hpp"
#include "ttbd/detect.hpp"
#include "ttbd/shapley.hpp"
#include "ttbd/train.hpp"
#include "ttbd/trigger.hpp"

namespace ttbd {

/// Full experiment description. Every field has a default; the defaulted
/// config runs the reference patch-trigger pipeline end to end on the
/// synthetic digit corpus. Round-trips losslessly through its key=value
/// text form.
struct ExperimentConfig {
    // dataset
    std::string dataset_path = "data/synth";
    std::string dataset_format = "mnist-idx";
    std::size_t train_limit = 8000;  // 0 = use everything
    std::size_t test_limit = 2000;
    std::size_t synth_train_count = 8000;  // used when gen-data materializes the corpus
    std::size_t synth_test_count = 2000;

    // architecture
    std::string arch = "reference";

    // trigger
    std::string trigger_kind = "patch";
    int target_label = 0;
    std::int64_t patch_row = -1;  // -1 = bottom-right corner
    std::int64_t patch_col = -1;
    std::size_t patch_h = 3;
    std::size_t patch_w = 3;
    double patch_value = 1.0;
    double blend_alpha = 0.1;
    std::uint64_t blend_seed = 7;
    double sin_delta = 0.08;
    double sin_freq = 6.0;

    // training
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t epochs = 3;
    std::size_t train_batch_size = 32;

    // poisoning
    double poisoning_rate = 0.10;

    // defender batch
    std::size_t batch_size = 100;
    double batch_rate = 0.10;
    std::size_t batch_count = 20;  // sparse mode

    // detection
    std::string detect_method = "ddp";
    std::size_t ddp_n_detect = 6;
    std::size_t teco_n_detect = 10;
    double ddp_theta = 0.75;
    std::size_t ddp_prune_step = 2;
    double ddp_budget_fraction = 0.15;
    double ddp_keep_fraction = 0.80;

    // shapley
    int shapley_iterations = 40;
    double asr_truncation = 0.2;
    double acc_truncation = 0.3;

    // repair
    std::size_t repair_k = 30;
    std::size_t repair_m = 140;
    double asr_value_target = 0.1;
    double max_prune_fraction = 0.10;

    std::uint64_t seed = 1;
    int workers = 1;

    std::string to_text() const;
    static ExperimentConfig from_text(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    /// Hash over the fields that determine the trained checkpoint, used as
    /// the checkpoint cache key.
    std::string training_hash() const;

    DdpParams ddp_params() const;
    Hyperparams hyperparams() const;

    /// Resolves the trigger against concrete image dimensions (patch corner
    /// placement, blend trigger generation).
    TriggerSpec resolve_trigger(std::size_t channels, std::size_t height,
                                std::size_t width) const;
};

}  // namespace ttbd
