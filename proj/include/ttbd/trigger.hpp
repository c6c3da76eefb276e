#pragma once

#include <cstdint>

#include "ttbd/dataset.hpp"
#include "ttbd/tensor.hpp"

namespace ttbd {

enum class TriggerKind { Patch, Blended, Sinusoid };

const char* trigger_kind_name(TriggerKind k);
TriggerKind parse_trigger_kind(const std::string& name);

/// Analytic backdoor trigger. Patch overwrites a square region, Blended
/// alpha-blends a fixed trigger image, Sinusoid adds vertical stripes
/// clamp(x + delta*sin(2*pi*freq*col/W)).
struct TriggerSpec {
    TriggerKind kind = TriggerKind::Patch;
    int target_label = 0;

    // Patch
    std::size_t patch_row = 0;
    std::size_t patch_col = 0;
    std::size_t patch_h = 3;
    std::size_t patch_w = 3;
    float patch_value = 1.0f;

    // Blended
    Tensor blend_image;  // [C,H,W], same shape as the dataset images
    float blend_alpha = 0.1f;

    // Sinusoid
    float sin_delta = 0.08f;
    float sin_freq = 6.0f;

    static TriggerSpec patch(std::size_t row, std::size_t col, std::size_t h, std::size_t w,
                             float value, int target);
    static TriggerSpec blended(Tensor trigger_image, float alpha, int target);
    static TriggerSpec sinusoid(float delta, float freq, int target);

    void validate(std::size_t channels, std::size_t height, std::size_t width) const;
};

/// Uniform-noise trigger image for the Blended attack, seeded.
Tensor make_noise_trigger(std::size_t channels, std::size_t height, std::size_t width,
                          std::uint64_t seed);

Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec);

/// Flips round(rate*N) seeded-uniformly chosen samples (never ones already
/// labeled target_label) to the trigger + target label, setting their flags.
LabeledDataset poison_training_set(const LabeledDataset& dataset, const TriggerSpec& spec,
                                   double poisoning_rate, std::uint64_t seed);

/// The defender's test-time batch: batch_size samples drawn from the clean
/// test set, round(rate*batch_size) of them triggered. Ground-truth labels
/// and flags ride along for the evaluation harness only.
LabeledDataset make_defender_batch(const LabeledDataset& clean_test, const TriggerSpec& spec,
                                   std::size_t batch_size, double batch_poisoning_rate,
                                   std::uint64_t seed);

}  // namespace ttbd
