#include "ttbd/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ttbd/rng.hpp"

namespace ttbd {

const char* trigger_kind_name(TriggerKind k) {
    switch (k) {
        case TriggerKind::Patch: return "patch";
        case TriggerKind::Blended: return "blended";
        case TriggerKind::Sinusoid: return "sinusoid";
    }
    return "?";
}

TriggerKind parse_trigger_kind(const std::string& name) {
    if (name == "patch") return TriggerKind::Patch;
    if (name == "blended") return TriggerKind::Blended;
    if (name == "sinusoid" || name == "sig") return TriggerKind::Sinusoid;
    throw std::invalid_argument("unknown trigger kind: " + name);
}

TriggerSpec TriggerSpec::patch(std::size_t row, std::size_t col, std::size_t h, std::size_t w,
                               float value, int target) {
    TriggerSpec s;
    s.kind = TriggerKind::Patch;
    s.patch_row = row;
    s.patch_col = col;
    s.patch_h = h;
    s.patch_w = w;
    s.patch_value = value;
    s.target_label = target;
    return s;
}

TriggerSpec TriggerSpec::blended(Tensor trigger_image, float alpha, int target) {
    TriggerSpec s;
    s.kind = TriggerKind::Blended;
    s.blend_image = std::move(trigger_image);
    s.blend_alpha = alpha;
    s.target_label = target;
    return s;
}

TriggerSpec TriggerSpec::sinusoid(float delta, float freq, int target) {
    TriggerSpec s;
    s.kind = TriggerKind::Sinusoid;
    s.sin_delta = delta;
    s.sin_freq = freq;
    s.target_label = target;
    return s;
}

void TriggerSpec::validate(std::size_t channels, std::size_t height, std::size_t width) const {
    switch (kind) {
        case TriggerKind::Patch:
            if (patch_row + patch_h > height || patch_col + patch_w > width) {
                throw std::invalid_argument("patch region exceeds image bounds");
            }
            if (!(patch_value >= 0.0f && patch_value <= 1.0f)) {
                throw std::invalid_argument("patch value outside [0,1]");
            }
            break;
        case TriggerKind::Blended:
            if (blend_image.shape != std::vector<std::size_t>{channels, height, width}) {
                throw std::invalid_argument("blend trigger shape " + blend_image.shape_str() +
                                            " does not match dataset images");
            }
            if (!(blend_alpha > 0.0f && blend_alpha < 1.0f)) {
                throw std::invalid_argument("blend alpha must be in (0,1)");
            }
            break;
        case TriggerKind::Sinusoid:
            if (!(sin_delta >= 0.0f && sin_delta <= 1.0f)) {
                throw std::invalid_argument("sinusoid amplitude must be in [0,1]");
            }
            break;
    }
}

Tensor make_noise_trigger(std::size_t channels, std::size_t height, std::size_t width,
                          std::uint64_t seed) {
    Tensor t({channels, height, width});
    Rng rng(derive_seed(seed, 0xB1E4D));
    for (float& v : t.data) v = rng.next_float();
    return t;
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec) {
    if (image.rank() != 3) throw std::invalid_argument("apply_trigger expects a CxHxW image");
    const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    spec.validate(c, h, w);

    Tensor out = image;
    switch (spec.kind) {
        case TriggerKind::Patch:
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t y = spec.patch_row; y < spec.patch_row + spec.patch_h; ++y) {
                    float* row = out.ptr() + (ch * h + y) * w;
                    for (std::size_t x = spec.patch_col; x < spec.patch_col + spec.patch_w; ++x) {
                        row[x] = spec.patch_value;
                    }
                }
            }
            break;
        case TriggerKind::Blended: {
            const float a = spec.blend_alpha;
            for (std::size_t i = 0; i < out.size(); ++i) {
                out.data[i] =
                    std::clamp((1.0f - a) * image.data[i] + a * spec.blend_image.data[i], 0.0f, 1.0f);
            }
            break;
        }
        case TriggerKind::Sinusoid: {
            for (std::size_t x = 0; x < w; ++x) {
                const float delta = spec.sin_delta *
                                    std::sin(2.0f * 3.14159265358979323846f * spec.sin_freq *
                                             static_cast<float>(x) / static_cast<float>(w));
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t y = 0; y < h; ++y) {
                        float& v = out.data[(ch * h + y) * w + x];
                        v = std::clamp(v + delta, 0.0f, 1.0f);
                    }
                }
            }
            break;
        }
    }
    return out;
}

namespace {

// Seeded uniform choice of `count` indices whose label != target.
std::vector<std::size_t> pick_poison_indices(const LabeledDataset& data, int target,
                                             std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] != target) eligible.push_back(i);
    }
    if (count > eligible.size()) {
        throw std::invalid_argument("poisoning needs " + std::to_string(count) +
                                    " non-target samples, only " +
                                    std::to_string(eligible.size()) + " available");
    }
    Rng rng(derive_seed(seed, 0x9015));
    rng.shuffle(eligible);
    eligible.resize(count);
    std::sort(eligible.begin(), eligible.end());
    return eligible;
}

void poison_in_place(LabeledDataset& data, const std::vector<std::size_t>& indices,
                     const TriggerSpec& spec, bool flip_label) {
    const std::size_t stride = data.images.size() / data.images.shape[0];
    for (std::size_t idx : indices) {
        Tensor img = data.images.slice_sample(idx);
        Tensor poisoned = apply_trigger(img, spec);
        std::copy(poisoned.data.begin(), poisoned.data.end(),
                  data.images.data.begin() + static_cast<std::ptrdiff_t>(idx * stride));
        if (flip_label) data.labels[idx] = spec.target_label;
        data.poison_flags[idx] = 1;
    }
}

}  // namespace

LabeledDataset poison_training_set(const LabeledDataset& dataset, const TriggerSpec& spec,
                                   double poisoning_rate, std::uint64_t seed) {
    if (!(poisoning_rate >= 0.0 && poisoning_rate <= 1.0)) {
        throw std::invalid_argument("poisoning rate must be in [0,1], got " +
                                    std::to_string(poisoning_rate));
    }
    const std::size_t count =
        static_cast<std::size_t>(std::llround(poisoning_rate * static_cast<double>(dataset.size())));
    LabeledDataset out = dataset;
    if (count == 0) return out;
    const auto indices = pick_poison_indices(dataset, spec.target_label, count, seed);
    poison_in_place(out, indices, spec, /*flip_label=*/true);
    return out;
}

LabeledDataset make_defender_batch(const LabeledDataset& clean_test, const TriggerSpec& spec,
                                   std::size_t batch_size, double batch_poisoning_rate,
                                   std::uint64_t seed) {
    if (batch_size > clean_test.size()) {
        throw std::invalid_argument("defender batch of " + std::to_string(batch_size) +
                                    " exceeds source of " + std::to_string(clean_test.size()));
    }
    if (!(batch_poisoning_rate >= 0.0 && batch_poisoning_rate <= 1.0)) {
        throw std::invalid_argument("batch poisoning rate must be in [0,1]");
    }

    std::vector<std::size_t> order(clean_test.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0xBA7C4));
    rng.shuffle(order);
    order.resize(batch_size);

    LabeledDataset batch = clean_test.subset(order);
    const std::size_t count = static_cast<std::size_t>(
        std::llround(batch_poisoning_rate * static_cast<double>(batch_size)));
    if (count > 0) {
        const auto indices =
            pick_poison_indices(batch, spec.target_label, count, derive_seed(seed, 0xF1A6));
        // Test-time samples carry the trigger but keep their true label; the
        // flag records the injection for the evaluation harness.
        poison_in_place(batch, indices, spec, /*flip_label=*/false);
    }
    return batch;
}

}  // namespace ttbd
