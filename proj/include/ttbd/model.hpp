#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttbd/tensor.hpp"

namespace ttbd {

enum class LayerKind : std::uint32_t {
    Conv2D = 0,
    Dense = 1,
    ReLU = 2,
    MaxPool2D = 3,
    Flatten = 4,
};

const char* layer_kind_name(LayerKind k);

/// One layer descriptor. Only the fields relevant to `kind` are meaningful.
struct Layer {
    LayerKind kind = LayerKind::ReLU;

    // Conv2D
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;

    // Dense
    std::size_t out_units = 0;
    std::size_t in_units = 0;

    // MaxPool2D
    std::size_t window = 0;
    std::size_t pool_stride = 0;

    Tensor weights;  // Conv2D: [out_c, in_c, kh, kw]; Dense: [out, in]
    Tensor biases;   // [out_c] / [out]

    static Layer conv2d(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw,
                        std::size_t stride = 1);
    static Layer dense(std::size_t out, std::size_t in);
    static Layer relu();
    static Layer maxpool2d(std::size_t window, std::size_t stride);
    static Layer flatten();

    bool has_units() const { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }
    std::size_t unit_count() const {
        return kind == LayerKind::Conv2D ? out_channels : (kind == LayerKind::Dense ? out_units : 0);
    }
};

/// Addressable prunable unit: one conv output channel or one dense unit.
struct NeuronId {
    std::size_t layer_index = 0;
    std::size_t unit_index = 0;

    auto operator<=>(const NeuronId&) const = default;
};

std::string neuron_str(NeuronId id);

/// Per-unit binary multiplier; absent entries default to 1 (alive).
struct PruneMask {
    std::map<NeuronId, std::uint8_t> entries;

    void set(NeuronId id, std::uint8_t multiplier);
    void prune(NeuronId id) { set(id, 0); }
    std::uint8_t get(NeuronId id) const;
    std::size_t pruned_count() const;
    std::vector<NeuronId> pruned() const;
    void clear() { entries.clear(); }

    /// Entry-wise minimum: the composition of applying `a` then `b`.
    static PruneMask min(const PruneMask& a, const PruneMask& b);
};

/// Mean post-nonlinearity activation per prunable unit, for one sample.
struct ActivationRecord {
    std::vector<NeuronId> neurons;  // == model.prunable_neurons()
    std::vector<float> mean_activation;

    float value_of(NeuronId id) const;
};

struct Model {
    std::vector<Layer> layers;
    std::size_t num_classes = 0;

    /// All conv channels and dense units except those of the final Dense
    /// layer (the classifier head, which maps one-to-one onto classes).
    std::vector<NeuronId> prunable_neurons() const;
    bool is_prunable_layer(std::size_t layer_index) const;
    std::size_t classifier_layer_index() const;

    void validate_mask(const PruneMask& mask) const;
};

/// The fixed experiment architecture:
/// Conv(16,3x3)-ReLU-Pool-Conv(32,3x3)-ReLU-Pool-Flatten-Dense(128)-ReLU-Dense(classes).
Model reference_model(std::size_t num_classes, std::size_t in_channels, std::size_t in_h,
                      std::size_t in_w);

/// Kaiming-uniform fan-in initialization, seeded; biases zero.
void init_weights(Model& model, std::uint64_t seed);

/// Masked batched forward. Masked units' outputs are multiplied by 0 before
/// the next layer consumes them.
Tensor forward(const Model& model, const Tensor& batch, const PruneMask& mask = {});

/// Forward of one sample [1,C,H,W] recording per-unit mean activations
/// (taken after the ReLU that follows each prunable layer, when present).
std::pair<Tensor, ActivationRecord> forward_with_activations(const Model& model,
                                                             const Tensor& sample,
                                                             const PruneMask& mask = {});

/// Argmax per sample; ties break toward the lowest class index.
std::vector<int> predict(const Model& model, const Tensor& batch, const PruneMask& mask = {});
int argmax_row(const float* row, std::size_t n);

// -- raw layer kernels (shared by forward, the evaluator and training) -------

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

std::vector<std::size_t> layer_output_shape(const Layer& layer, std::size_t layer_index,
                                            const std::vector<std::size_t>& in_shape);
void conv2d_forward(const Layer& layer, const Tensor& in, Tensor& out);
void dense_forward(const Layer& layer, const Tensor& in, Tensor& out);
void relu_forward(const Tensor& in, Tensor& out);
void maxpool2d_forward(const Layer& layer, const Tensor& in, Tensor& out,
                       std::vector<std::uint32_t>* argmax = nullptr);
void flatten_forward(const Tensor& in, Tensor& out);

/// Multiplies per-unit planes of a [N, units, ...] tensor by 0/1 multipliers.
void apply_unit_mask(Tensor& t, const std::vector<float>& multipliers);

/// Incremental masked evaluator over a fixed (model, batch). Caches pre-mask
/// outputs of every prunable layer so that pruning a unit only recomputes the
/// network suffix from that layer on. Bit-identical to forward() at every
/// mask state. Masks grow; there is no unprune (rebuild instead).
class MaskedBatchEvaluator {
public:
    MaskedBatchEvaluator(const Model& model, const Tensor& batch);

    void reset(const PruneMask& mask = {});
    void prune(NeuronId id);
    void prune_many(const std::vector<NeuronId>& ids);

    const Tensor& logits() const { return logits_; }
    const std::vector<int>& predictions() const { return predictions_; }
    const PruneMask& mask() const { return mask_; }

private:
    void recompute_from(std::size_t prunable_ordinal);

    const Model* model_;
    const Tensor* batch_;
    PruneMask mask_;
    std::vector<std::size_t> prunable_layers_;            // layer indices, ascending
    std::vector<std::vector<float>> multipliers_;         // per prunable layer
    std::vector<Tensor> premask_cache_;                   // per prunable layer, batch-shaped
    Tensor logits_;
    std::vector<int> predictions_;
};

}  // namespace ttbd
