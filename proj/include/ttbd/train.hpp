#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ttbd/model.hpp"
#include "ttbd/tensor.hpp"

namespace ttbd {

struct Hyperparams {
    float learning_rate = 0.05f;
    float momentum = 0.9f;
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    float mean_loss = 0.0f;
};

using EpochCallback = std::function<void(const EpochStats&, const Model&)>;

/// Re-initializes the architecture's weights from hp.seed and runs seeded
/// SGD-with-momentum on softmax cross-entropy. Deterministic given the seed;
/// single-threaded. Aborts with a diagnostic if the loss goes non-finite.
Model train(const Model& architecture, const Tensor& images, const std::vector<int>& labels,
            const Hyperparams& hp, std::vector<EpochStats>* log = nullptr,
            const EpochCallback& on_epoch = nullptr);

// -- pieces exposed for gradient checking -----------------------------------

struct LayerCache {
    Tensor output;
    std::vector<std::uint32_t> pool_argmax;  // MaxPool2D only
};

struct LayerGrads {
    Tensor weights;
    Tensor biases;
};

void layer_forward_cached(const Layer& layer, std::size_t index, const Tensor& in,
                          LayerCache& cache);

/// Backward through one layer. `grads` may be null when only the input
/// gradient is wanted; returns dL/d(input).
Tensor layer_backward(const Layer& layer, const Tensor& input, const LayerCache& cache,
                      const Tensor& grad_out, LayerGrads* grads);

/// Mean softmax cross-entropy over the batch; writes dL/dlogits if asked.
float softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad);

}  // namespace ttbd
