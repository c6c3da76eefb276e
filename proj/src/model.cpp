#include "ttbd/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ttbd/rng.hpp"

namespace ttbd {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::Dense: return "Dense";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool2D: return "MaxPool2D";
        case LayerKind::Flatten: return "Flatten";
    }
    return "?";
}

std::string neuron_str(NeuronId id) {
    return "(" + std::to_string(id.layer_index) + "," + std::to_string(id.unit_index) + ")";
}

Layer Layer::conv2d(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw,
                    std::size_t stride) {
    Layer l;
    l.kind = LayerKind::Conv2D;
    l.out_channels = out_c;
    l.in_channels = in_c;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.stride = stride;
    l.weights = Tensor({out_c, in_c, kh, kw});
    l.biases = Tensor({out_c});
    return l;
}

Layer Layer::dense(std::size_t out, std::size_t in) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.out_units = out;
    l.in_units = in;
    l.weights = Tensor({out, in});
    l.biases = Tensor({out});
    return l;
}

Layer Layer::relu() {
    Layer l;
    l.kind = LayerKind::ReLU;
    return l;
}

Layer Layer::maxpool2d(std::size_t window, std::size_t stride) {
    Layer l;
    l.kind = LayerKind::MaxPool2D;
    l.window = window;
    l.pool_stride = stride;
    return l;
}

Layer Layer::flatten() {
    Layer l;
    l.kind = LayerKind::Flatten;
    return l;
}

void PruneMask::set(NeuronId id, std::uint8_t multiplier) {
    if (multiplier > 1) throw std::invalid_argument("PruneMask multiplier must be 0 or 1");
    entries[id] = multiplier;
}

std::uint8_t PruneMask::get(NeuronId id) const {
    auto it = entries.find(id);
    return it == entries.end() ? 1 : it->second;
}

std::size_t PruneMask::pruned_count() const {
    std::size_t n = 0;
    for (const auto& [id, m] : entries) {
        if (m == 0) ++n;
    }
    return n;
}

std::vector<NeuronId> PruneMask::pruned() const {
    std::vector<NeuronId> out;
    for (const auto& [id, m] : entries) {
        if (m == 0) out.push_back(id);
    }
    return out;
}

PruneMask PruneMask::min(const PruneMask& a, const PruneMask& b) {
    PruneMask out = a;
    for (const auto& [id, m] : b.entries) {
        auto it = out.entries.find(id);
        if (it == out.entries.end()) {
            out.entries[id] = m;
        } else {
            it->second = std::min(it->second, m);
        }
    }
    return out;
}

float ActivationRecord::value_of(NeuronId id) const {
    for (std::size_t i = 0; i < neurons.size(); ++i) {
        if (neurons[i] == id) return mean_activation[i];
    }
    throw std::out_of_range("ActivationRecord has no entry for neuron " + neuron_str(id));
}

std::size_t Model::classifier_layer_index() const {
    for (std::size_t i = layers.size(); i-- > 0;) {
        if (layers[i].kind == LayerKind::Dense) return i;
    }
    return layers.size();
}

bool Model::is_prunable_layer(std::size_t layer_index) const {
    if (layer_index >= layers.size()) return false;
    if (!layers[layer_index].has_units()) return false;
    // The classifier head maps one-to-one onto classes; pruning it would
    // delete classes outright, so it is not a prunable unit.
    return layer_index != classifier_layer_index();
}

std::vector<NeuronId> Model::prunable_neurons() const {
    std::vector<NeuronId> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!is_prunable_layer(i)) continue;
        for (std::size_t u = 0; u < layers[i].unit_count(); ++u) out.push_back({i, u});
    }
    return out;
}

void Model::validate_mask(const PruneMask& mask) const {
    for (const auto& [id, m] : mask.entries) {
        (void)m;
        if (!is_prunable_layer(id.layer_index)) {
            throw std::invalid_argument("mask refers to non-prunable layer " +
                                        std::to_string(id.layer_index));
        }
        if (id.unit_index >= layers[id.layer_index].unit_count()) {
            throw std::invalid_argument("mask unit " + neuron_str(id) + " out of range (layer has " +
                                        std::to_string(layers[id.layer_index].unit_count()) +
                                        " units)");
        }
    }
}

Model reference_model(std::size_t num_classes, std::size_t in_channels, std::size_t in_h,
                      std::size_t in_w) {
    (void)in_h;
    (void)in_w;
    Model m;
    m.num_classes = num_classes;
    const std::size_t h1 = (in_h - 3) + 1;       // conv1 valid
    const std::size_t p1 = (h1 - 2) / 2 + 1;     // pool 2/2
    const std::size_t w1 = (in_w - 3) + 1;
    const std::size_t q1 = (w1 - 2) / 2 + 1;
    const std::size_t h2 = (p1 - 3) + 1;
    const std::size_t p2 = (h2 - 2) / 2 + 1;
    const std::size_t w2 = (q1 - 3) + 1;
    const std::size_t q2 = (w2 - 2) / 2 + 1;
    m.layers.push_back(Layer::conv2d(16, in_channels, 3, 3));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::maxpool2d(2, 2));
    m.layers.push_back(Layer::conv2d(32, 16, 3, 3));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::maxpool2d(2, 2));
    m.layers.push_back(Layer::flatten());
    m.layers.push_back(Layer::dense(128, 32 * p2 * q2));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(num_classes, 128));
    return m;
}

void init_weights(Model& model, std::uint64_t seed) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        Layer& l = model.layers[i];
        if (!l.has_units()) continue;
        const std::size_t fan_in =
            l.kind == LayerKind::Conv2D ? l.in_channels * l.kernel_h * l.kernel_w : l.in_units;
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
        Rng rng(derive_seed(seed, i));
        for (float& w : l.weights.data) w = rng.next_float(-bound, bound);
        for (float& b : l.biases.data) b = 0.0f;
    }
}

// ---------------------------------------------------------------------------
// layer kernels
// ---------------------------------------------------------------------------

static ShapeError layer_error(std::size_t index, const Layer& layer, const std::string& detail) {
    return ShapeError("layer " + std::to_string(index) + " (" + layer_kind_name(layer.kind) +
                      "): " + detail);
}

std::vector<std::size_t> layer_output_shape(const Layer& layer, std::size_t layer_index,
                                            const std::vector<std::size_t>& in) {
    switch (layer.kind) {
        case LayerKind::Conv2D: {
            if (in.size() != 4) throw layer_error(layer_index, layer, "expects a NxCxHxW input");
            if (in[1] != layer.in_channels) {
                throw layer_error(layer_index, layer,
                                  "input has " + std::to_string(in[1]) + " channels, expected " +
                                      std::to_string(layer.in_channels));
            }
            if (in[2] < layer.kernel_h || in[3] < layer.kernel_w) {
                throw layer_error(layer_index, layer, "input smaller than kernel");
            }
            const std::size_t oh = (in[2] - layer.kernel_h) / layer.stride + 1;
            const std::size_t ow = (in[3] - layer.kernel_w) / layer.stride + 1;
            return {in[0], layer.out_channels, oh, ow};
        }
        case LayerKind::Dense: {
            if (in.size() != 2) throw layer_error(layer_index, layer, "expects a NxF input");
            if (in[1] != layer.in_units) {
                throw layer_error(layer_index, layer,
                                  "input has " + std::to_string(in[1]) + " features, expected " +
                                      std::to_string(layer.in_units));
            }
            return {in[0], layer.out_units};
        }
        case LayerKind::ReLU:
            return in;
        case LayerKind::MaxPool2D: {
            if (in.size() != 4) throw layer_error(layer_index, layer, "expects a NxCxHxW input");
            if (in[2] < layer.window || in[3] < layer.window) {
                throw layer_error(layer_index, layer, "input smaller than pooling window");
            }
            const std::size_t oh = (in[2] - layer.window) / layer.pool_stride + 1;
            const std::size_t ow = (in[3] - layer.window) / layer.pool_stride + 1;
            return {in[0], in[1], oh, ow};
        }
        case LayerKind::Flatten: {
            if (in.size() < 2) throw layer_error(layer_index, layer, "expects a batched input");
            std::size_t f = 1;
            for (std::size_t i = 1; i < in.size(); ++i) f *= in[i];
            return {in[0], f};
        }
    }
    throw layer_error(layer_index, layer, "unknown layer kind");
}

void conv2d_forward(const Layer& layer, const Tensor& in, Tensor& out) {
    const std::size_t n_batch = in.shape[0], ic = layer.in_channels;
    const std::size_t h = in.shape[2], w = in.shape[3];
    const std::size_t oc = layer.out_channels, kh = layer.kernel_h, kw = layer.kernel_w;
    const std::size_t s = layer.stride;
    const std::size_t oh = out.shape[2], ow = out.shape[3];

    const float* wts = layer.weights.ptr();
    const float* bias = layer.biases.ptr();
    const float* inp = in.ptr();
    float* outp = out.ptr();

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t o = 0; o < oc; ++o) {
            float* plane = outp + (n * oc + o) * oh * ow;
            std::fill(plane, plane + oh * ow, bias[o]);
            for (std::size_t c = 0; c < ic; ++c) {
                const float* src_plane = inp + (n * ic + c) * h * w;
                const float* wrow = wts + ((o * ic + c) * kh) * kw;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const float wv = wrow[ky * kw + kx];
                        for (std::size_t y = 0; y < oh; ++y) {
                            const float* src = src_plane + (y * s + ky) * w + kx;
                            float* dst = plane + y * ow;
                            if (s == 1) {
                                for (std::size_t x = 0; x < ow; ++x) dst[x] += wv * src[x];
                            } else {
                                for (std::size_t x = 0; x < ow; ++x) dst[x] += wv * src[x * s];
                            }
                        }
                    }
                }
            }
        }
    }
}

void dense_forward(const Layer& layer, const Tensor& in, Tensor& out) {
    const std::size_t n_batch = in.shape[0];
    const std::size_t ni = layer.in_units, no = layer.out_units;
    const float* wts = layer.weights.ptr();
    const float* bias = layer.biases.ptr();
    for (std::size_t n = 0; n < n_batch; ++n) {
        const float* x = in.ptr() + n * ni;
        float* y = out.ptr() + n * no;
        for (std::size_t o = 0; o < no; ++o) {
            const float* wrow = wts + o * ni;
            float acc = bias[o];
            for (std::size_t i = 0; i < ni; ++i) acc += wrow[i] * x[i];
            y[o] = acc;
        }
    }
}

void relu_forward(const Tensor& in, Tensor& out) {
    for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] > 0.0f ? in.data[i] : 0.0f;
}

void maxpool2d_forward(const Layer& layer, const Tensor& in, Tensor& out,
                       std::vector<std::uint32_t>* argmax) {
    const std::size_t n_batch = in.shape[0], ch = in.shape[1];
    const std::size_t h = in.shape[2], w = in.shape[3];
    const std::size_t oh = out.shape[2], ow = out.shape[3];
    const std::size_t win = layer.window, s = layer.pool_stride;
    if (argmax) argmax->assign(out.size(), 0);

    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t c = 0; c < ch; ++c) {
            const float* src = in.ptr() + (n * ch + c) * h * w;
            float* dst = out.ptr() + (n * ch + c) * oh * ow;
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    float best = src[(y * s) * w + (x * s)];
                    std::uint32_t best_idx = static_cast<std::uint32_t>((y * s) * w + (x * s));
                    for (std::size_t ky = 0; ky < win; ++ky) {
                        for (std::size_t kx = 0; kx < win; ++kx) {
                            const std::size_t idx = (y * s + ky) * w + (x * s + kx);
                            if (src[idx] > best) {
                                best = src[idx];
                                best_idx = static_cast<std::uint32_t>(idx);
                            }
                        }
                    }
                    dst[y * ow + x] = best;
                    if (argmax) (*argmax)[(n * ch + c) * oh * ow + y * ow + x] = best_idx;
                }
            }
        }
    }
}

void flatten_forward(const Tensor& in, Tensor& out) {
    out.data = in.data;
}

void apply_unit_mask(Tensor& t, const std::vector<float>& multipliers) {
    const std::size_t n_batch = t.shape[0];
    const std::size_t units = t.shape[1];
    const std::size_t plane = t.size() / (n_batch * units);
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t u = 0; u < units; ++u) {
            const float m = multipliers[u];
            if (m == 1.0f) continue;
            float* p = t.ptr() + (n * units + u) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] *= m;
        }
    }
}

// ---------------------------------------------------------------------------
// forward paths
// ---------------------------------------------------------------------------

namespace {

// Per-prunable-layer multiplier vectors for one mask.
std::vector<std::vector<float>> build_multipliers(const Model& model, const PruneMask& mask) {
    std::vector<std::vector<float>> mult(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.is_prunable_layer(i)) mult[i].assign(model.layers[i].unit_count(), 1.0f);
    }
    for (const auto& [id, m] : mask.entries) {
        mult[id.layer_index][id.unit_index] = static_cast<float>(m);
    }
    return mult;
}

Tensor run_layer(const Model& model, std::size_t i, const Tensor& in) {
    const Layer& layer = model.layers[i];
    Tensor out(layer_output_shape(layer, i, in.shape));
    switch (layer.kind) {
        case LayerKind::Conv2D: conv2d_forward(layer, in, out); break;
        case LayerKind::Dense: dense_forward(layer, in, out); break;
        case LayerKind::ReLU: relu_forward(in, out); break;
        case LayerKind::MaxPool2D: maxpool2d_forward(layer, in, out); break;
        case LayerKind::Flatten: flatten_forward(in, out); break;
    }
    return out;
}

}  // namespace

Tensor forward(const Model& model, const Tensor& batch, const PruneMask& mask) {
    model.validate_mask(mask);
    const auto mult = build_multipliers(model, mask);
    Tensor cur = batch;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        cur = run_layer(model, i, cur);
        if (!mult[i].empty()) apply_unit_mask(cur, mult[i]);
    }
    if (cur.rank() != 2 || cur.shape[1] != model.num_classes) {
        throw ShapeError("model output is " + cur.shape_str() + ", expected Nx" +
                         std::to_string(model.num_classes));
    }
    return cur;
}

std::pair<Tensor, ActivationRecord> forward_with_activations(const Model& model,
                                                             const Tensor& sample,
                                                             const PruneMask& mask) {
    if (sample.rank() < 1 || sample.shape[0] != 1) {
        throw ShapeError("forward_with_activations expects a single sample, got batch " +
                         sample.shape_str());
    }
    model.validate_mask(mask);
    const auto mult = build_multipliers(model, mask);
    std::vector<Tensor> outputs(model.layers.size());
    const Tensor* cur = &sample;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        outputs[i] = run_layer(model, i, *cur);
        if (!mult[i].empty()) apply_unit_mask(outputs[i], mult[i]);
        cur = &outputs[i];
    }

    ActivationRecord rec;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.is_prunable_layer(i)) continue;
        const bool relu_next =
            i + 1 < model.layers.size() && model.layers[i + 1].kind == LayerKind::ReLU;
        const Tensor& src = relu_next ? outputs[i + 1] : outputs[i];
        const std::size_t units = model.layers[i].unit_count();
        const std::size_t plane = src.size() / units;
        for (std::size_t u = 0; u < units; ++u) {
            const float* p = src.ptr() + u * plane;
            float sum = 0.0f;
            for (std::size_t k = 0; k < plane; ++k) sum += p[k];
            rec.neurons.push_back({i, u});
            rec.mean_activation.push_back(sum / static_cast<float>(plane));
        }
    }

    Tensor logits = outputs.back();
    if (logits.rank() != 2 || logits.shape[1] != model.num_classes) {
        throw ShapeError("model output is " + logits.shape_str() + ", expected 1x" +
                         std::to_string(model.num_classes));
    }
    return {std::move(logits), std::move(rec)};
}

int argmax_row(const float* row, std::size_t n) {
    int best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (row[i] > row[best]) best = static_cast<int>(i);
    }
    return best;
}

std::vector<int> predict(const Model& model, const Tensor& batch, const PruneMask& mask) {
    const Tensor logits = forward(model, batch, mask);
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = argmax_row(logits.ptr() + i * c, c);
    return labels;
}

// ---------------------------------------------------------------------------
// MaskedBatchEvaluator
// ---------------------------------------------------------------------------

MaskedBatchEvaluator::MaskedBatchEvaluator(const Model& model, const Tensor& batch)
    : model_(&model), batch_(&batch) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (model.is_prunable_layer(i)) prunable_layers_.push_back(i);
    }
    premask_cache_.resize(prunable_layers_.size());
    reset();
}

void MaskedBatchEvaluator::reset(const PruneMask& mask) {
    model_->validate_mask(mask);
    mask_ = mask;
    multipliers_.assign(prunable_layers_.size(), {});
    for (std::size_t p = 0; p < prunable_layers_.size(); ++p) {
        multipliers_[p].assign(model_->layers[prunable_layers_[p]].unit_count(), 1.0f);
    }
    for (const auto& [id, m] : mask_.entries) {
        const auto it = std::lower_bound(prunable_layers_.begin(), prunable_layers_.end(),
                                         id.layer_index);
        const std::size_t p = static_cast<std::size_t>(it - prunable_layers_.begin());
        multipliers_[p][id.unit_index] = static_cast<float>(m);
    }

    Tensor cur = *batch_;
    std::size_t next_prunable = 0;
    for (std::size_t i = 0; i < model_->layers.size(); ++i) {
        cur = run_layer(*model_, i, cur);
        if (next_prunable < prunable_layers_.size() && prunable_layers_[next_prunable] == i) {
            premask_cache_[next_prunable] = cur;
            apply_unit_mask(cur, multipliers_[next_prunable]);
            ++next_prunable;
        }
    }
    logits_ = std::move(cur);
    predictions_.resize(logits_.shape[0]);
    const std::size_t c = logits_.shape[1];
    for (std::size_t i = 0; i < predictions_.size(); ++i) {
        predictions_[i] = argmax_row(logits_.ptr() + i * c, c);
    }
}

void MaskedBatchEvaluator::prune(NeuronId id) {
    prune_many({id});
}

void MaskedBatchEvaluator::prune_many(const std::vector<NeuronId>& ids) {
    if (ids.empty()) return;
    std::size_t first = prunable_layers_.size();
    for (const NeuronId& id : ids) {
        const auto it =
            std::lower_bound(prunable_layers_.begin(), prunable_layers_.end(), id.layer_index);
        if (it == prunable_layers_.end() || *it != id.layer_index) {
            throw std::invalid_argument("prune: layer " + std::to_string(id.layer_index) +
                                        " is not prunable");
        }
        const std::size_t p = static_cast<std::size_t>(it - prunable_layers_.begin());
        if (id.unit_index >= multipliers_[p].size()) {
            throw std::invalid_argument("prune: unit " + neuron_str(id) + " out of range");
        }
        mask_.prune(id);
        multipliers_[p][id.unit_index] = 0.0f;
        first = std::min(first, p);
    }
    recompute_from(first);
}

void MaskedBatchEvaluator::recompute_from(std::size_t ordinal) {
    Tensor cur = premask_cache_[ordinal];
    apply_unit_mask(cur, multipliers_[ordinal]);
    std::size_t next_prunable = ordinal + 1;
    for (std::size_t i = prunable_layers_[ordinal] + 1; i < model_->layers.size(); ++i) {
        cur = run_layer(*model_, i, cur);
        if (next_prunable < prunable_layers_.size() && prunable_layers_[next_prunable] == i) {
            premask_cache_[next_prunable] = cur;
            apply_unit_mask(cur, multipliers_[next_prunable]);
            ++next_prunable;
        }
    }
    logits_ = std::move(cur);
    const std::size_t c = logits_.shape[1];
    for (std::size_t i = 0; i < predictions_.size(); ++i) {
        predictions_[i] = argmax_row(logits_.ptr() + i * c, c);
    }
}

}  // namespace ttbd
