#include "ttbd/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ttbd/rng.hpp"

namespace ttbd {

void layer_forward_cached(const Layer& layer, std::size_t index, const Tensor& in,
                          LayerCache& cache) {
    cache.output = Tensor(layer_output_shape(layer, index, in.shape));
    switch (layer.kind) {
        case LayerKind::Conv2D: conv2d_forward(layer, in, cache.output); break;
        case LayerKind::Dense: dense_forward(layer, in, cache.output); break;
        case LayerKind::ReLU: relu_forward(in, cache.output); break;
        case LayerKind::MaxPool2D: maxpool2d_forward(layer, in, cache.output, &cache.pool_argmax); break;
        case LayerKind::Flatten: flatten_forward(in, cache.output); break;
    }
}

static Tensor conv2d_backward(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                              LayerGrads* grads, bool need_input_grad) {
    const std::size_t n_batch = in.shape[0], ic = layer.in_channels;
    const std::size_t h = in.shape[2], w = in.shape[3];
    const std::size_t oc = layer.out_channels, kh = layer.kernel_h, kw = layer.kernel_w;
    const std::size_t s = layer.stride;
    const std::size_t oh = grad_out.shape[2], ow = grad_out.shape[3];

    Tensor grad_in;
    if (need_input_grad) grad_in = Tensor(in.shape);

    if (grads) {
        grads->weights = Tensor(layer.weights.shape);
        grads->biases = Tensor(layer.biases.shape);
        float* dw = grads->weights.ptr();
        float* db = grads->biases.ptr();
        for (std::size_t n = 0; n < n_batch; ++n) {
            for (std::size_t o = 0; o < oc; ++o) {
                const float* dyp = grad_out.ptr() + (n * oc + o) * oh * ow;
                float bacc = 0.0f;
                for (std::size_t i = 0; i < oh * ow; ++i) bacc += dyp[i];
                db[o] += bacc;
                for (std::size_t c = 0; c < ic; ++c) {
                    const float* src = in.ptr() + (n * ic + c) * h * w;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            float acc = 0.0f;
                            for (std::size_t y = 0; y < oh; ++y) {
                                const float* srow = src + (y * s + ky) * w + kx;
                                const float* drow = dyp + y * ow;
                                if (s == 1) {
                                    for (std::size_t x = 0; x < ow; ++x) acc += drow[x] * srow[x];
                                } else {
                                    for (std::size_t x = 0; x < ow; ++x)
                                        acc += drow[x] * srow[x * s];
                                }
                            }
                            dw[((o * ic + c) * kh + ky) * kw + kx] += acc;
                        }
                    }
                }
            }
        }
    }

    if (need_input_grad) {
        const float* wts = layer.weights.ptr();
        for (std::size_t n = 0; n < n_batch; ++n) {
            for (std::size_t o = 0; o < oc; ++o) {
                const float* dyp = grad_out.ptr() + (n * oc + o) * oh * ow;
                for (std::size_t c = 0; c < ic; ++c) {
                    float* gx = grad_in.ptr() + (n * ic + c) * h * w;
                    const float* wrow = wts + ((o * ic + c) * kh) * kw;
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const float wv = wrow[ky * kw + kx];
                            for (std::size_t y = 0; y < oh; ++y) {
                                float* grow = gx + (y * s + ky) * w + kx;
                                const float* drow = dyp + y * ow;
                                if (s == 1) {
                                    for (std::size_t x = 0; x < ow; ++x) grow[x] += wv * drow[x];
                                } else {
                                    for (std::size_t x = 0; x < ow; ++x)
                                        grow[x * s] += wv * drow[x];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

static Tensor dense_backward(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                             LayerGrads* grads, bool need_input_grad) {
    const std::size_t n_batch = in.shape[0];
    const std::size_t ni = layer.in_units, no = layer.out_units;

    Tensor grad_in;
    if (need_input_grad) grad_in = Tensor(in.shape);

    if (grads) {
        grads->weights = Tensor(layer.weights.shape);
        grads->biases = Tensor(layer.biases.shape);
        float* dw = grads->weights.ptr();
        float* db = grads->biases.ptr();
        for (std::size_t n = 0; n < n_batch; ++n) {
            const float* x = in.ptr() + n * ni;
            const float* dy = grad_out.ptr() + n * no;
            for (std::size_t o = 0; o < no; ++o) {
                const float d = dy[o];
                db[o] += d;
                float* dwrow = dw + o * ni;
                for (std::size_t i = 0; i < ni; ++i) dwrow[i] += d * x[i];
            }
        }
    }
    if (need_input_grad) {
        const float* wts = layer.weights.ptr();
        for (std::size_t n = 0; n < n_batch; ++n) {
            const float* dy = grad_out.ptr() + n * no;
            float* gx = grad_in.ptr() + n * ni;
            for (std::size_t o = 0; o < no; ++o) {
                const float d = dy[o];
                const float* wrow = wts + o * ni;
                for (std::size_t i = 0; i < ni; ++i) gx[i] += d * wrow[i];
            }
        }
    }
    return grad_in;
}

Tensor layer_backward(const Layer& layer, const Tensor& input, const LayerCache& cache,
                      const Tensor& grad_out, LayerGrads* grads) {
    switch (layer.kind) {
        case LayerKind::Conv2D: return conv2d_backward(layer, input, grad_out, grads, true);
        case LayerKind::Dense: return dense_backward(layer, input, grad_out, grads, true);
        case LayerKind::ReLU: {
            Tensor grad_in(input.shape);
            for (std::size_t i = 0; i < input.size(); ++i) {
                grad_in.data[i] = input.data[i] > 0.0f ? grad_out.data[i] : 0.0f;
            }
            return grad_in;
        }
        case LayerKind::MaxPool2D: {
            Tensor grad_in(input.shape);
            const std::size_t n_batch = input.shape[0], ch = input.shape[1];
            const std::size_t plane = input.shape[2] * input.shape[3];
            const std::size_t oplane = grad_out.shape[2] * grad_out.shape[3];
            for (std::size_t nc = 0; nc < n_batch * ch; ++nc) {
                float* gx = grad_in.ptr() + nc * plane;
                const float* dy = grad_out.ptr() + nc * oplane;
                const std::uint32_t* am = cache.pool_argmax.data() + nc * oplane;
                for (std::size_t i = 0; i < oplane; ++i) gx[am[i]] += dy[i];
            }
            return grad_in;
        }
        case LayerKind::Flatten: {
            Tensor grad_in(input.shape);
            grad_in.data = grad_out.data;
            return grad_in;
        }
    }
    throw std::runtime_error("layer_backward: unknown layer kind");
}

float softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad) {
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    if (labels.size() != n) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    if (grad) *grad = Tensor(logits.shape);
    float total = 0.0f;
    std::vector<float> probs(c);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.ptr() + i * c;
        float m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        float sum = 0.0f;
        for (std::size_t j = 0; j < c; ++j) {
            probs[j] = std::exp(row[j] - m);
            sum += probs[j];
        }
        const float inv = 1.0f / sum;
        const int y = labels[i];
        total += -(std::log(probs[static_cast<std::size_t>(y)] * inv));
        if (grad) {
            float* g = grad->ptr() + i * c;
            const float scale = 1.0f / static_cast<float>(n);
            for (std::size_t j = 0; j < c; ++j) {
                g[j] = (probs[j] * inv - (static_cast<int>(j) == y ? 1.0f : 0.0f)) * scale;
            }
        }
    }
    return total / static_cast<float>(n);
}

Model train(const Model& architecture, const Tensor& images, const std::vector<int>& labels,
            const Hyperparams& hp, std::vector<EpochStats>* log, const EpochCallback& on_epoch) {
    if (images.rank() != 4) throw std::invalid_argument("train: images must be NxCxHxW");
    const std::size_t n = images.shape[0];
    if (labels.size() != n) throw std::invalid_argument("train: label count mismatch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= architecture.num_classes) {
            throw std::invalid_argument("train: label " + std::to_string(y) + " outside [0," +
                                        std::to_string(architecture.num_classes) + ")");
        }
    }

    Model model = architecture;
    init_weights(model, derive_seed(hp.seed, 0xA11CE));

    const std::size_t n_layers = model.layers.size();
    std::vector<LayerGrads> velocity(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        if (!model.layers[i].has_units()) continue;
        velocity[i].weights = Tensor(model.layers[i].weights.shape);
        velocity[i].biases = Tensor(model.layers[i].biases.shape);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t sample_size = images.size() / n;
    std::vector<std::size_t> img_shape = images.shape;

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        Rng rng(derive_seed(hp.seed, 0x5F0F, epoch));
        rng.shuffle(order);

        float loss_sum = 0.0f;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += hp.batch_size) {
            const std::size_t bs = std::min(hp.batch_size, n - start);
            img_shape[0] = bs;
            Tensor batch(img_shape);
            std::vector<int> batch_labels(bs);
            for (std::size_t b = 0; b < bs; ++b) {
                const std::size_t src = order[start + b];
                std::copy(images.data.begin() + static_cast<std::ptrdiff_t>(src * sample_size),
                          images.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * sample_size),
                          batch.data.begin() + static_cast<std::ptrdiff_t>(b * sample_size));
                batch_labels[b] = labels[src];
            }

            std::vector<LayerCache> caches(n_layers);
            const Tensor* cur = &batch;
            for (std::size_t i = 0; i < n_layers; ++i) {
                layer_forward_cached(model.layers[i], i, *cur, caches[i]);
                cur = &caches[i].output;
            }

            Tensor grad;
            const float loss = softmax_cross_entropy(*cur, batch_labels, &grad);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches) + " (lr too high?)");
            }
            loss_sum += loss;
            ++batches;

            std::vector<LayerGrads> grads(n_layers);
            for (std::size_t i = n_layers; i-- > 0;) {
                const Tensor& input = i == 0 ? batch : caches[i - 1].output;
                const bool has_params = model.layers[i].has_units();
                if (i == 0 && !has_params) break;
                if (i == 0) {
                    // input gradient unused at the first layer
                    if (model.layers[i].kind == LayerKind::Conv2D) {
                        conv2d_backward(model.layers[i], input, grad, &grads[i], false);
                    } else {
                        dense_backward(model.layers[i], input, grad, &grads[i], false);
                    }
                } else {
                    grad = layer_backward(model.layers[i], input, caches[i], grad,
                                          has_params ? &grads[i] : nullptr);
                }
            }

            for (std::size_t i = 0; i < n_layers; ++i) {
                if (!model.layers[i].has_units()) continue;
                Layer& l = model.layers[i];
                for (std::size_t k = 0; k < l.weights.size(); ++k) {
                    float& v = velocity[i].weights.data[k];
                    v = hp.momentum * v - hp.learning_rate * grads[i].weights.data[k];
                    l.weights.data[k] += v;
                }
                for (std::size_t k = 0; k < l.biases.size(); ++k) {
                    float& v = velocity[i].biases.data[k];
                    v = hp.momentum * v - hp.learning_rate * grads[i].biases.data[k];
                    l.biases.data[k] += v;
                }
            }
        }

        EpochStats stats{epoch, batches ? loss_sum / static_cast<float>(batches) : 0.0f};
        if (log) log->push_back(stats);
        if (on_epoch) on_epoch(stats, model);
    }
    return model;
}

}  // namespace ttbd
