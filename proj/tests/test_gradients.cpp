#include <doctest.h>

#include <cmath>
#include <vector>

#include "ttbd/model.hpp"
#include "ttbd/rng.hpp"
#include "ttbd/train.hpp"

using namespace ttbd;

namespace {

// Probe loss L = sum_j c_j * y_j with fixed random weights c, so dL/dy = c.
// Central finite differences on the float32 forward path; tolerance is
// relative to the largest gradient magnitude.
struct GradCheck {
    Layer layer;
    Tensor input;
    Tensor probe;  // c, same shape as the layer output

    double loss(const Tensor& in, const Layer& l) const {
        LayerCache cache;
        layer_forward_cached(l, 0, in, cache);
        double acc = 0.0;
        for (std::size_t i = 0; i < cache.output.size(); ++i) {
            acc += static_cast<double>(cache.output.data[i]) * probe.data[i];
        }
        return acc;
    }
};

constexpr double kRelTol = 1e-3;
constexpr float kStep = 1e-2f;

void check_close(double analytic, double numeric, double scale, const char* what) {
    const double tol = kRelTol * std::max({scale, std::abs(analytic), 1e-4});
    INFO(what << ": analytic=" << analytic << " numeric=" << numeric << " tol=" << tol);
    CHECK(std::abs(analytic - numeric) <= tol);
}

void run_gradcheck(GradCheck& g, bool has_params) {
    LayerCache cache;
    layer_forward_cached(g.layer, 0, g.input, cache);
    LayerGrads grads;
    const Tensor input_grad =
        layer_backward(g.layer, g.input, cache, g.probe, has_params ? &grads : nullptr);

    double gmax = 0.0;
    for (float v : input_grad.data) gmax = std::max(gmax, std::abs(static_cast<double>(v)));
    if (has_params) {
        for (float v : grads.weights.data) gmax = std::max(gmax, std::abs(static_cast<double>(v)));
        for (float v : grads.biases.data) gmax = std::max(gmax, std::abs(static_cast<double>(v)));
    }

    // input gradients
    for (std::size_t i = 0; i < g.input.size(); ++i) {
        Tensor in = g.input;
        in.data[i] += kStep;
        const double up = g.loss(in, g.layer);
        in.data[i] -= 2 * kStep;
        const double down = g.loss(in, g.layer);
        const double numeric = (up - down) / (2.0 * kStep);
        check_close(input_grad.data[i], numeric, gmax, "d/dinput");
    }

    if (!has_params) return;
    for (std::size_t i = 0; i < g.layer.weights.size(); ++i) {
        Layer l = g.layer;
        l.weights.data[i] += kStep;
        const double up = g.loss(g.input, l);
        l.weights.data[i] -= 2 * kStep;
        const double down = g.loss(g.input, l);
        check_close(grads.weights.data[i], (up - down) / (2.0 * kStep), gmax, "d/dweight");
    }
    for (std::size_t i = 0; i < g.layer.biases.size(); ++i) {
        Layer l = g.layer;
        l.biases.data[i] += kStep;
        const double up = g.loss(g.input, l);
        l.biases.data[i] -= 2 * kStep;
        const double down = g.loss(g.input, l);
        check_close(grads.biases.data[i], (up - down) / (2.0 * kStep), gmax, "d/dbias");
    }
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, float lo = -1.0f,
                     float hi = 1.0f) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (float& v : t.data) v = rng.next_float(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("conv2d gradients match central finite differences") {
    GradCheck g;
    g.layer = Layer::conv2d(2, 2, 3, 3);
    g.layer.weights = random_tensor({2, 2, 3, 3}, 1);
    g.layer.biases = random_tensor({2}, 2);
    g.input = random_tensor({2, 2, 6, 6}, 3);
    g.probe = random_tensor({2, 2, 4, 4}, 4);
    run_gradcheck(g, true);
}

TEST_CASE("conv2d gradients with stride 2") {
    GradCheck g;
    g.layer = Layer::conv2d(1, 1, 3, 3, 2);
    g.layer.weights = random_tensor({1, 1, 3, 3}, 5);
    g.layer.biases = random_tensor({1}, 6);
    g.input = random_tensor({1, 1, 7, 7}, 7);
    g.probe = random_tensor({1, 1, 3, 3}, 8);
    run_gradcheck(g, true);
}

TEST_CASE("dense gradients match central finite differences") {
    GradCheck g;
    g.layer = Layer::dense(4, 5);
    g.layer.weights = random_tensor({4, 5}, 9);
    g.layer.biases = random_tensor({4}, 10);
    g.input = random_tensor({3, 5}, 11);
    g.probe = random_tensor({3, 4}, 12);
    run_gradcheck(g, true);
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
    GradCheck g;
    g.layer = Layer::relu();
    g.input = random_tensor({2, 6}, 13);
    // keep samples off the non-differentiable point
    for (float& v : g.input.data) {
        if (std::abs(v) < 5 * kStep) v = v < 0 ? -0.1f : 0.1f;
    }
    g.probe = random_tensor({2, 6}, 14);
    run_gradcheck(g, false);
}

TEST_CASE("maxpool gradient matches finite differences with distinct values") {
    GradCheck g;
    g.layer = Layer::maxpool2d(2, 2);
    g.input = random_tensor({1, 2, 4, 4}, 15);
    // separate competing entries so the argmax is stable under the probe step
    Rng rng(16);
    for (float& v : g.input.data) v += 0.2f * rng.next_float();
    g.probe = random_tensor({1, 2, 2, 2}, 17);
    run_gradcheck(g, false);
}

TEST_CASE("flatten gradient is a reshape") {
    GradCheck g;
    g.layer = Layer::flatten();
    g.input = random_tensor({2, 2, 3, 3}, 18);
    g.probe = random_tensor({2, 18}, 19);
    run_gradcheck(g, false);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    Tensor logits = random_tensor({3, 4}, 20, -2.0f, 2.0f);
    const std::vector<int> labels = {1, 3, 0};
    Tensor grad;
    softmax_cross_entropy(logits, labels, &grad);

    for (std::size_t i = 0; i < logits.size(); ++i) {
        Tensor up = logits, down = logits;
        up.data[i] += kStep;
        down.data[i] -= kStep;
        const double numeric =
            (softmax_cross_entropy(up, labels, nullptr) -
             softmax_cross_entropy(down, labels, nullptr)) /
            (2.0 * kStep);
        check_close(grad.data[i], numeric, 1.0, "d/dlogit");
    }
}

TEST_CASE("softmax cross-entropy value on a known distribution") {
    // logits [ln2, 0] -> softmax [2/3, 1/3]; label 0 -> loss = ln(3/2)
    Tensor logits({1, 2});
    logits.data = {std::log(2.0f), 0.0f};
    const float loss = softmax_cross_entropy(logits, {0}, nullptr);
    CHECK(loss == doctest::Approx(std::log(1.5)).epsilon(1e-5));
}
