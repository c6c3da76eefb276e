#include <doctest.h>

#include "ttbd/model.hpp"
#include "ttbd/rng.hpp"
#include "ttbd/train.hpp"

using namespace ttbd;

namespace {

// two separable 2D blobs flattened as 1x1x2 "images"
void make_blobs(std::size_t n, Tensor& images, std::vector<int>& labels, std::uint64_t seed) {
    images = Tensor({n, 1, 1, 2});
    labels.resize(n);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        const float cx = cls == 0 ? 0.25f : 0.75f;
        images.data[i * 2 + 0] = cx + 0.08f * rng.next_gaussian();
        images.data[i * 2 + 1] = cx + 0.08f * rng.next_gaussian();
        labels[i] = cls;
    }
}

Model blob_net() {
    Model m;
    m.num_classes = 2;
    m.layers.push_back(Layer::flatten());
    m.layers.push_back(Layer::dense(8, 2));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(2, 8));
    return m;
}

}  // namespace

TEST_CASE("separable blobs reach 99% train accuracy within 50 epochs") {
    Tensor images;
    std::vector<int> labels;
    make_blobs(200, images, labels, 11);

    Hyperparams hp;
    hp.learning_rate = 0.1f;
    hp.epochs = 50;
    hp.batch_size = 16;
    hp.seed = 5;
    const Model trained = train(blob_net(), images, labels, hp);

    const auto preds = predict(trained, images);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (preds[i] == labels[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(labels.size()) >= 0.99);
}

TEST_CASE("zero epochs returns the freshly initialized model") {
    Tensor images;
    std::vector<int> labels;
    make_blobs(20, images, labels, 3);

    Hyperparams hp;
    hp.epochs = 0;
    hp.seed = 9;
    const Model a = train(blob_net(), images, labels, hp);

    Model b = blob_net();
    init_weights(b, derive_seed(9, 0xA11CE));
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].weights.data == b.layers[i].weights.data);
        CHECK(a.layers[i].biases.data == b.layers[i].biases.data);
    }
}

TEST_CASE("same seed trains to bit-identical weights") {
    Tensor images;
    std::vector<int> labels;
    make_blobs(60, images, labels, 4);

    Hyperparams hp;
    hp.epochs = 3;
    hp.batch_size = 8;
    hp.seed = 21;
    const Model a = train(blob_net(), images, labels, hp);
    const Model b = train(blob_net(), images, labels, hp);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].weights.data == b.layers[i].weights.data);
        CHECK(a.layers[i].biases.data == b.layers[i].biases.data);
    }

    Hyperparams hp2 = hp;
    hp2.seed = 22;
    const Model c = train(blob_net(), images, labels, hp2);
    CHECK(a.layers[1].weights.data != c.layers[1].weights.data);
}

TEST_CASE("labels outside the class range are rejected") {
    Tensor images;
    std::vector<int> labels;
    make_blobs(10, images, labels, 4);
    labels[3] = 2;
    Hyperparams hp;
    CHECK_THROWS(train(blob_net(), images, labels, hp));
}

TEST_CASE("divergent learning rate aborts with a diagnostic") {
    Tensor images;
    std::vector<int> labels;
    make_blobs(40, images, labels, 8);
    Hyperparams hp;
    hp.learning_rate = 1e8f;
    hp.epochs = 30;
    hp.seed = 2;
    CHECK_THROWS_WITH_AS(train(blob_net(), images, labels, hp),
                         doctest::Contains("non-finite"), std::runtime_error);
}
