#include <doctest.h>

#include <cmath>

#include "ttbd/corruptions.hpp"
#include "ttbd/rng.hpp"
#include "ttbd/synth.hpp"

using namespace ttbd;

namespace {

// head with frozen weights: prediction depends only on the bias, so it is
// constant across inputs
Model constant_model(std::size_t h, std::size_t w) {
    Model m;
    m.num_classes = 3;
    m.layers.push_back(Layer::flatten());
    m.layers.push_back(Layer::dense(3, h * w));
    std::fill(m.layers[1].weights.data.begin(), m.layers[1].weights.data.end(), 0.0f);
    m.layers[1].biases.data = {0.1f, 0.9f, 0.2f};
    return m;
}

}  // namespace

TEST_CASE("brightness shifts an all-0.5 image uniformly by the severity delta") {
    Tensor img({1, 6, 6}, 0.5f);
    // severity table: 0.08, 0.16, 0.24, 0.32, 0.40
    const float deltas[5] = {0.08f, 0.16f, 0.24f, 0.32f, 0.40f};
    for (int sev = 1; sev <= 5; ++sev) {
        const Tensor out = corrupt(img, CorruptionKind::Brightness, sev, 1);
        for (float v : out.data) {
            CHECK(v == doctest::Approx(0.5f + deltas[sev - 1]).epsilon(1e-6));
        }
    }
}

TEST_CASE("gaussian noise is seed-deterministic") {
    const LabeledDataset d = make_synth_digits(1, 3);
    const Tensor img = d.images.slice_sample(0);
    const Tensor a = corrupt(img, CorruptionKind::GaussianNoise, 3, 42);
    const Tensor b = corrupt(img, CorruptionKind::GaussianNoise, 3, 42);
    const Tensor c = corrupt(img, CorruptionKind::GaussianNoise, 3, 43);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
}

TEST_CASE("contrast severity 5 moves a natural image farther than severity 1") {
    const LabeledDataset d = make_synth_digits(3, 5);
    for (std::size_t i = 0; i < 3; ++i) {
        const Tensor img = d.images.slice_sample(i);
        const Tensor s1 = corrupt(img, CorruptionKind::Contrast, 1, 0);
        const Tensor s5 = corrupt(img, CorruptionKind::Contrast, 5, 0);
        double d1 = 0.0, d5 = 0.0;
        for (std::size_t k = 0; k < img.size(); ++k) {
            d1 += (s1.data[k] - img.data[k]) * (s1.data[k] - img.data[k]);
            d5 += (s5.data[k] - img.data[k]) * (s5.data[k] - img.data[k]);
        }
        CHECK(d5 > d1);
    }
}

TEST_CASE("every corruption at every severity stays in [0,1] and finite") {
    const LabeledDataset d = make_synth_digits(2, 7);
    const Tensor img = d.images.slice_sample(1);
    for (CorruptionKind k : all_corruptions()) {
        for (int sev = 1; sev <= 5; ++sev) {
            const Tensor out = corrupt(img, k, sev, 9);
            for (float v : out.data) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
}

TEST_CASE("severity outside 1..5 is rejected") {
    Tensor img({1, 4, 4}, 0.5f);
    CHECK_THROWS(corrupt(img, CorruptionKind::Brightness, 0, 1));
    CHECK_THROWS(corrupt(img, CorruptionKind::Brightness, 6, 1));
}

TEST_CASE("a constant-prediction model records severity 6 for every kind") {
    const Model m = constant_model(6, 6);
    Tensor img({1, 6, 6}, 0.4f);
    for (CorruptionKind k : all_corruptions()) {
        CHECK(recorded_severity(m, img, k, 5) == kNeverFlips);
    }
    CHECK(crc_score(m, img, all_corruptions(), 5) == 0.0);
}

TEST_CASE("recorded severity returns the first flip point") {
    // dense(1x1): predicts class 1 iff the single pixel exceeds 0.5.
    Model m;
    m.num_classes = 2;
    m.layers.push_back(Layer::flatten());
    m.layers.push_back(Layer::dense(2, 1));
    m.layers[1].weights.data = {0.0f, 1.0f};
    m.layers[1].biases.data = {0.5f, 0.0f};

    // pixel at 0.30: brightness shifts +0.08,+0.16,+0.24,... so the first
    // severity with value > 0.5 is 3 (0.30+0.24=0.54)
    Tensor img({1, 1, 1}, 0.30f);
    CHECK(recorded_severity(m, img, CorruptionKind::Brightness, 1) == 3);
}

TEST_CASE("severity deviation matches the two-point example") {
    CHECK(severity_deviation({3, 3, 3, 3, 3, 3}) == 0.0);
    CHECK(severity_deviation({1, 6}) == doctest::Approx(2.5));
}

TEST_CASE("crc_score needs at least two kinds") {
    const Model m = constant_model(4, 4);
    Tensor img({1, 4, 4}, 0.2f);
    CHECK_THROWS(crc_score(m, img, {CorruptionKind::Brightness}, 1));
}

TEST_CASE("harsher substitute schedule never raises the recorded severity") {
    // severity is the first flip; doubling the brightness deltas by jumping
    // two severities at once can only flip earlier. Emulate by comparing the
    // recorded severity against a scan that flips at 2x the delta.
    Model m;
    m.num_classes = 2;
    m.layers.push_back(Layer::flatten());
    m.layers.push_back(Layer::dense(2, 1));
    m.layers[1].weights.data = {0.0f, 1.0f};
    m.layers[1].biases.data = {0.5f, 0.0f};

    for (float base = 0.05f; base < 0.5f; base += 0.05f) {
        Tensor img({1, 1, 1}, base);
        const int mild = recorded_severity(m, img, CorruptionKind::Brightness, 1);
        // harsher: severity s applies the table's delta at min(2s, 5)
        int harsh = kNeverFlips;
        const int clean = predict(m, [&] {
            Tensor b({1, 1, 1, 1});
            b.data[0] = base;
            return b;
        }())[0];
        for (int s = 1; s <= 5; ++s) {
            const int eff = std::min(2 * s, 5);
            const Tensor out = corrupt(img, CorruptionKind::Brightness, eff, 1);
            Tensor b({1, 1, 1, 1});
            b.data[0] = out.data[0];
            if (predict(m, b)[0] != clean) {
                harsh = s;
                break;
            }
        }
        CHECK(harsh <= mild);
    }
}

TEST_CASE("severity table text is stable and versioned") {
    const std::string t = severity_table_text();
    CHECK(t.find("severity table v1") != std::string::npos);
    CHECK(t.find("gaussian-noise") != std::string::npos);
    CHECK(t.find("salt-pepper") != std::string::npos);
    CHECK(t == severity_table_text());
}
