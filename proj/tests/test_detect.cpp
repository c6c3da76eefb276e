#include <doctest.h>

#include <cmath>

#include "ttbd/detect.hpp"
#include "ttbd/rng.hpp"

using namespace ttbd;

namespace {

// Two hidden units feeding two classes crosswise: pruning the dominant unit
// flips every sample whose first feature wins.
Model crosswire_model() {
    Model m;
    m.num_classes = 2;
    m.layers.push_back(Layer::dense(2, 2));
    m.layers[0].weights.data = {1.0f, 0.0f, 0.0f, 1.0f};
    m.layers[0].biases.data = {0.0f, 0.0f};
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(2, 2));
    m.layers[2].weights.data = {0.0f, 1.0f, 1.0f, 0.0f};  // class0<-unit1, class1<-unit0
    m.layers[2].biases.data = {0.0f, 0.0f};
    return m;
}

Model constant_head_model() {
    Model m;
    m.num_classes = 3;
    m.layers.push_back(Layer::dense(4, 2));
    init_weights(m, 3);
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(3, 4));
    std::fill(m.layers[2].weights.data.begin(), m.layers[2].weights.data.end(), 0.0f);
    m.layers[2].biases.data = {0.0f, 1.0f, 0.5f};
    return m;
}

Tensor dominant_first_batch(std::size_t n) {
    Tensor batch({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
        batch.data[i * 2 + 0] = 1.0f + 0.1f * static_cast<float>(i);
        batch.data[i * 2 + 1] = 0.1f;
    }
    return batch;
}

}  // namespace

TEST_CASE("theta=1.0 stops at the first flipping group and reports its flips") {
    const Model m = crosswire_model();
    const Tensor batch = dominant_first_batch(4);
    const std::vector<int> original = predict(m, batch);
    for (int p : original) CHECK(p == 1);

    DdpParams params;
    params.prune_step = 1;
    params.budget_fraction = 0.5;  // one of two prunable units
    params.agreement_threshold = 1.0;
    const int pcs = ddp_score(m, batch, 0, original, params);
    CHECK(pcs == 4);  // pruning the dominant unit flips everyone
}

TEST_CASE("zero budget yields PCS 0") {
    const Model m = crosswire_model();
    const Tensor batch = dominant_first_batch(3);
    const std::vector<int> original = predict(m, batch);
    DdpParams params;
    params.budget_fraction = 0.0;
    params.agreement_threshold = 1.0;
    CHECK(ddp_score(m, batch, 1, original, params) == 0);
}

TEST_CASE("constant-head model cannot change predictions, PCS 0 everywhere") {
    const Model m = constant_head_model();
    Tensor batch({6, 2});
    Rng rng(4);
    for (float& v : batch.data) v = rng.next_float(-1.0f, 1.0f);

    DdpParams params;
    params.prune_step = 1;
    params.budget_fraction = 1.0;
    params.agreement_threshold = 0.0;
    const DetectionReport r = ddp_detect(m, batch, 6, params);
    for (double s : r.scores) CHECK(s == 0.0);
    // degenerate scores rank by index
    for (std::size_t i = 0; i < 6; ++i) CHECK(r.ranking[i] == i);
    CHECK(r.detected.size() == 6);
}

TEST_CASE("ddp_score leaves the model outputs bit-identical") {
    const Model m = crosswire_model();
    const Tensor batch = dominant_first_batch(5);
    const std::vector<int> original = predict(m, batch);
    const Tensor before = forward(m, batch);
    DdpParams params;
    params.agreement_threshold = 0.5;
    params.budget_fraction = 1.0;
    (void)ddp_score(m, batch, 2, original, params);
    const Tensor after = forward(m, batch);
    CHECK(before.data == after.data);
}

TEST_CASE("ddp ranking breaks ties by ascending sample index") {
    const Model m = constant_head_model();
    Tensor batch({4, 2}, 0.3f);
    DdpParams params;
    const DetectionReport r = ddp_detect(m, batch, 2, params);
    CHECK(r.ranking == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(r.detected == std::vector<std::size_t>{0, 1});
}

TEST_CASE("detection is deterministic across worker counts") {
    Model m;
    m.num_classes = 3;
    m.layers.push_back(Layer::dense(6, 4));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(3, 6));
    init_weights(m, 11);

    Tensor batch({10, 4});
    Rng rng(12);
    for (float& v : batch.data) v = rng.next_float(-1.0f, 1.0f);

    DdpParams params;
    params.prune_step = 1;
    params.budget_fraction = 0.5;
    params.agreement_threshold = 0.4;
    const DetectionReport a = ddp_detect(m, batch, 3, params, 1);
    const DetectionReport b = ddp_detect(m, batch, 3, params, 4);
    CHECK(a.scores == b.scores);
    CHECK(a.ranking == b.ranking);
}

TEST_CASE("tight shapley filter with no survivors names the parameter") {
    const Model m = crosswire_model();
    const Tensor batch = dominant_first_batch(3);
    const std::vector<int> original = predict(m, batch);
    std::map<NeuronId, double> acc;
    acc[{0, 0}] = 0.9;
    acc[{0, 1}] = 0.8;
    DdpParams params;
    params.shapley_keep_fraction = 0.0;
    CHECK_THROWS_WITH_AS(ddp_score(m, batch, 0, original, params, &acc),
                         doctest::Contains("shapley_keep_fraction"), std::invalid_argument);
}

TEST_CASE("shapley filter excludes the top clean-critical neuron") {
    const Model m = crosswire_model();
    const Tensor batch = dominant_first_batch(4);
    const std::vector<int> original = predict(m, batch);

    // unit 0 is the activation leader, but marking it ACC-critical (keep
    // fraction 0.5 protects the top half) leaves only unit 1 to prune, and
    // pruning unit 1 changes nothing for these samples.
    std::map<NeuronId, double> acc;
    acc[{0, 0}] = 0.9;
    acc[{0, 1}] = 0.1;
    DdpParams params;
    params.prune_step = 1;
    params.budget_fraction = 1.0;
    params.agreement_threshold = 0.0;
    params.shapley_keep_fraction = 0.5;
    CHECK(ddp_score(m, batch, 0, original, params, &acc) == 0);
    // without the filter the dominant unit is pruned and flips everyone
    params.agreement_threshold = 1.0;
    CHECK(ddp_score(m, batch, 0, original, params) == 4);
}

TEST_CASE("teco ranks most corruption-consistent first, index order on ties") {
    const Model m = constant_head_model();
    Tensor batch({5, 2}, 0.4f);
    const DetectionReport r =
        teco_detect(m, batch, 2, all_corruptions(), /*seed=*/3, /*workers=*/1);
    for (double s : r.scores) CHECK(s == 0.0);  // constant model never flips
    CHECK(r.ranking == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(r.detected == std::vector<std::size_t>{0, 1});
}

TEST_CASE("dual fusion: a sample ranked first by both methods is detected") {
    // constant model: every DDP score 0 and every CRC 0, so both rankings
    // fall back to index order and sample 0 has fused rank 2.
    const Model m = constant_head_model();
    std::vector<Tensor> batches;
    batches.push_back(Tensor({3, 2}, 0.2f));
    batches.push_back(Tensor({3, 2}, 0.6f));

    DdpParams params;
    const DetectionReport r = dual_detect_sparse(m, batches, 1, params, all_corruptions(), 5);
    CHECK(r.scores.size() == 6);
    CHECK(r.scores[0] == 2.0);
    CHECK(r.detected == std::vector<std::size_t>{0});
}

TEST_CASE("dual detection requires at least one batch") {
    const Model m = constant_head_model();
    DdpParams params;
    CHECK_THROWS(dual_detect_sparse(m, {}, 1, params, all_corruptions(), 1));
}

TEST_CASE("detection report text round-trips") {
    DetectionReport r;
    r.method = DetectMethod::DDP;
    r.scores = {4.0, 0.0, 7.0};
    r.ranking = {2, 0, 1};
    r.detected = {2};
    r.params_text = "n_detect=1 prune_step=2";
    const DetectionReport b = detection_report_from_text(detection_report_to_text(r));
    CHECK(b.method == r.method );
    CHECK(b.scores == r.scores);
    CHECK(b.ranking == r.ranking);
    CHECK(b.detected == r.detected);
    CHECK(b.params_text == r.params_text);
}

TEST_CASE("report consistency checks catch corrupted rankings") {
    DetectionReport r;
    r.scores = {1.0, 2.0};
    r.ranking = {0, 0};
    r.detected = {0};
    CHECK_THROWS(r.check_consistent());
    r.ranking = {1, 0};
    r.detected = {0};  // not the ranking prefix
    CHECK_THROWS(r.check_consistent());
}
