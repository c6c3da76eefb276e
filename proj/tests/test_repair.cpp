#include <doctest.h>

#include <algorithm>

#include "ttbd/repair.hpp"
#include "ttbd/rng.hpp"
#include "ttbd/synth.hpp"

using namespace ttbd;

namespace {

NeuronAttribution toy_attribution() {
    NeuronAttribution a;
    a.players = {{0, 0}, {0, 1}, {0, 2}, {0, 3}};
    a.asr_shapley = {0.9, 0.5, 0.2, 0.1};
    a.acc_abs_shapley = {0.8, 0.1, 0.2, 0.3};
    a.asr_samples = a.acc_samples = {40, 40, 40, 40};
    a.iterations = 40;
    return a;
}

Model small_net(std::uint64_t seed) {
    Model m;
    m.num_classes = 2;
    m.layers.push_back(Layer::dense(4, 3));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(2, 4));
    init_weights(m, seed);
    return m;
}

}  // namespace

TEST_CASE("k = m = all neurons selects everything in ASR order") {
    const RepairPlan plan = select_prune_set(toy_attribution(), 4, 4);
    CHECK(plan.prune_set ==
          std::vector<NeuronId>{{0, 0}, {0, 1}, {0, 2}, {0, 3}});
}

TEST_CASE("a top-ASR neuron in the protected ACC tier is excluded") {
    // neuron (0,0) leads ASR but has the largest ACC absolute value, so any
    // m < 4 drops it from the allowed set
    const RepairPlan plan = select_prune_set(toy_attribution(), 2, 3);
    CHECK(std::find(plan.prune_set.begin(), plan.prune_set.end(), NeuronId{0, 0}) ==
          plan.prune_set.end());
    CHECK(plan.prune_set == std::vector<NeuronId>{{0, 1}});
}

TEST_CASE("disjoint top-k and bottom-m is an error, not a silent prune") {
    NeuronAttribution a = toy_attribution();
    // ASR leader is the single most ACC-critical neuron
    CHECK_THROWS_WITH_AS(select_prune_set(a, 1, 1), doctest::Contains("increase m"),
                         std::runtime_error);
}

TEST_CASE("asr target 1.0 stops before pruning anything") {
    const Model m = small_net(5);
    Tensor batch({6, 3});
    Rng rng(2);
    for (float& v : batch.data) v = rng.next_float(-1.0f, 1.0f);
    const std::vector<int> original = predict(m, batch);

    RepairPlan plan;
    plan.k = plan.m = 4;
    plan.prune_set = m.prunable_neurons();

    RepairStop stop;
    stop.asr_value_target = 1.0;
    stop.max_prune = 4;
    const RepairOutcome out = repair(m, plan, batch, {0, 1}, original, stop);
    CHECK(out.neurons_pruned == 0);
    CHECK(out.mask.pruned_count() == 0);
    CHECK(out.final_asr_value == 1.0);
}

TEST_CASE("a plan of no-effect neurons runs to max_prune with predictions intact") {
    Model m = small_net(6);
    // sever hidden units 2 and 3 from the head so pruning them does nothing
    for (std::size_t cls = 0; cls < 2; ++cls) {
        m.layers[2].weights.data[cls * 4 + 2] = 0.0f;
        m.layers[2].weights.data[cls * 4 + 3] = 0.0f;
    }
    Tensor batch({5, 3});
    Rng rng(3);
    for (float& v : batch.data) v = rng.next_float(-1.0f, 1.0f);
    const std::vector<int> original = predict(m, batch);

    RepairPlan plan;
    plan.k = plan.m = 2;
    plan.prune_set = {{0, 2}, {0, 3}};
    RepairStop stop;
    stop.asr_value_target = 0.1;
    stop.max_prune = 2;
    const RepairOutcome out = repair(m, plan, batch, {0, 1, 2}, original, stop);
    CHECK(out.neurons_pruned == 2);
    CHECK(out.final_asr_value == 1.0);
    CHECK(predict(m, batch, out.mask) == original);
}

TEST_CASE("repair never prunes outside the plan and grows monotonically") {
    const Model m = small_net(7);
    Tensor batch({8, 3});
    Rng rng(4);
    for (float& v : batch.data) v = rng.next_float(-1.0f, 1.0f);
    const std::vector<int> original = predict(m, batch);

    RepairPlan plan;
    plan.k = plan.m = 3;
    plan.prune_set = {{0, 1}, {0, 3}, {0, 0}};
    RepairStop stop;
    stop.asr_value_target = 0.0;
    stop.max_prune = 2;
    const RepairOutcome out = repair(m, plan, batch, {0, 1}, original, stop);
    CHECK(out.neurons_pruned <= 2);
    for (const NeuronId& id : out.mask.pruned()) {
        CHECK(std::find(plan.prune_set.begin(), plan.prune_set.end(), id) != plan.prune_set.end());
    }
    // prefix property: pruned set is exactly the first neurons_pruned entries
    for (std::size_t i = 0; i < out.neurons_pruned; ++i) {
        CHECK(out.mask.get(plan.prune_set[i]) == 0);
    }
}

TEST_CASE("clearing the mask restores original predictions exactly") {
    const Model m = small_net(8);
    Tensor batch({10, 3});
    Rng rng(5);
    for (float& v : batch.data) v = rng.next_float(-1.0f, 1.0f);
    const std::vector<int> original = predict(m, batch);

    PruneMask mask;
    mask.prune({0, 0});
    mask.prune({0, 2});
    (void)predict(m, batch, mask);
    mask.clear();
    CHECK(predict(m, batch, mask) == original);
    CHECK(forward(m, batch, mask).data == forward(m, batch).data);
}

TEST_CASE("evaluate: identity mask, full maskout and logit scaling") {
    const LabeledDataset test = make_synth_digits(60, 12);
    Model m = reference_model(10, 1, 28, 28);
    init_weights(m, 2);
    const TriggerSpec trigger = TriggerSpec::patch(25, 25, 3, 3, 1.0f, 0);

    const EvalResult base = evaluate(m, {}, test, trigger);
    CHECK(base.neurons_pruned == 0);
    CHECK(base.acc_percent >= 0.0);
    CHECK(base.acc_percent <= 100.0);

    // all prunable neurons masked: the head sees zeros and predicts the
    // argmax-bias class for every input
    PruneMask all;
    for (const NeuronId& id : m.prunable_neurons()) all.prune(id);
    const Layer& head = m.layers[m.classifier_layer_index()];
    const int bias_class = argmax_row(head.biases.ptr(), head.biases.size());
    std::size_t share = 0;
    for (int l : test.labels) share += (l == bias_class) ? 1 : 0;
    const EvalResult dead = evaluate(m, all, test, trigger);
    CHECK(dead.acc_percent ==
          doctest::Approx(100.0 * static_cast<double>(share) / test.size()));
    CHECK(dead.fraction_pruned == doctest::Approx(1.0));

    // scaling every logit by a positive constant changes nothing
    Model scaled = m;
    Layer& shead = scaled.layers[scaled.classifier_layer_index()];
    for (float& w : shead.weights.data) w *= 3.0f;
    for (float& b : shead.biases.data) b *= 3.0f;
    const EvalResult scaled_eval = evaluate(scaled, {}, test, trigger);
    CHECK(scaled_eval.acc_percent == base.acc_percent);
    CHECK(scaled_eval.asr_percent == base.asr_percent);
}

TEST_CASE("activation-ranked plan covers all players in descending order") {
    const Model m = small_net(9);
    Tensor batch({6, 3});
    Rng rng(6);
    for (float& v : batch.data) v = rng.next_float(0.0f, 1.0f);
    const RepairPlan plan = select_by_activation(m, batch, {0, 2});
    CHECK(plan.prune_set.size() == m.prunable_neurons().size());
    // deterministic across calls
    const RepairPlan plan2 = select_by_activation(m, batch, {0, 2});
    CHECK(plan.prune_set == plan2.prune_set);
}

TEST_CASE("mask file round-trips") {
    PruneMask mask;
    mask.prune({0, 5});
    mask.prune({3, 17});
    const PruneMask back = mask_from_text(mask_to_text(mask, "seed=1 config-hash=abc"));
    CHECK(back.pruned() == mask.pruned());
}
