#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ttbd/rng.hpp"
#include "ttbd/shapley.hpp"

using namespace ttbd;

namespace {

// coalition table addressed by alive-bitmask
CoalitionValueFn table_fn(std::vector<double> table, std::size_t n) {
    return [table = std::move(table), n](const std::vector<std::uint8_t>& alive) {
        std::size_t mask = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alive[i]) mask |= std::size_t{1} << i;
        }
        return table[mask];
    };
}

std::vector<double> random_game(std::size_t n, std::uint64_t seed) {
    std::vector<double> table(std::size_t{1} << n);
    Rng rng(seed);
    for (double& v : table) v = rng.next_float(-1.0f, 1.0f);
    return table;
}

}  // namespace

TEST_CASE("exact shapley on the worked 2-player game") {
    // V(empty)=0, V({1})=1, V({2})=2, V(both)=4; marginals by the two
    // orderings are (1,3) and (2,2), so phi = (1.5, 2.5)
    std::vector<double> table(4);
    table[0b00] = 0.0;
    table[0b01] = 1.0;
    table[0b10] = 2.0;
    table[0b11] = 4.0;
    const auto phi = exact_shapley(2, table_fn(table, 2));
    CHECK(phi[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("dummy player gets exactly zero") {
    // player 2 never changes the value
    std::vector<double> table(8);
    for (std::size_t m = 0; m < 8; ++m) {
        const std::size_t without = m & 0b011;
        table[m] = static_cast<double>(std::popcount(without)) * 0.5 + (without == 0b011 ? 1 : 0);
    }
    const auto phi = exact_shapley(3, table_fn(table, 3));
    CHECK(phi[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("symmetric players get equal values") {
    // value depends only on the coalition size
    std::vector<double> table(16);
    for (std::size_t m = 0; m < 16; ++m) {
        const int s = std::popcount(m);
        table[m] = s * s * 0.3;
    }
    const auto phi = exact_shapley(4, table_fn(table, 4));
    for (std::size_t i = 1; i < 4; ++i) CHECK(phi[i] == doctest::Approx(phi[0]).epsilon(1e-12));
}

TEST_CASE("exact shapley satisfies efficiency on random games") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::size_t n = 3 + seed % 4;
        const auto table = random_game(n, seed);
        const auto phi = exact_shapley(n, table_fn(table, n));
        double sum = 0.0;
        for (double v : phi) sum += v;
        const double expected = table[(std::size_t{1} << n) - 1] - table[0];
        CHECK(sum == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("exact shapley refuses n > 12") {
    CHECK_THROWS(exact_shapley(13, [](const std::vector<std::uint8_t>&) { return 0.0; }));
}

TEST_CASE("monte-carlo estimate converges to the exact values") {
    for (std::uint64_t seed = 100; seed < 103; ++seed) {
        const std::size_t n = 8;
        const auto table = random_game(n, seed);
        const auto exact = exact_shapley(n, table_fn(table, n));

        McShapleyParams params;
        params.permutations = 200;
        params.truncation_threshold = 0.0;
        params.seed = seed;
        const auto est = mc_shapley(
            n, [&] { return make_table_walk(n, table_fn(table, n)); }, params);

        double lo = exact[0], hi = exact[0];
        for (double v : exact) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double tol = 0.05 * (hi - lo);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(est.values[i] - exact[i]) <= tol);
        }
    }
}

TEST_CASE("untruncated marginals telescope to V(full) - V(empty) for any T") {
    const std::size_t n = 7;
    const auto table = random_game(n, 55);
    const double expected = table[(std::size_t{1} << n) - 1] - table[0];

    for (int T : {1, 3, 17}) {
        McShapleyParams params;
        params.permutations = T;
        params.truncation_threshold = 0.0;
        params.seed = 9;
        const auto est = mc_shapley(
            n, [&] { return make_table_walk(n, table_fn(table, n)); }, params);
        double sum = 0.0;
        for (double v : est.values) sum += v;
        CHECK(sum == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("estimate is deterministic and worker-count independent") {
    const std::size_t n = 9;
    const auto table = random_game(n, 77);

    McShapleyParams p1;
    p1.permutations = 50;
    p1.truncation_threshold = 0.1;
    p1.seed = 31;
    p1.workers = 1;
    McShapleyParams p4 = p1;
    p4.workers = 4;

    const auto a = mc_shapley(n, [&] { return make_table_walk(n, table_fn(table, n)); }, p1);
    const auto b = mc_shapley(n, [&] { return make_table_walk(n, table_fn(table, n)); }, p4);
    CHECK(a.values == b.values);
    CHECK(a.abs_values == b.abs_values);
    CHECK(a.sample_counts == b.sample_counts);
}

TEST_CASE("abs values dominate |signed values| elementwise") {
    const std::size_t n = 8;
    const auto table = random_game(n, 123);
    McShapleyParams params;
    params.permutations = 64;
    params.truncation_threshold = 0.0;
    params.seed = 5;
    const auto est = mc_shapley(n, [&] { return make_table_walk(n, table_fn(table, n)); }, params);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(est.abs_values[i] >= std::abs(est.values[i]) - 1e-12);
    }
}

TEST_CASE("truncation records zero marginals and fewer samples") {
    // value collapses to 0 as soon as any player is pruned
    const std::size_t n = 6;
    CoalitionValueFn fn = [](const std::vector<std::uint8_t>& alive) {
        for (auto a : alive) {
            if (!a) return 0.0;
        }
        return 1.0;
    };
    McShapleyParams params;
    params.permutations = 10;
    params.truncation_threshold = 0.5;
    params.seed = 2;
    const auto est = mc_shapley(n, [&] { return make_table_walk(n, fn); }, params);
    // each permutation measures exactly one marginal (the first prune)
    int total_measured = 0;
    for (int c : est.sample_counts) total_measured += c;
    CHECK(total_measured == 10);
}

TEST_CASE("NaN from the value function aborts with the permutation index") {
    const std::size_t n = 4;
    CoalitionValueFn fn = [](const std::vector<std::uint8_t>& alive) {
        int dead = 0;
        for (auto a : alive) dead += a ? 0 : 1;
        return dead >= 2 ? std::nan("") : 1.0;
    };
    McShapleyParams params;
    params.permutations = 3;
    params.truncation_threshold = 0.0;
    params.seed = 1;
    CHECK_THROWS_WITH_AS(
        mc_shapley(n, [&] { return make_table_walk(n, fn); }, params),
        doctest::Contains("permutation"), std::runtime_error);
}

TEST_CASE("a neuron that never changes predictions has phi == 0 exactly") {
    // dense net where unit 1 of the hidden layer has zero outgoing weights
    Model m;
    m.num_classes = 2;
    m.layers.push_back(Layer::dense(3, 2));
    m.layers.push_back(Layer::relu());
    m.layers.push_back(Layer::dense(2, 3));
    init_weights(m, 3);
    m.layers[2].weights.data[1] = 0.0f;      // class 0 <- hidden 1
    m.layers[2].weights.data[3 + 1] = 0.0f;  // class 1 <- hidden 1

    Tensor eval({8, 2});
    Rng rng(4);
    for (float& v : eval.data) v = rng.next_float(-1.0f, 1.0f);
    const std::vector<int> refs = predict(m, eval);
    const std::vector<NeuronId> players = m.prunable_neurons();

    McShapleyParams params;
    params.permutations = 40;
    params.truncation_threshold = 0.0;
    params.seed = 8;
    const ShapleyReport rep = estimate_neuron_shapley(m, players, eval, refs, params);

    for (std::size_t i = 0; i < players.size(); ++i) {
        if (players[i] == NeuronId{0, 1}) {
            CHECK(rep.values[i] == 0.0);
            CHECK(rep.abs_values[i] == 0.0);
        }
    }
}

TEST_CASE("attribution text round-trips") {
    NeuronAttribution a;
    a.players = {{0, 0}, {0, 1}, {3, 7}};
    a.asr_shapley = {0.25, -0.125, 1e-9};
    a.acc_abs_shapley = {0.5, 0.0, 0.037};
    a.asr_samples = {40, 40, 12};
    a.acc_samples = {40, 39, 40};
    a.iterations = 40;
    a.asr_truncation = 0.2;
    a.acc_truncation = 0.3;

    const NeuronAttribution b = attribution_from_text(attribution_to_text(a));
    CHECK(b.players == a.players);
    CHECK(b.asr_shapley == a.asr_shapley);
    CHECK(b.acc_abs_shapley == a.acc_abs_shapley);
    CHECK(b.asr_samples == a.asr_samples);
    CHECK(b.acc_samples == a.acc_samples);
    CHECK(b.iterations == a.iterations);
}
