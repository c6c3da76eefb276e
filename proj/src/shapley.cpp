#include "ttbd/shapley.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ttbd/parallel.hpp"
#include "ttbd/rng.hpp"

namespace ttbd {

std::vector<double> exact_shapley(std::size_t n_players, const CoalitionValueFn& value) {
    if (n_players == 0) return {};
    if (n_players > 12) {
        throw std::invalid_argument("exact_shapley enumerates 2^n coalitions; n=" +
                                    std::to_string(n_players) + " > 12 refused");
    }
    const std::size_t n = n_players;
    std::vector<double> fact(n + 1, 1.0);
    for (std::size_t i = 1; i <= n; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    // Cache all 2^n coalition values once.
    const std::size_t full = std::size_t{1} << n;
    std::vector<double> table(full);
    std::vector<std::uint8_t> alive(n);
    for (std::size_t m = 0; m < full; ++m) {
        for (std::size_t i = 0; i < n; ++i) alive[i] = (m >> i) & 1;
        table[m] = value(alive);
    }

    std::vector<double> phi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        for (std::size_t m = 0; m < full; ++m) {
            if (m & bit) continue;
            const std::size_t s = static_cast<std::size_t>(std::popcount(m));
            const double weight = fact[s] * fact[n - s - 1] / fact[n];
            phi[i] += weight * (table[m | bit] - table[m]);
        }
    }
    return phi;
}

namespace {

class TableWalk final : public ShapleyWalk {
public:
    TableWalk(std::size_t n, CoalitionValueFn value) : value_(std::move(value)), alive_(n, 1) {}
    void reset() override { std::fill(alive_.begin(), alive_.end(), 1); }
    void prune(std::size_t player) override { alive_[player] = 0; }
    double value() override { return value_(alive_); }

private:
    CoalitionValueFn value_;
    std::vector<std::uint8_t> alive_;
};

}  // namespace

std::unique_ptr<ShapleyWalk> make_table_walk(std::size_t n_players, CoalitionValueFn value) {
    return std::make_unique<TableWalk>(n_players, std::move(value));
}

ShapleyEstimate mc_shapley(std::size_t n_players, const WalkFactory& make_walk,
                           const McShapleyParams& params) {
    if (params.permutations < 1) throw std::invalid_argument("mc_shapley needs T >= 1");
    if (!(params.truncation_threshold >= 0.0 && params.truncation_threshold < 1.0)) {
        throw std::invalid_argument("truncation threshold must be in [0,1)");
    }
    const std::size_t T = static_cast<std::size_t>(params.permutations);

    // One marginal vector per permutation; merged in permutation order so the
    // result is independent of scheduling.
    std::vector<std::vector<double>> marginals(T);
    std::vector<std::vector<std::uint8_t>> measured(T);

    struct WalkSlot {
        std::unique_ptr<ShapleyWalk> walk;
    };
    std::vector<WalkSlot> slots(std::max<std::size_t>(1, std::min<std::size_t>(
                                                             T, std::max(params.workers, 1))));
    std::mutex slot_mutex;
    std::vector<std::size_t> free_slots(slots.size());
    std::iota(free_slots.begin(), free_slots.end(), 0);

    auto run_permutation = [&](std::size_t t) {
        std::size_t slot_idx;
        {
            std::lock_guard<std::mutex> lock(slot_mutex);
            slot_idx = free_slots.back();
            free_slots.pop_back();
        }
        if (!slots[slot_idx].walk) slots[slot_idx].walk = make_walk();
        ShapleyWalk& walk = *slots[slot_idx].walk;
        walk.reset();

        std::vector<std::size_t> perm(n_players);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(derive_seed(params.seed, 0x5AFE, t));
        rng.shuffle(perm);

        marginals[t].assign(n_players, 0.0);
        measured[t].assign(n_players, 0);

        double prev = walk.value();
        if (std::isnan(prev)) {
            throw std::runtime_error("value function returned NaN at permutation " +
                                     std::to_string(t) + " (all-alive)");
        }
        for (std::size_t step = 0; step < n_players; ++step) {
            const std::size_t p = perm[step];
            walk.prune(p);
            const double cur = walk.value();
            if (std::isnan(cur)) {
                throw std::runtime_error("value function returned NaN at permutation " +
                                         std::to_string(t) + ", step " + std::to_string(step));
            }
            marginals[t][p] = prev - cur;
            measured[t][p] = 1;
            prev = cur;
            if (cur < params.truncation_threshold) break;  // remaining marginals stay 0
        }

        {
            std::lock_guard<std::mutex> lock(slot_mutex);
            free_slots.push_back(slot_idx);
        }
    };

    parallel_for(T, params.workers, run_permutation);

    ShapleyEstimate est;
    est.values.assign(n_players, 0.0);
    est.abs_values.assign(n_players, 0.0);
    est.sample_counts.assign(n_players, 0);
    est.iterations = params.permutations;
    est.truncation_threshold = params.truncation_threshold;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < n_players; ++i) {
            est.values[i] += marginals[t][i];
            est.abs_values[i] += std::abs(marginals[t][i]);
            est.sample_counts[i] += measured[t][i];
        }
    }
    const double inv = 1.0 / static_cast<double>(T);
    for (std::size_t i = 0; i < n_players; ++i) {
        est.values[i] *= inv;
        est.abs_values[i] *= inv;
    }
    return est;
}

// ---------------------------------------------------------------------------
// neuron attribution
// ---------------------------------------------------------------------------

namespace {

class AgreementWalk final : public ShapleyWalk {
public:
    AgreementWalk(const Model& model, std::shared_ptr<const Tensor> images,
                  std::shared_ptr<const std::vector<int>> reference,
                  std::shared_ptr<const std::vector<NeuronId>> players)
        : images_(std::move(images)),
          reference_(std::move(reference)),
          players_(std::move(players)),
          eval_(model, *images_) {}

    void reset() override { eval_.reset(); }
    void prune(std::size_t player) override { eval_.prune((*players_)[player]); }
    double value() override {
        const auto& preds = eval_.predictions();
        std::size_t agree = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == (*reference_)[i]) ++agree;
        }
        return static_cast<double>(agree) / static_cast<double>(preds.size());
    }

private:
    std::shared_ptr<const Tensor> images_;
    std::shared_ptr<const std::vector<int>> reference_;
    std::shared_ptr<const std::vector<NeuronId>> players_;
    MaskedBatchEvaluator eval_;
};

}  // namespace

WalkFactory make_agreement_walk_factory(const Model& model, Tensor eval_images,
                                        std::vector<int> reference,
                                        std::vector<NeuronId> players) {
    if (eval_images.rank() != 4 || eval_images.shape[0] == 0) {
        throw std::invalid_argument("agreement value function needs a non-empty NxCxHxW set");
    }
    if (eval_images.shape[0] != reference.size()) {
        throw std::invalid_argument("agreement value function: reference size mismatch");
    }
    auto images = std::make_shared<const Tensor>(std::move(eval_images));
    auto refs = std::make_shared<const std::vector<int>>(std::move(reference));
    auto ply = std::make_shared<const std::vector<NeuronId>>(std::move(players));
    const Model* m = &model;
    return [m, images, refs, ply]() -> std::unique_ptr<ShapleyWalk> {
        return std::make_unique<AgreementWalk>(*m, images, refs, ply);
    };
}

ShapleyReport estimate_neuron_shapley(const Model& model, const std::vector<NeuronId>& players,
                                      const Tensor& eval_images, const std::vector<int>& reference,
                                      const McShapleyParams& params) {
    const auto factory = make_agreement_walk_factory(model, eval_images, reference, players);
    const ShapleyEstimate est = mc_shapley(players.size(), factory, params);
    ShapleyReport report;
    report.players = players;
    report.values = est.values;
    report.abs_values = est.abs_values;
    report.sample_counts = est.sample_counts;
    report.iterations = est.iterations;
    report.truncation_threshold = est.truncation_threshold;
    return report;
}

NeuronAttribution combine_attribution(const ShapleyReport& asr, const ShapleyReport& acc) {
    if (asr.players != acc.players) {
        throw std::invalid_argument("attribution reports cover different player sets");
    }
    NeuronAttribution a;
    a.players = asr.players;
    a.asr_shapley = asr.values;
    a.acc_abs_shapley = acc.abs_values;
    a.asr_samples = asr.sample_counts;
    a.acc_samples = acc.sample_counts;
    a.iterations = asr.iterations;
    a.asr_truncation = asr.truncation_threshold;
    a.acc_truncation = acc.truncation_threshold;
    return a;
}

std::string attribution_to_text(const NeuronAttribution& a) {
    std::ostringstream os;
    os << "# ttbd shapley attribution v1\n";
    os << "iterations=" << a.iterations << "\n";
    os << "asr_truncation=" << a.asr_truncation << "\n";
    os << "acc_truncation=" << a.acc_truncation << "\n";
    os << "players=" << a.players.size() << "\n";
    os << "# layer unit asr_shapley acc_abs_shapley asr_samples acc_samples\n";
    os.precision(17);
    for (std::size_t i = 0; i < a.players.size(); ++i) {
        os << a.players[i].layer_index << " " << a.players[i].unit_index << " " << a.asr_shapley[i]
           << " " << a.acc_abs_shapley[i] << " " << a.asr_samples[i] << " " << a.acc_samples[i]
           << "\n";
    }
    return os.str();
}

NeuronAttribution attribution_from_text(const std::string& text) {
    std::istringstream is(text);
    NeuronAttribution a;
    std::string line;
    std::size_t expected = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos) {
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 1);
            if (key == "iterations") a.iterations = std::stoi(val);
            else if (key == "asr_truncation") a.asr_truncation = std::stod(val);
            else if (key == "acc_truncation") a.acc_truncation = std::stod(val);
            else if (key == "players") expected = std::stoul(val);
            else throw std::runtime_error("attribution: unknown key " + key);
            continue;
        }
        std::istringstream row(line);
        NeuronId id;
        double asr = 0.0, acc = 0.0;
        int ns = 0, nc = 0;
        if (!(row >> id.layer_index >> id.unit_index >> asr >> acc >> ns >> nc)) {
            throw std::runtime_error("attribution: malformed row: " + line);
        }
        a.players.push_back(id);
        a.asr_shapley.push_back(asr);
        a.acc_abs_shapley.push_back(acc);
        a.asr_samples.push_back(ns);
        a.acc_samples.push_back(nc);
    }
    if (a.players.size() != expected) {
        throw std::runtime_error("attribution: row count " + std::to_string(a.players.size()) +
                                 " != declared " + std::to_string(expected));
    }
    return a;
}

void save_attribution(const NeuronAttribution& a, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << attribution_to_text(a);
    if (!os) throw std::runtime_error("write failed: " + path);
}

NeuronAttribution load_attribution(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return attribution_from_text(buf.str());
}

}  // namespace ttbd
