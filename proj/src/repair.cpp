#include "ttbd/repair.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ttbd/parallel.hpp"

namespace ttbd {

RepairPlan select_prune_set(const NeuronAttribution& attribution, std::size_t k, std::size_t m) {
    const std::size_t n = attribution.players.size();
    if (k < 1 || m < 1) throw std::invalid_argument("select_prune_set: k and m must be >= 1");
    if (k > n || m > n) {
        throw std::invalid_argument("select_prune_set: k or m exceeds the " + std::to_string(n) +
                                    " scored neurons");
    }

    auto sorted_by = [&](const std::vector<double>& vals, bool descending) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (vals[a] != vals[b]) return descending ? vals[a] > vals[b] : vals[a] < vals[b];
            return attribution.players[a] < attribution.players[b];
        });
        return order;
    };

    const auto by_asr = sorted_by(attribution.asr_shapley, /*descending=*/true);
    const auto by_acc = sorted_by(attribution.acc_abs_shapley, /*descending=*/false);

    std::vector<std::uint8_t> allowed(n, 0);
    for (std::size_t i = 0; i < m; ++i) allowed[by_acc[i]] = 1;

    RepairPlan plan;
    plan.k = k;
    plan.m = m;
    for (std::size_t i = 0; i < k; ++i) {
        if (allowed[by_asr[i]]) plan.prune_set.push_back(attribution.players[by_asr[i]]);
    }
    if (plan.prune_set.empty()) {
        throw std::runtime_error(
            "top-" + std::to_string(k) + " ASR and bottom-" + std::to_string(m) +
            " ACC neuron sets do not intersect; increase m to allow pruning");
    }
    return plan;
}

RepairOutcome repair(const Model& model, const RepairPlan& plan, const Tensor& batch_images,
                     const std::vector<std::size_t>& detected,
                     const std::vector<int>& original_predictions, const RepairStop& stop) {
    if (detected.empty()) throw std::invalid_argument("repair: no detected samples");
    const std::size_t batch_size = batch_images.shape.at(0);
    if (original_predictions.size() != batch_size) {
        throw std::invalid_argument("repair: original predictions size mismatch");
    }

    // Evaluate the ASR proxy on the detected subset only.
    Tensor eval_images({detected.size(), batch_images.shape[1], batch_images.shape[2],
                        batch_images.shape[3]});
    std::vector<int> reference(detected.size());
    const std::size_t stride = batch_images.size() / batch_size;
    for (std::size_t i = 0; i < detected.size(); ++i) {
        const std::size_t s = detected[i];
        if (s >= batch_size) throw std::out_of_range("repair: detected index out of range");
        std::copy(batch_images.data.begin() + static_cast<std::ptrdiff_t>(s * stride),
                  batch_images.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * stride),
                  eval_images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        reference[i] = original_predictions[s];
    }

    MaskedBatchEvaluator eval(model, eval_images);
    auto asr_value = [&]() {
        std::size_t agree = 0;
        const auto& preds = eval.predictions();
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == reference[i]) ++agree;
        }
        return static_cast<double>(agree) / static_cast<double>(preds.size());
    };

    RepairOutcome out;
    out.final_asr_value = asr_value();
    for (const NeuronId& id : plan.prune_set) {
        if (out.final_asr_value <= stop.asr_value_target) break;
        if (out.neurons_pruned >= stop.max_prune) break;
        eval.prune(id);
        out.mask.prune(id);
        ++out.neurons_pruned;
        out.final_asr_value = asr_value();
        out.value_trace.push_back(out.final_asr_value);
    }
    return out;
}

EvalResult evaluate(const Model& model, const PruneMask& mask, const LabeledDataset& clean_test,
                    const TriggerSpec& trigger, int workers) {
    clean_test.check_consistent();
    const std::size_t n = clean_test.size();
    const std::size_t stride = clean_test.images.size() / n;

    // chunked batched forward, parallel over chunks
    constexpr std::size_t kChunk = 128;
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
    std::vector<int> clean_preds(n);
    std::vector<int> triggered_preds(n, -1);

    parallel_for(n_chunks, workers, [&](std::size_t ci) {
        const std::size_t lo = ci * kChunk;
        const std::size_t hi = std::min(lo + kChunk, n);
        std::vector<std::size_t> shape = clean_test.images.shape;
        shape[0] = hi - lo;
        Tensor chunk(shape);
        std::copy(clean_test.images.data.begin() + static_cast<std::ptrdiff_t>(lo * stride),
                  clean_test.images.data.begin() + static_cast<std::ptrdiff_t>(hi * stride),
                  chunk.data.begin());
        const auto preds = predict(model, chunk, mask);
        std::copy(preds.begin(), preds.end(), clean_preds.begin() + static_cast<std::ptrdiff_t>(lo));

        // triggered copies for the ASR half
        Tensor triggered = chunk;
        for (std::size_t i = 0; i < hi - lo; ++i) {
            const Tensor img = chunk.slice_sample(i);
            const Tensor t = apply_trigger(img, trigger);
            std::copy(t.data.begin(), t.data.end(),
                      triggered.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
        }
        const auto tpreds = predict(model, triggered, mask);
        std::copy(tpreds.begin(), tpreds.end(),
                  triggered_preds.begin() + static_cast<std::ptrdiff_t>(lo));
    });

    std::size_t correct = 0;
    std::size_t attack_total = 0, attack_hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (clean_preds[i] == clean_test.labels[i]) ++correct;
        if (clean_test.labels[i] != trigger.target_label) {
            ++attack_total;
            if (triggered_preds[i] == trigger.target_label) ++attack_hits;
        }
    }

    EvalResult r;
    r.acc_percent = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    r.asr_percent =
        attack_total ? 100.0 * static_cast<double>(attack_hits) / static_cast<double>(attack_total)
                     : 0.0;
    r.neurons_pruned = mask.pruned_count();
    const std::size_t total_prunable = model.prunable_neurons().size();
    r.fraction_pruned =
        total_prunable ? static_cast<double>(r.neurons_pruned) / static_cast<double>(total_prunable)
                       : 0.0;
    return r;
}

RepairPlan select_by_activation(const Model& model, const Tensor& batch_images,
                                const std::vector<std::size_t>& detected) {
    if (detected.empty()) throw std::invalid_argument("select_by_activation: no detected samples");
    const std::vector<NeuronId> players = model.prunable_neurons();
    std::vector<double> mean_act(players.size(), 0.0);

    const std::size_t stride = batch_images.size() / batch_images.shape[0];
    for (std::size_t s : detected) {
        Tensor sample({1, batch_images.shape[1], batch_images.shape[2], batch_images.shape[3]});
        std::copy(batch_images.data.begin() + static_cast<std::ptrdiff_t>(s * stride),
                  batch_images.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * stride),
                  sample.data.begin());
        const auto [logits, rec] = forward_with_activations(model, sample);
        (void)logits;
        for (std::size_t i = 0; i < players.size(); ++i) {
            mean_act[i] += static_cast<double>(rec.mean_activation[i]);
        }
    }
    for (double& v : mean_act) v /= static_cast<double>(detected.size());

    std::vector<std::size_t> order(players.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (mean_act[a] != mean_act[b]) return mean_act[a] > mean_act[b];
        return players[a] < players[b];
    });

    RepairPlan plan;
    plan.k = players.size();
    plan.m = players.size();
    for (std::size_t i : order) plan.prune_set.push_back(players[i]);
    return plan;
}

std::string mask_to_text(const PruneMask& mask, const std::string& provenance) {
    std::ostringstream os;
    os << "# ttbd prune mask v1\n";
    if (!provenance.empty()) os << "# " << provenance << "\n";
    for (const NeuronId& id : mask.pruned()) {
        os << id.layer_index << " " << id.unit_index << "\n";
    }
    return os.str();
}

PruneMask mask_from_text(const std::string& text) {
    std::istringstream is(text);
    PruneMask mask;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        NeuronId id;
        if (!(row >> id.layer_index >> id.unit_index)) {
            throw std::runtime_error("mask file: malformed row: " + line);
        }
        mask.prune(id);
    }
    return mask;
}

void save_mask(const PruneMask& mask, const std::string& provenance, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << mask_to_text(mask, provenance);
    if (!os) throw std::runtime_error("write failed: " + path);
}

PruneMask load_mask(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return mask_from_text(buf.str());
}

}  // namespace ttbd
