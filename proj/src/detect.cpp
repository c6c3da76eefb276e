#include "ttbd/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ttbd/parallel.hpp"
#include "ttbd/rng.hpp"

namespace ttbd {

const char* detect_method_name(DetectMethod m) {
    switch (m) {
        case DetectMethod::DDP: return "ddp";
        case DetectMethod::TeCo: return "teco";
        case DetectMethod::Dual: return "dual";
    }
    return "?";
}

DetectMethod parse_detect_method(const std::string& name) {
    if (name == "ddp") return DetectMethod::DDP;
    if (name == "teco") return DetectMethod::TeCo;
    if (name == "dual") return DetectMethod::Dual;
    throw std::invalid_argument("unknown detection method: " + name);
}

void DetectionReport::check_consistent() const {
    if (ranking.size() != scores.size()) {
        throw std::runtime_error("detection report: ranking is not a permutation of samples");
    }
    std::vector<std::uint8_t> seen(scores.size(), 0);
    for (std::size_t i : ranking) {
        if (i >= scores.size() || seen[i]) {
            throw std::runtime_error("detection report: ranking is not a permutation");
        }
        seen[i] = 1;
    }
    if (detected.size() > ranking.size() ||
        !std::equal(detected.begin(), detected.end(), ranking.begin())) {
        throw std::runtime_error("detection report: detected is not a prefix of ranking");
    }
}

namespace {

// Ranking = indices ordered by score (direction per method), ties broken by
// ascending sample index.
std::vector<std::size_t> rank_by_score(const std::vector<double>& scores, bool descending) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return descending ? scores[a] > scores[b] : scores[a] < scores[b];
        return a < b;
    });
    return order;
}

std::vector<std::size_t> take_prefix(const std::vector<std::size_t>& ranking, std::size_t n) {
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

int ddp_score(const Model& model, const Tensor& batch_images, std::size_t sample_index,
              const std::vector<int>& original_predictions, const DdpParams& params,
              const std::map<NeuronId, double>* acc_shapley) {
    const std::size_t batch_size = batch_images.shape.at(0);
    if (sample_index >= batch_size) throw std::out_of_range("ddp_score: sample index out of range");
    if (original_predictions.size() != batch_size) {
        throw std::invalid_argument("ddp_score: original predictions size mismatch");
    }

    const std::vector<NeuronId> players = model.prunable_neurons();

    // This sample's activation profile steers which neurons get pruned.
    Tensor sample({1, batch_images.shape[1], batch_images.shape[2], batch_images.shape[3]});
    sample.data = batch_images.slice_sample(sample_index).data;
    const auto [logits, record] = forward_with_activations(model, sample);
    (void)logits;

    std::vector<std::size_t> order(players.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (record.mean_activation[a] != record.mean_activation[b]) {
            return record.mean_activation[a] > record.mean_activation[b];
        }
        return record.neurons[a] < record.neurons[b];
    });

    std::vector<NeuronId> candidates;
    if (acc_shapley) {
        // Keep only the bottom-l fraction by ACC Shapley; the top clean-critical
        // neurons are protected from sample-guided pruning.
        std::vector<std::size_t> by_acc(players.size());
        std::iota(by_acc.begin(), by_acc.end(), 0);
        std::stable_sort(by_acc.begin(), by_acc.end(), [&](std::size_t a, std::size_t b) {
            const double va = acc_shapley->at(players[a]);
            const double vb = acc_shapley->at(players[b]);
            if (va != vb) return va < vb;
            return players[a] < players[b];
        });
        const std::size_t keep = static_cast<std::size_t>(
            params.shapley_keep_fraction * static_cast<double>(players.size()));
        std::vector<std::uint8_t> allowed(players.size(), 0);
        for (std::size_t i = 0; i < keep; ++i) allowed[by_acc[i]] = 1;
        for (std::size_t i : order) {
            if (allowed[i]) candidates.push_back(record.neurons[i]);
        }
        if (candidates.empty()) {
            throw std::invalid_argument(
                "ddp_score: shapley_keep_fraction=" +
                std::to_string(params.shapley_keep_fraction) +
                " leaves no candidate neurons");
        }
    } else {
        for (std::size_t i : order) candidates.push_back(record.neurons[i]);
    }

    const std::size_t max_prune = static_cast<std::size_t>(
        params.budget_fraction * static_cast<double>(players.size()));

    MaskedBatchEvaluator eval(model, batch_images);
    std::size_t pruned = 0;
    std::size_t next = 0;
    int pcs = 0;
    while (pruned < max_prune && next < candidates.size()) {
        const std::size_t group =
            std::min({params.prune_step, max_prune - pruned, candidates.size() - next});
        eval.prune_many({candidates.begin() + static_cast<std::ptrdiff_t>(next),
                         candidates.begin() + static_cast<std::ptrdiff_t>(next + group)});
        next += group;
        pruned += group;

        int flips = 0;
        const auto& preds = eval.predictions();
        for (std::size_t i = 0; i < batch_size; ++i) {
            if (preds[i] != original_predictions[i]) ++flips;
        }
        pcs = flips;
        const double agreement =
            1.0 - static_cast<double>(flips) / static_cast<double>(batch_size);
        if (agreement < params.agreement_threshold) break;
    }
    return pcs;
}

namespace {

std::string ddp_params_text(std::size_t n_detect, const DdpParams& p, bool filtered) {
    std::ostringstream os;
    os << "n_detect=" << n_detect << " prune_step=" << p.prune_step
       << " budget_fraction=" << p.budget_fraction
       << " agreement_threshold=" << p.agreement_threshold;
    if (filtered) os << " shapley_keep_fraction=" << p.shapley_keep_fraction;
    return os.str();
}

}  // namespace

DetectionReport ddp_detect(const Model& model, const Tensor& batch_images, std::size_t n_detect,
                           const DdpParams& params, int workers,
                           const std::map<NeuronId, double>* acc_shapley) {
    const std::size_t batch_size = batch_images.shape.at(0);
    if (n_detect > batch_size) {
        throw std::invalid_argument("n_detect exceeds batch size");
    }
    const std::vector<int> original = predict(model, batch_images);

    DetectionReport report;
    report.method = DetectMethod::DDP;
    report.scores.assign(batch_size, 0.0);
    parallel_for(batch_size, workers, [&](std::size_t i) {
        report.scores[i] =
            static_cast<double>(ddp_score(model, batch_images, i, original, params, acc_shapley));
    });
    report.ranking = rank_by_score(report.scores, /*descending=*/true);
    report.detected = take_prefix(report.ranking, n_detect);
    report.params_text = ddp_params_text(n_detect, params, acc_shapley != nullptr);
    return report;
}

DetectionReport teco_detect(const Model& model, const Tensor& batch_images, std::size_t n_detect,
                            const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                            int workers) {
    const std::size_t batch_size = batch_images.shape.at(0);
    if (n_detect > batch_size) {
        throw std::invalid_argument("n_detect exceeds batch size");
    }
    DetectionReport report;
    report.method = DetectMethod::TeCo;
    report.scores.assign(batch_size, 0.0);
    parallel_for(batch_size, workers, [&](std::size_t i) {
        const Tensor img = batch_images.slice_sample(i);
        report.scores[i] = crc_score(model, img, kinds, derive_seed(seed, i));
    });
    report.ranking = rank_by_score(report.scores, /*descending=*/false);
    report.detected = take_prefix(report.ranking, n_detect);
    std::ostringstream os;
    os << "n_detect=" << n_detect << " kinds=" << kinds.size() << " seed=" << seed;
    report.params_text = os.str();
    return report;
}

DetectionReport dual_detect_sparse(const Model& model, const std::vector<Tensor>& batches,
                                   std::size_t n_detect, const DdpParams& ddp_params,
                                   const std::vector<CorruptionKind>& kinds, std::uint64_t seed,
                                   int workers) {
    if (batches.empty()) throw std::invalid_argument("dual_detect_sparse needs >= 1 batch");

    // Pool the batches; DDP scores keep their per-batch context (PCS compares
    // against the sample's own batch), CRC is per-sample anyway.
    std::size_t total = 0;
    for (const Tensor& b : batches) total += b.shape.at(0);
    if (n_detect > total) throw std::invalid_argument("n_detect exceeds pooled sample count");

    std::vector<double> ddp_scores;
    ddp_scores.reserve(total);
    for (const Tensor& b : batches) {
        DetectionReport r = ddp_detect(model, b, 0, ddp_params, workers);
        ddp_scores.insert(ddp_scores.end(), r.scores.begin(), r.scores.end());
    }

    Tensor pooled({total, batches[0].shape[1], batches[0].shape[2], batches[0].shape[3]});
    std::size_t off = 0;
    for (const Tensor& b : batches) {
        if (b.shape[1] != pooled.shape[1] || b.shape[2] != pooled.shape[2] ||
            b.shape[3] != pooled.shape[3]) {
            throw std::invalid_argument("dual_detect_sparse: batch shapes disagree");
        }
        std::copy(b.data.begin(), b.data.end(),
                  pooled.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += b.size();
    }
    const DetectionReport teco = teco_detect(model, pooled, 0, kinds, seed, workers);

    // 1-based rank per method, then rank-sum fusion (invariant to any
    // monotone rescaling of the raw scores).
    const auto ddp_rank_order = rank_by_score(ddp_scores, /*descending=*/true);
    std::vector<std::size_t> r_ddp(total), r_teco(total);
    for (std::size_t pos = 0; pos < total; ++pos) r_ddp[ddp_rank_order[pos]] = pos + 1;
    for (std::size_t pos = 0; pos < total; ++pos) r_teco[teco.ranking[pos]] = pos + 1;

    DetectionReport report;
    report.method = DetectMethod::Dual;
    report.scores.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        report.scores[i] = static_cast<double>(r_ddp[i] + r_teco[i]);
    }
    report.ranking = rank_by_score(report.scores, /*descending=*/false);
    report.detected = take_prefix(report.ranking, n_detect);
    std::ostringstream os;
    os << "n_detect=" << n_detect << " batches=" << batches.size() << " fusion=rank-sum "
       << ddp_params_text(n_detect, ddp_params, false) << " teco_kinds=" << kinds.size()
       << " seed=" << seed;
    report.params_text = os.str();
    return report;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

std::string detection_report_to_text(const DetectionReport& r) {
    std::ostringstream os;
    os << "# ttbd detection report v1\n";
    os << "method=" << detect_method_name(r.method) << "\n";
    os << "params=" << r.params_text << "\n";
    os << "samples=" << r.scores.size() << "\n";
    os.precision(17);
    os << "scores=";
    for (std::size_t i = 0; i < r.scores.size(); ++i) os << (i ? " " : "") << r.scores[i];
    os << "\nranking=";
    for (std::size_t i = 0; i < r.ranking.size(); ++i) os << (i ? " " : "") << r.ranking[i];
    os << "\ndetected=";
    for (std::size_t i = 0; i < r.detected.size(); ++i) os << (i ? " " : "") << r.detected[i];
    os << "\n";
    return os.str();
}

DetectionReport detection_report_from_text(const std::string& text) {
    std::istringstream is(text);
    DetectionReport r;
    std::string line;
    std::size_t samples = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("detection report: bad line " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "method") {
            r.method = parse_detect_method(val);
        } else if (key == "params") {
            r.params_text = val;
        } else if (key == "samples") {
            samples = std::stoul(val);
        } else if (key == "scores" || key == "ranking" || key == "detected") {
            std::istringstream vs(val);
            if (key == "scores") {
                double d;
                while (vs >> d) r.scores.push_back(d);
            } else {
                std::size_t u;
                auto& dst = key == "ranking" ? r.ranking : r.detected;
                while (vs >> u) dst.push_back(u);
            }
        } else {
            throw std::runtime_error("detection report: unknown key " + key);
        }
    }
    if (r.scores.size() != samples) {
        throw std::runtime_error("detection report: score count mismatch");
    }
    r.check_consistent();
    return r;
}

void save_detection_report(const DetectionReport& r, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << detection_report_to_text(r);
    if (!os) throw std::runtime_error("write failed: " + path);
}

DetectionReport load_detection_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return detection_report_from_text(buf.str());
}

}  // namespace ttbd
