#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ttbd/model.hpp"
#include "ttbd/tensor.hpp"

namespace ttbd {

/// One pruning walk through a coalition game: all players start alive, prune()
/// kills one at a time, value() reports the current coalition's worth.
/// reset() must restore the fresh all-alive state.
class ShapleyWalk {
public:
    virtual ~ShapleyWalk() = default;
    virtual void reset() = 0;
    virtual void prune(std::size_t player) = 0;
    virtual double value() = 0;
};

using WalkFactory = std::function<std::unique_ptr<ShapleyWalk>()>;

/// Coalition -> value lookup for small synthetic games and the exact oracle.
using CoalitionValueFn = std::function<double(const std::vector<std::uint8_t>& alive)>;

/// Exact Shapley by full coalition enumeration; the testing oracle for the
/// Monte-Carlo estimator. Guarded to n <= 12 players.
std::vector<double> exact_shapley(std::size_t n_players, const CoalitionValueFn& value);

/// Wraps a coalition table as a walk (for estimating synthetic games).
std::unique_ptr<ShapleyWalk> make_table_walk(std::size_t n_players, CoalitionValueFn value);

struct McShapleyParams {
    int permutations = 40;
    double truncation_threshold = 0.2;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct ShapleyEstimate {
    std::vector<double> values;      // mean signed marginal per player
    std::vector<double> abs_values;  // mean |marginal| per player
    std::vector<int> sample_counts;  // walks where the marginal was measured
    int iterations = 0;
    double truncation_threshold = 0.0;
};

/// Truncated Monte-Carlo Shapley: averages per-player marginals over seeded
/// random permutations, pruning along each permutation from the full
/// coalition. When the value drops below the truncation threshold the walk
/// stops and the remaining players record a zero marginal. Deterministic for
/// a fixed (seed, permutations, threshold) regardless of worker count.
ShapleyEstimate mc_shapley(std::size_t n_players, const WalkFactory& make_walk,
                           const McShapleyParams& params);

// -- neuron attribution on a model -------------------------------------------

/// Per-neuron Shapley estimates for one value function.
struct ShapleyReport {
    std::vector<NeuronId> players;
    std::vector<double> values;
    std::vector<double> abs_values;
    std::vector<int> sample_counts;
    int iterations = 0;
    double truncation_threshold = 0.0;
};

/// Pseudo-label agreement value function: fraction of the evaluation images
/// whose masked prediction equals the reference (the original model's own
/// prediction). V(all alive) == 1 by construction.
WalkFactory make_agreement_walk_factory(const Model& model, Tensor eval_images,
                                        std::vector<int> reference,
                                        std::vector<NeuronId> players);

ShapleyReport estimate_neuron_shapley(const Model& model, const std::vector<NeuronId>& players,
                                      const Tensor& eval_images, const std::vector<int>& reference,
                                      const McShapleyParams& params);

/// Combined per-neuron table consumed by the repair stage and persisted as
/// the module's external artifact.
struct NeuronAttribution {
    std::vector<NeuronId> players;
    std::vector<double> asr_shapley;      // signed, from the detected-sample value fn
    std::vector<double> acc_abs_shapley;  // absolute, from the full-batch value fn
    std::vector<int> asr_samples;
    std::vector<int> acc_samples;
    int iterations = 0;
    double asr_truncation = 0.0;
    double acc_truncation = 0.0;
};

NeuronAttribution combine_attribution(const ShapleyReport& asr, const ShapleyReport& acc);

std::string attribution_to_text(const NeuronAttribution& a);
NeuronAttribution attribution_from_text(const std::string& text);
void save_attribution(const NeuronAttribution& a, const std::string& path);
NeuronAttribution load_attribution(const std::string& path);

}  // namespace ttbd
