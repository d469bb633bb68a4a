#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imle/generator.hpp"
#include "imle/metrics.hpp"
#include "imle/optim.hpp"
#include "imle/rng.hpp"

namespace imle {

// Inputs {x_i} and observed outputs {y_i}, exactly one y per x. inputs may
// be empty for the unconditional objective.
struct PairedDataset {
    std::vector<std::vector<float>> inputs;
    std::vector<std::vector<float>> targets;

    int size() const { return static_cast<int>(targets.size()); }
    void validate(bool conditional) const;
};

struct TrainConfig {
    int m = 20;              // samples per example
    int outer_iters = 100;   // N
    int inner_iters = 50;    // M
    float lr = 1e-3f;        // eta
    int batch_size = 64;     // |S|
    int minibatch_size = 16; // |S~|
    uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::Adam;
    int knn_backend_threshold = 4096; // use the projection index when m*|S| exceeds this
    int checkpoint_every = 0;         // 0 = off
    std::string checkpoint_prefix;
    int log_every = 1;

    void validate() const;
};

// Per-example argmin over the candidate pool; ties resolve to lowest index.
struct Selection {
    std::vector<int> index;      // sigma(i)
    std::vector<float> distance; // d(y_i, y~_{i, sigma(i)})
};

struct ImleLossResult {
    float loss; // sum_i min_j d, accumulated in example order
    Selection selection;
};

// Unconditional objective: codes are shared across all targets.
ImleLossResult imle_loss_unconditional(const Generator& gen,
                                       const std::vector<std::vector<float>>& targets,
                                       const std::vector<std::vector<float>>& codes,
                                       const DistanceMetric& metric);

// Conditional objective: codes[i] belongs to example i only.
ImleLossResult imle_loss_conditional(const Generator& gen, const PairedDataset& batch,
                                     const std::vector<std::vector<std::vector<float>>>& codes,
                                     const DistanceMetric& metric);

struct OuterIterLog {
    int iter;
    float mean_selected_distance;
    float post_update_loss;
    double wall_time_ms;
};

struct TrainResult {
    std::vector<OuterIterLog> history;
};

// Hook invoked after each outer iteration (for coverage probes etc).
using TrainHook = std::function<void(int iter, const Generator&)>;

// Algorithm: N outer iterations of {sample batch, draw m codes per example,
// select nearest sample, M inner gradient steps on minibatches with frozen
// codes and fresh forward passes}.
TrainResult train_conditional(Generator& gen, const PairedDataset& dataset,
                              const TrainConfig& cfg, const DistanceMetric& metric,
                              const TrainHook& hook = nullptr);

// Same loop with a shared code pool per iteration and no inputs.
TrainResult train_unconditional(Generator& gen,
                                const std::vector<std::vector<float>>& targets,
                                const TrainConfig& cfg, const DistanceMetric& metric,
                                const TrainHook& hook = nullptr);

// ---- progressive chains ----

struct HierarchicalSelection {
    std::vector<std::vector<float>> codes;   // one per stage
    std::vector<float> stage_distance;       // best distance at each stage
};

// Greedy per-stage code selection: select for stage s against the stage-s
// target with all earlier codes frozen. Train-time only; test-time codes are
// drawn independently.
HierarchicalSelection hierarchical_select(const ProgressiveGenerator& pg,
                                          const std::vector<float>& x,
                                          const std::vector<std::vector<float>>& stage_targets,
                                          const std::vector<int>& pool_sizes,
                                          const DistanceMetric& metric, Rng& rng);

// sum_s d(output_s, stage_target_s); graph-building when outputs carry grad.
Tensor intermediate_loss(const std::vector<Tensor>& stage_outputs,
                         const std::vector<std::vector<float>>& stage_targets,
                         const DistanceMetric& metric);

struct ProgressiveTrainResult {
    std::vector<OuterIterLog> history;
    std::vector<std::vector<float>> per_stage_loss; // per logged iteration
};

ProgressiveTrainResult train_progressive(ProgressiveGenerator& pg, const PairedDataset& dataset,
                                         const std::vector<std::vector<std::vector<float>>>& stage_targets,
                                         const std::vector<int>& pool_sizes,
                                         const TrainConfig& cfg, const DistanceMetric& metric);

// ---- latent traversal ----

struct TraversalPoint {
    std::vector<float> z;
    std::vector<float> output;
    float distance;
};

// Gradient descent over z with theta frozen; records every step. A
// non-finite gradient stops the walk at the last valid state.
std::vector<TraversalPoint> traverse_latent(const Generator& gen, const std::vector<float>& x,
                                            const std::vector<float>& y_target,
                                            const std::vector<float>& z_init, int steps,
                                            float step_size, const DistanceMetric& metric);

} // namespace imle
