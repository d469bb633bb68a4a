#include "imle/imle.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "imle/checkpoint.hpp"
#include "imle/knn.hpp"

namespace imle {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Deals batches without replacement; reshuffles once the pass is exhausted.
class BatchSampler {
public:
    BatchSampler(int n, Rng& rng) : rng_(rng), order_(n) {
        for (int i = 0; i < n; ++i) order_[i] = i;
        rng_.shuffle(order_);
    }

    std::vector<int> next(int batch_size) {
        std::vector<int> batch;
        batch.reserve(batch_size);
        while (static_cast<int>(batch.size()) < batch_size) {
            if (cursor_ == order_.size()) {
                rng_.shuffle(order_);
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

private:
    Rng& rng_;
    std::vector<int> order_;
    size_t cursor_ = 0;
};

// Uniform subset of `count` positions out of n, in draw order.
std::vector<int> draw_subset(int n, int count, Rng& rng) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    count = std::min(count, n);
    for (int i = 0; i < count; ++i) {
        int j = i + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

int argmin_lowest(const std::vector<float>& d) {
    int best = 0;
    for (size_t j = 1; j < d.size(); ++j)
        if (d[j] < d[best]) best = static_cast<int>(j);
    return best;
}

} // namespace

void PairedDataset::validate(bool conditional) const {
    if (targets.empty()) throw std::runtime_error("PairedDataset: empty targets");
    if (conditional && inputs.size() != targets.size())
        throw std::runtime_error("PairedDataset: need exactly one target per input, got " +
                                 std::to_string(inputs.size()) + " inputs and " +
                                 std::to_string(targets.size()) + " targets");
}

void TrainConfig::validate() const {
    if (m < 1) throw std::runtime_error("TrainConfig: m must be >= 1");
    if (outer_iters < 1) throw std::runtime_error("TrainConfig: N must be >= 1");
    if (inner_iters < 0) throw std::runtime_error("TrainConfig: M must be >= 0");
    if (lr <= 0.0f) throw std::runtime_error("TrainConfig: eta must be positive");
    if (batch_size < 1 || minibatch_size < 1 || minibatch_size > batch_size)
        throw std::runtime_error("TrainConfig: need 1 <= |S~| <= |S|");
}

// ---- objectives ----

ImleLossResult imle_loss_unconditional(const Generator& gen,
                                       const std::vector<std::vector<float>>& targets,
                                       const std::vector<std::vector<float>>& codes,
                                       const DistanceMetric& metric) {
    if (targets.empty()) throw std::runtime_error("imle_loss_unconditional: empty targets");
    if (codes.empty()) throw std::runtime_error("imle_loss_unconditional: empty code pool");
    std::vector<std::vector<float>> samples(codes.size());
    for (size_t j = 0; j < codes.size(); ++j) samples[j] = gen.generate({}, codes[j]);

    ImleLossResult res;
    res.loss = 0.0f;
    for (const auto& y : targets) {
        std::vector<float> d(samples.size());
        for (size_t j = 0; j < samples.size(); ++j) d[j] = metric.distance_value(samples[j], y);
        int best = argmin_lowest(d);
        res.selection.index.push_back(best);
        res.selection.distance.push_back(d[best]);
        res.loss += d[best];
    }
    return res;
}

ImleLossResult imle_loss_conditional(const Generator& gen, const PairedDataset& batch,
                                     const std::vector<std::vector<std::vector<float>>>& codes,
                                     const DistanceMetric& metric) {
    batch.validate(true);
    if (codes.size() != batch.targets.size())
        throw std::runtime_error("imle_loss_conditional: need one code pool per example");
    ImleLossResult res;
    res.loss = 0.0f;
    for (int i = 0; i < batch.size(); ++i) {
        if (codes[i].empty())
            throw std::runtime_error("imle_loss_conditional: empty code pool for example " +
                                     std::to_string(i));
        std::vector<float> d(codes[i].size());
        for (size_t j = 0; j < codes[i].size(); ++j)
            d[j] = metric.distance_value(gen.generate(batch.inputs[i], codes[i][j]),
                                         batch.targets[i]);
        int best = argmin_lowest(d);
        res.selection.index.push_back(best);
        res.selection.distance.push_back(d[best]);
        res.loss += d[best];
    }
    return res;
}

// ---- training ----

namespace {

struct SelectedExample {
    int data_index;
    std::vector<float> code;
    float distance;
};

// One inner phase of Algorithm-style training: M minibatch steps on the
// frozen (example, code) pairs, outputs recomputed under the current theta.
float run_inner_steps(const Generator& gen, const PairedDataset& dataset,
                      const std::vector<SelectedExample>& selected, const TrainConfig& cfg,
                      const DistanceMetric& metric, Optimizer& opt, Rng& batch_rng,
                      bool conditional) {
    float last_loss = 0.0f;
    bool have_loss = false;
    for (int q = 0; q < cfg.inner_iters; ++q) {
        auto mb = draw_subset(static_cast<int>(selected.size()), cfg.minibatch_size, batch_rng);
        Tensor loss = Tensor::scalar(0.0f);
        for (int pos : mb) {
            const auto& ex = selected[pos];
            Tensor x = conditional
                           ? Tensor::from({static_cast<int>(dataset.inputs[ex.data_index].size())},
                                          dataset.inputs[ex.data_index])
                           : Tensor();
            Tensor z = Tensor::from({static_cast<int>(ex.code.size())}, ex.code);
            Tensor pred = gen.forward(x, z);
            Tensor y = Tensor::from({static_cast<int>(dataset.targets[ex.data_index].size())},
                                    dataset.targets[ex.data_index]);
            Tensor d = metric.distance(pred, y);
            if (!std::isfinite(d.item()))
                throw std::runtime_error("train: non-finite loss at example " +
                                         std::to_string(ex.data_index));
            loss = add(loss, d);
        }
        loss = scale(loss, 1.0f / static_cast<float>(mb.size()));
        backward(loss);
        opt.step();
        opt.zero_grad();
        last_loss = loss.item();
        have_loss = true;
    }
    return have_loss ? last_loss : -1.0f;
}

TrainResult train_impl(Generator& gen, const PairedDataset& dataset, const TrainConfig& cfg,
                       const DistanceMetric& metric, const TrainHook& hook, bool conditional) {
    dataset.validate(conditional);
    cfg.validate();

    Rng code_rng = Rng::stream(cfg.seed, "codes");
    Rng batch_rng = Rng::stream(cfg.seed, "batches");
    Optimizer opt(gen.parameters(), {cfg.optimizer, cfg.lr});
    BatchSampler sampler(dataset.size(), batch_rng);
    int batch_size = std::min(cfg.batch_size, dataset.size());
    int latent_dim = gen.config().latent_dim;
    bool use_knn_backend = !conditional && cfg.m * batch_size > cfg.knn_backend_threshold;

    TrainResult result;
    double t0 = now_ms();
    for (int p = 0; p < cfg.outer_iters; ++p) {
        auto batch = sampler.next(batch_size);
        std::vector<SelectedExample> selected;
        selected.reserve(batch.size());

        if (conditional) {
            for (int i : batch) {
                std::vector<std::vector<float>> pool(cfg.m);
                std::vector<float> d(cfg.m);
                for (int j = 0; j < cfg.m; ++j) {
                    pool[j] = sample_latent(latent_dim, code_rng);
                    d[j] = metric.distance_value(gen.generate(dataset.inputs[i], pool[j]),
                                                 dataset.targets[i]);
                }
                int best = argmin_lowest(d);
                selected.push_back({i, std::move(pool[best]), d[best]});
            }
        } else {
            // shared code pool; optionally matched through the projection index
            std::vector<std::vector<float>> pool(cfg.m);
            std::vector<std::vector<float>> samples(cfg.m);
            for (int j = 0; j < cfg.m; ++j) {
                pool[j] = sample_latent(latent_dim, code_rng);
                samples[j] = gen.generate({}, pool[j]);
            }
            if (use_knn_backend) {
                std::vector<std::vector<float>> embedded(cfg.m);
                for (int j = 0; j < cfg.m; ++j) embedded[j] = metric.feature_embed(samples[j]);
                ProjectionIndexParams ip;
                ip.seed = cfg.seed;
                PrioritizedProjectionIndex index(embedded, ip);
                for (int i : batch) {
                    auto nn = index.query(metric.feature_embed(dataset.targets[i]), 1, 0);
                    int best = nn[0].id;
                    selected.push_back(
                        {i, pool[best], metric.distance_value(samples[best], dataset.targets[i])});
                }
            } else {
                for (int i : batch) {
                    std::vector<float> d(cfg.m);
                    for (int j = 0; j < cfg.m; ++j)
                        d[j] = metric.distance_value(samples[j], dataset.targets[i]);
                    int best = argmin_lowest(d);
                    selected.push_back({i, pool[best], d[best]});
                }
            }
        }

        float mean_sel = 0.0f;
        for (const auto& s : selected) mean_sel += s.distance;
        mean_sel /= static_cast<float>(selected.size());

        float post = run_inner_steps(gen, dataset, selected, cfg, metric, opt, batch_rng,
                                     conditional);

        if (cfg.log_every > 0 && p % cfg.log_every == 0)
            result.history.push_back({p, mean_sel, post, now_ms() - t0});
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
            (p + 1) % cfg.checkpoint_every == 0) {
            auto params = gen.parameters();
            save_checkpoint(params, cfg.checkpoint_prefix + "_iter" + std::to_string(p + 1));
        }
        if (hook) hook(p, gen);
    }
    return result;
}

} // namespace

TrainResult train_conditional(Generator& gen, const PairedDataset& dataset,
                              const TrainConfig& cfg, const DistanceMetric& metric,
                              const TrainHook& hook) {
    return train_impl(gen, dataset, cfg, metric, hook, true);
}

TrainResult train_unconditional(Generator& gen, const std::vector<std::vector<float>>& targets,
                                const TrainConfig& cfg, const DistanceMetric& metric,
                                const TrainHook& hook) {
    PairedDataset ds;
    ds.targets = targets;
    return train_impl(gen, ds, cfg, metric, hook, false);
}

// ---- progressive ----

HierarchicalSelection hierarchical_select(const ProgressiveGenerator& pg,
                                          const std::vector<float>& x,
                                          const std::vector<std::vector<float>>& stage_targets,
                                          const std::vector<int>& pool_sizes,
                                          const DistanceMetric& metric, Rng& rng) {
    int stages = pg.num_stages();
    if (stages < 1) throw std::runtime_error("hierarchical_select: no stages");
    if (static_cast<int>(stage_targets.size()) != stages ||
        static_cast<int>(pool_sizes.size()) != stages)
        throw std::runtime_error("hierarchical_select: per-stage target/pool count mismatch");

    HierarchicalSelection sel;
    std::vector<float> cur = x;
    int latent_dim = pg.config().latent_dim;
    for (int s = 0; s < stages; ++s) {
        if (pool_sizes[s] < 1)
            throw std::runtime_error("hierarchical_select: pool size must be >= 1 at stage " +
                                     std::to_string(s));
        std::vector<std::vector<float>> pool(pool_sizes[s]);
        std::vector<std::vector<float>> outs(pool_sizes[s]);
        std::vector<float> d(pool_sizes[s]);
        for (int j = 0; j < pool_sizes[s]; ++j) {
            pool[j] = sample_latent(latent_dim, rng);
            outs[j] = pg.stage(s).generate(cur, pool[j]);
            d[j] = metric.distance_value(outs[j], stage_targets[s]);
        }
        int best = argmin_lowest(d);
        sel.codes.push_back(std::move(pool[best]));
        sel.stage_distance.push_back(d[best]);
        cur = std::move(outs[best]);
    }
    return sel;
}

Tensor intermediate_loss(const std::vector<Tensor>& stage_outputs,
                         const std::vector<std::vector<float>>& stage_targets,
                         const DistanceMetric& metric) {
    if (stage_outputs.size() != stage_targets.size())
        throw std::runtime_error("intermediate_loss: stage count mismatch");
    Tensor total = Tensor::scalar(0.0f);
    for (size_t s = 0; s < stage_outputs.size(); ++s) {
        Tensor y = Tensor::from({static_cast<int>(stage_targets[s].size())}, stage_targets[s]);
        total = add(total, metric.distance(stage_outputs[s], y));
    }
    return total;
}

ProgressiveTrainResult train_progressive(
    ProgressiveGenerator& pg, const PairedDataset& dataset,
    const std::vector<std::vector<std::vector<float>>>& stage_targets,
    const std::vector<int>& pool_sizes, const TrainConfig& cfg, const DistanceMetric& metric) {
    dataset.validate(true);
    cfg.validate();
    int stages = pg.num_stages();

    Rng code_rng = Rng::stream(cfg.seed, "codes");
    Rng batch_rng = Rng::stream(cfg.seed, "batches");
    Optimizer opt(pg.parameters(), {cfg.optimizer, cfg.lr});
    BatchSampler sampler(dataset.size(), batch_rng);
    int batch_size = std::min(cfg.batch_size, dataset.size());

    struct SelectedProg {
        int data_index;
        std::vector<std::vector<float>> codes;
    };

    ProgressiveTrainResult result;
    double t0 = now_ms();
    for (int p = 0; p < cfg.outer_iters; ++p) {
        auto batch = sampler.next(batch_size);
        std::vector<SelectedProg> selected;
        std::vector<float> stage_mean(stages, 0.0f);
        float mean_sel = 0.0f;
        for (int i : batch) {
            std::vector<std::vector<float>> targets_i(stages);
            for (int s = 0; s < stages; ++s) targets_i[s] = stage_targets[s][i];
            auto sel = hierarchical_select(pg, dataset.inputs[i], targets_i, pool_sizes, metric,
                                           code_rng);
            for (int s = 0; s < stages; ++s) {
                stage_mean[s] += sel.stage_distance[s];
                mean_sel += sel.stage_distance[s];
            }
            selected.push_back({i, std::move(sel.codes)});
        }
        for (auto& v : stage_mean) v /= static_cast<float>(batch.size());
        mean_sel /= static_cast<float>(batch.size());

        float post = -1.0f;
        for (int q = 0; q < cfg.inner_iters; ++q) {
            auto mb = draw_subset(static_cast<int>(selected.size()), cfg.minibatch_size,
                                  batch_rng);
            Tensor loss = Tensor::scalar(0.0f);
            for (int pos : mb) {
                const auto& ex = selected[pos];
                Tensor x = Tensor::from({static_cast<int>(dataset.inputs[ex.data_index].size())},
                                        dataset.inputs[ex.data_index]);
                std::vector<Tensor> zs;
                for (const auto& code : ex.codes)
                    zs.push_back(Tensor::from({static_cast<int>(code.size())}, code));
                auto outs = pg.forward_all(x, zs);
                std::vector<std::vector<float>> targets_i(stages);
                for (int s = 0; s < stages; ++s) targets_i[s] = stage_targets[s][ex.data_index];
                Tensor d = intermediate_loss(outs, targets_i, metric);
                if (!std::isfinite(d.item()))
                    throw std::runtime_error("train_progressive: non-finite loss at example " +
                                             std::to_string(ex.data_index));
                loss = add(loss, d);
            }
            loss = scale(loss, 1.0f / static_cast<float>(mb.size()));
            backward(loss);
            opt.step();
            opt.zero_grad();
            post = loss.item();
        }

        if (cfg.log_every > 0 && p % cfg.log_every == 0) {
            result.history.push_back({p, mean_sel, post, now_ms() - t0});
            result.per_stage_loss.push_back(stage_mean);
        }
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
            (p + 1) % cfg.checkpoint_every == 0) {
            auto params = pg.parameters();
            save_checkpoint(params, cfg.checkpoint_prefix + "_iter" + std::to_string(p + 1));
        }
    }
    return result;
}

// ---- latent traversal ----

std::vector<TraversalPoint> traverse_latent(const Generator& gen, const std::vector<float>& x,
                                            const std::vector<float>& y_target,
                                            const std::vector<float>& z_init, int steps,
                                            float step_size, const DistanceMetric& metric) {
    if (steps < 0) throw std::runtime_error("traverse_latent: steps must be >= 0");
    Tensor z = Tensor::from({static_cast<int>(z_init.size())}, z_init, true);
    Tensor y = Tensor::from({static_cast<int>(y_target.size())}, y_target);
    Optimizer opt({{"z", z}}, {OptimizerKind::Adam, step_size});

    std::vector<TraversalPoint> trajectory;
    auto record_state = [&](const Tensor& out, float dist) {
        trajectory.push_back({z.data(), out.data(), dist});
    };

    for (int step = 0; step <= steps; ++step) {
        Tensor xt = gen.config().input_dim == 0
                        ? Tensor()
                        : Tensor::from({static_cast<int>(x.size())}, x);
        Tensor out = gen.forward(xt, z);
        Tensor d = metric.distance(out, y);
        record_state(out, d.item());
        if (step == steps) break;
        backward(d);
        bool finite = true;
        for (float g : z.grad())
            if (!std::isfinite(g)) finite = false;
        if (!finite) break; // keep the last valid state
        opt.step();
        opt.zero_grad();
    }
    return trajectory;
}

} // namespace imle
