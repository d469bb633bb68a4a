#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "imle/rng.hpp"
#include "imle/tensor.hpp"

namespace imle {

// Differentiable distance between same-dimension vectors. distance() builds
// graph nodes when its inputs require grad; distance_value() is the cheap
// no-graph path used during sample selection.
class DistanceMetric {
public:
    virtual ~DistanceMetric() = default;
    virtual Tensor distance(const Tensor& a, const Tensor& b) const = 0;
    virtual float distance_value(const std::vector<float>& a,
                                 const std::vector<float>& b) const;
    // Embedding in which this metric is (squared) Euclidean; lets projection
    // indices search in a metric-consistent space.
    virtual std::vector<float> feature_embed(const std::vector<float>& x) const;
    virtual std::string name() const = 0;
};

// Plain Euclidean distance.
class L2Metric : public DistanceMetric {
public:
    Tensor distance(const Tensor& a, const Tensor& b) const override;
    float distance_value(const std::vector<float>& a,
                         const std::vector<float>& b) const override;
    std::string name() const override { return "l2"; }
};

// LPIPS-like stand-in: squared feature differences of a fixed, randomly
// initialized, frozen MLP, normalized per layer and summed, then sqrt.
class PerceptualProxyMetric : public DistanceMetric {
public:
    PerceptualProxyMetric(int input_dim, uint64_t seed, int hidden = 64, int num_layers = 3);

    Tensor distance(const Tensor& a, const Tensor& b) const override;
    std::vector<float> feature_embed(const std::vector<float>& x) const override;
    std::string name() const override { return "perceptual_proxy"; }
    int input_dim() const { return input_dim_; }

private:
    std::vector<Tensor> features(const Tensor& x) const; // raw per-layer activations
    int input_dim_;
    std::vector<Tensor> weights_, biases_; // frozen, requires_grad = false
};

std::unique_ptr<DistanceMetric> make_metric(const std::string& kind, int input_dim,
                                            uint64_t seed);

struct FwvConfig {
    float sigma = 0.3f;
    const DistanceMetric* metric = nullptr; // null -> L2
};

// Gaussian-kernel-weighted variance about the weighted mean:
// w_j = exp(-d(y_j, y)^2 / (2 sigma^2)), FWV = sum w_j ||y_j - ybar_w||^2 / sum w_j.
float faithfulness_weighted_variance(const std::vector<std::vector<float>>& samples,
                                     const std::vector<float>& reference,
                                     const FwvConfig& cfg);

// ||mu_A - mu_B||^2 + Tr(Sig_A + Sig_B - 2 (Sig_A Sig_B)^{1/2}) on phi-features.
float frechet_feature_distance(const std::vector<std::vector<float>>& a,
                               const std::vector<std::vector<float>>& b);

// Moment-form Frechet distance (row-major d x d covariances).
float frechet_from_moments(const std::vector<float>& mu_a, const std::vector<float>& cov_a,
                           const std::vector<float>& mu_b, const std::vector<float>& cov_b,
                           int dim);

// Fraction of centers with at least one sample within Euclidean radius r.
float mode_coverage(const std::vector<std::vector<float>>& samples,
                    const std::vector<std::vector<float>>& centers, float radius);

} // namespace imle
