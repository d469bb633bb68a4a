#include "imle/metrics.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace imle {

float DistanceMetric::distance_value(const std::vector<float>& a,
                                     const std::vector<float>& b) const {
    Tensor ta = Tensor::from({static_cast<int>(a.size())}, a);
    Tensor tb = Tensor::from({static_cast<int>(b.size())}, b);
    return distance(ta, tb).item();
}

std::vector<float> DistanceMetric::feature_embed(const std::vector<float>& x) const {
    return x;
}

// ---- L2 ----

Tensor L2Metric::distance(const Tensor& a, const Tensor& b) const {
    Tensor d = sub(a, b);
    return sqrt_op(sum(mul(d, d)));
}

float L2Metric::distance_value(const std::vector<float>& a,
                               const std::vector<float>& b) const {
    if (a.size() != b.size()) throw ShapeError("l2: dim mismatch");
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// ---- perceptual proxy ----

PerceptualProxyMetric::PerceptualProxyMetric(int input_dim, uint64_t seed, int hidden,
                                             int num_layers)
    : input_dim_(input_dim) {
    Rng rng = Rng::stream(seed, "perceptual_proxy/" + std::to_string(input_dim));
    int in = input_dim;
    for (int k = 0; k < num_layers; ++k) {
        float std = std::sqrt(2.0f / static_cast<float>(in));
        std::vector<float> w(static_cast<size_t>(hidden) * in);
        for (auto& x : w) x = static_cast<float>(rng.normal()) * std;
        weights_.push_back(Tensor::from({hidden, in}, std::move(w)));
        std::vector<float> b(hidden);
        for (auto& x : b) x = static_cast<float>(rng.normal()) * 0.1f;
        biases_.push_back(Tensor::from({hidden}, std::move(b)));
        in = hidden;
    }
}

std::vector<Tensor> PerceptualProxyMetric::features(const Tensor& x) const {
    if (x.shape() != Shape{input_dim_})
        throw ShapeError("perceptual_proxy: input dim " + std::to_string(x.size()) +
                         " != " + std::to_string(input_dim_));
    std::vector<Tensor> feats;
    Tensor h = x;
    for (size_t k = 0; k < weights_.size(); ++k) {
        h = leaky_relu(add(matmul(weights_[k], h), biases_[k]));
        feats.push_back(h);
    }
    return feats;
}

Tensor PerceptualProxyMetric::distance(const Tensor& a, const Tensor& b) const {
    auto fa = features(a);
    auto fb = features(b);
    Tensor total = Tensor::scalar(0.0f);
    for (size_t k = 0; k < fa.size(); ++k) {
        Tensor d = sub(fa[k], fb[k]);
        total = add(total, scale(sum(mul(d, d)), 1.0f / static_cast<float>(fa[k].size())));
    }
    return sqrt_op(total);
}

std::vector<float> PerceptualProxyMetric::feature_embed(const std::vector<float>& x) const {
    Tensor xt = Tensor::from({static_cast<int>(x.size())}, x);
    auto fs = features(xt);
    std::vector<float> out;
    for (const auto& f : fs) {
        float inv = 1.0f / std::sqrt(static_cast<float>(f.size()));
        for (float v : f.data()) out.push_back(v * inv);
    }
    return out;
}

std::unique_ptr<DistanceMetric> make_metric(const std::string& kind, int input_dim,
                                            uint64_t seed) {
    if (kind == "l2") return std::make_unique<L2Metric>();
    if (kind == "perceptual_proxy")
        return std::make_unique<PerceptualProxyMetric>(input_dim, seed);
    throw std::runtime_error("make_metric: unknown metric kind '" + kind + "'");
}

// ---- faithfulness-weighted variance ----

float faithfulness_weighted_variance(const std::vector<std::vector<float>>& samples,
                                     const std::vector<float>& reference,
                                     const FwvConfig& cfg) {
    if (samples.empty())
        throw std::runtime_error("faithfulness_weighted_variance: need at least one sample");
    if (cfg.sigma <= 0.0f)
        throw std::runtime_error("faithfulness_weighted_variance: sigma must be positive");
    L2Metric l2;
    const DistanceMetric& metric = cfg.metric ? *cfg.metric : static_cast<DistanceMetric&>(l2);

    size_t dim = samples[0].size();
    std::vector<double> weights(samples.size());
    double wsum = 0.0;
    for (size_t j = 0; j < samples.size(); ++j) {
        double d = metric.distance_value(samples[j], reference);
        weights[j] = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
        wsum += weights[j];
    }
    if (wsum <= 0.0)
        throw std::runtime_error(
            "faithfulness_weighted_variance: all weights underflowed to zero; "
            "increase the bandwidth sigma");

    std::vector<double> wmean(dim, 0.0);
    for (size_t j = 0; j < samples.size(); ++j)
        for (size_t i = 0; i < dim; ++i) wmean[i] += weights[j] * samples[j][i];
    for (auto& m : wmean) m /= wsum;

    double acc = 0.0;
    for (size_t j = 0; j < samples.size(); ++j) {
        double sq = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            double d = samples[j][i] - wmean[i];
            sq += d * d;
        }
        acc += weights[j] * sq;
    }
    return static_cast<float>(acc / wsum);
}

// ---- Frechet feature distance ----

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Symmetric PSD square root via eigendecomposition, eigenvalues clamped at 0.
Mat sym_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_impl(const Vec& mu_a, const Mat& cov_a, const Vec& mu_b, const Mat& cov_b) {
    // Tr sqrtm(Sa Sb) = Tr sqrtm(sqrt(Sa) Sb sqrt(Sa)), the latter symmetric PSD
    Mat ra = sym_sqrt(cov_a);
    Mat inner = sym_sqrt(ra * cov_b * ra);
    double mean_term = (mu_a - mu_b).squaredNorm();
    double tr = cov_a.trace() + cov_b.trace() - 2.0 * inner.trace();
    double d = mean_term + tr;
    return d < 0.0 ? 0.0 : d;
}

void moments(const std::vector<std::vector<float>>& set, Vec& mu, Mat& cov) {
    const int n = static_cast<int>(set.size());
    const int d = static_cast<int>(set[0].size());
    Mat x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = set[i][j];
    mu = x.colwise().mean();
    Mat centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / std::max(n - 1, 1);
    cov += 1e-6 * Mat::Identity(d, d); // small-sample regularization
}

} // namespace

float frechet_feature_distance(const std::vector<std::vector<float>>& a,
                               const std::vector<std::vector<float>>& b) {
    if (a.empty() || b.empty())
        throw std::runtime_error("frechet_feature_distance: empty sample set");
    Vec mu_a, mu_b;
    Mat cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);
    return static_cast<float>(frechet_impl(mu_a, cov_a, mu_b, cov_b));
}

float frechet_from_moments(const std::vector<float>& mu_a, const std::vector<float>& cov_a,
                           const std::vector<float>& mu_b, const std::vector<float>& cov_b,
                           int dim) {
    Vec ma(dim), mb(dim);
    Mat ca(dim, dim), cb(dim, dim);
    for (int i = 0; i < dim; ++i) {
        ma(i) = mu_a[i];
        mb(i) = mu_b[i];
        for (int j = 0; j < dim; ++j) {
            ca(i, j) = cov_a[static_cast<size_t>(i) * dim + j];
            cb(i, j) = cov_b[static_cast<size_t>(i) * dim + j];
        }
    }
    return static_cast<float>(frechet_impl(ma, ca, mb, cb));
}

// ---- mode coverage ----

float mode_coverage(const std::vector<std::vector<float>>& samples,
                    const std::vector<std::vector<float>>& centers, float radius) {
    if (centers.empty()) throw std::runtime_error("mode_coverage: need at least one center");
    int covered = 0;
    for (const auto& c : centers) {
        for (const auto& s : samples) {
            float acc = 0.0f;
            for (size_t i = 0; i < c.size(); ++i) {
                float d = s[i] - c[i];
                acc += d * d;
            }
            if (std::sqrt(acc) <= radius) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<float>(covered) / static_cast<float>(centers.size());
}

} // namespace imle
