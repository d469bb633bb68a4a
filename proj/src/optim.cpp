#include "imle/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace imle {

Optimizer::Optimizer(ParamList params, Options opts)
    : params_(std::move(params)), opts_(opts) {
    if (opts_.kind == OptimizerKind::Adam) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].tensor.size(), 0.0f);
            v_[i].assign(params_[i].tensor.size(), 0.0f);
        }
    }
}

void Optimizer::step() {
    for (auto& p : params_)
        if (!p.tensor.has_grad())
            throw std::runtime_error("Optimizer::step: missing gradient for parameter '" +
                                     p.name + "'");
    ++t_;
    if (opts_.kind == OptimizerKind::Sgd) {
        for (auto& p : params_) {
            auto& w = p.tensor.data();
            const auto& g = p.tensor.grad();
            for (size_t i = 0; i < w.size(); ++i) w[i] -= opts_.lr * g[i];
        }
        return;
    }
    float bc1 = 1.0f - std::pow(opts_.beta1, static_cast<float>(t_));
    float bc2 = 1.0f - std::pow(opts_.beta2, static_cast<float>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        auto& w = params_[k].tensor.data();
        const auto& g = params_[k].tensor.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = opts_.beta1 * m[i] + (1.0f - opts_.beta1) * g[i];
            v[i] = opts_.beta2 * v[i] + (1.0f - opts_.beta2) * g[i] * g[i];
            float mh = m[i] / bc1;
            float vh = v[i] / bc2;
            w[i] -= opts_.lr * mh / (std::sqrt(vh) + opts_.eps);
        }
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

} // namespace imle
