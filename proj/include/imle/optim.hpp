#pragma once

#include <string>
#include <vector>

#include "imle/tensor.hpp"

namespace imle {

struct Param {
    std::string name;
    Tensor tensor;
};

using ParamList = std::vector<Param>;

enum class OptimizerKind { Sgd, Adam };

// Plain SGD or Adam over a fixed parameter list. Gradients must be
// populated before step(); zero_grad() between steps is the caller's job.
class Optimizer {
public:
    struct Options {
        OptimizerKind kind = OptimizerKind::Adam;
        float lr = 1e-3f;
        float beta1 = 0.9f;
        float beta2 = 0.999f;
        float eps = 1e-8f;
    };

    Optimizer(ParamList params, Options opts);

    void step();
    void zero_grad();
    void set_lr(float lr) { opts_.lr = lr; }
    const Options& options() const { return opts_; }
    ParamList& params() { return params_; }

private:
    ParamList params_;
    Options opts_;
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_; // Adam moments
};

} // namespace imle
