#pragma once

#include <functional>
#include <vector>

#include "imle/generator.hpp"
#include "imle/optim.hpp"
#include "imle/rng.hpp"

namespace imle {

// Small dense MLP mapping a sample to a scalar logit.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(int input_dim, int hidden, int num_layers, Rng& rng);

    Tensor forward(const Tensor& x) const;
    float logit(const std::vector<float>& x) const;
    ParamList parameters() const;

private:
    std::vector<WnLinear> layers_;
};

struct GanLosses {
    Tensor loss_d;
    Tensor loss_g;
};

// Non-saturating GAN losses on one batch:
//   loss_D = -mean log sig(D(real)) - mean log(1 - sig(D(G(z))))
//   loss_G = -mean log sig(D(G(z)))
GanLosses gan_losses(const Discriminator& d, const Generator& g,
                     const std::vector<std::vector<float>>& real_batch,
                     const std::vector<std::vector<float>>& codes);

struct GanConfig {
    int iters = 5000;
    int batch_size = 64;
    float lr = 2e-4f;
    float beta1 = 0.5f;
    uint64_t seed = 0;
    int log_every = 100;

    void validate() const;
};

using GanHook = std::function<void(int iter, const Generator&)>;

// Alternating D/G steps; mode behaviour is observed through the hook, never
// asserted.
void train_gan(Generator& g, Discriminator& d,
               const std::vector<std::vector<float>>& dataset, const GanConfig& cfg,
               const GanHook& hook = nullptr);

} // namespace imle
