#include "imle/gan.hpp"

#include <cmath>
#include <stdexcept>

namespace imle {

Discriminator::Discriminator(int input_dim, int hidden, int num_layers, Rng& rng) {
    int in = input_dim;
    for (int k = 0; k + 1 < num_layers; ++k) {
        layers_.emplace_back(in, hidden, rng);
        in = hidden;
    }
    layers_.emplace_back(in, 1, rng);
}

Tensor Discriminator::forward(const Tensor& x) const {
    Tensor h = x;
    for (size_t k = 0; k + 1 < layers_.size(); ++k) h = leaky_relu(layers_[k].forward(h));
    return layers_.back().forward(h);
}

float Discriminator::logit(const std::vector<float>& x) const {
    return forward(Tensor::from({static_cast<int>(x.size())}, x)).item();
}

ParamList Discriminator::parameters() const {
    ParamList out;
    for (size_t k = 0; k < layers_.size(); ++k)
        layers_[k].collect("disc.l" + std::to_string(k), out);
    return out;
}

GanLosses gan_losses(const Discriminator& d, const Generator& g,
                     const std::vector<std::vector<float>>& real_batch,
                     const std::vector<std::vector<float>>& codes) {
    if (real_batch.empty() || codes.empty())
        throw std::runtime_error("gan_losses: empty batch");

    Tensor real_term = Tensor::scalar(0.0f);
    for (const auto& x : real_batch) {
        Tensor logit = d.forward(Tensor::from({static_cast<int>(x.size())}, x));
        real_term = add(real_term, log_op(sigmoid(logit)));
    }
    real_term = scale(real_term, 1.0f / static_cast<float>(real_batch.size()));

    Tensor fake_term = Tensor::scalar(0.0f); // mean log(1 - sig(D(G(z))))
    Tensor gen_term = Tensor::scalar(0.0f);  // mean log sig(D(G(z)))
    for (const auto& z : codes) {
        Tensor fake = g.forward(Tensor(), Tensor::from({static_cast<int>(z.size())}, z));
        Tensor p = sigmoid(d.forward(fake));
        fake_term = add(fake_term, log_op(add_scalar(scale(p, -1.0f), 1.0f)));
        gen_term = add(gen_term, log_op(p));
    }
    float inv = 1.0f / static_cast<float>(codes.size());
    fake_term = scale(fake_term, inv);
    gen_term = scale(gen_term, inv);

    GanLosses out;
    out.loss_d = scale(add(real_term, fake_term), -1.0f);
    out.loss_g = scale(gen_term, -1.0f);
    return out;
}

void GanConfig::validate() const {
    if (iters < 0) throw std::runtime_error("GanConfig: iters must be >= 0");
    if (batch_size < 1) throw std::runtime_error("GanConfig: batch_size must be >= 1");
    if (lr <= 0.0f) throw std::runtime_error("GanConfig: lr must be positive");
}

void train_gan(Generator& g, Discriminator& d,
               const std::vector<std::vector<float>>& dataset, const GanConfig& cfg,
               const GanHook& hook) {
    cfg.validate();
    if (dataset.empty()) throw std::runtime_error("train_gan: empty dataset");

    Rng code_rng = Rng::stream(cfg.seed, "gan_codes");
    Rng batch_rng = Rng::stream(cfg.seed, "gan_batches");
    Optimizer opt_g(g.parameters(), {OptimizerKind::Adam, cfg.lr, cfg.beta1});
    Optimizer opt_d(d.parameters(), {OptimizerKind::Adam, cfg.lr, cfg.beta1});
    int latent_dim = g.config().latent_dim;

    for (int it = 0; it < cfg.iters; ++it) {
        std::vector<std::vector<float>> real(cfg.batch_size);
        std::vector<std::vector<float>> codes(cfg.batch_size);
        for (int i = 0; i < cfg.batch_size; ++i) {
            real[i] = dataset[batch_rng.uniform_index(dataset.size())];
            codes[i] = sample_latent(latent_dim, code_rng);
        }

        // D step: generator outputs enter as constants
        {
            std::vector<std::vector<float>> fakes(cfg.batch_size);
            for (int i = 0; i < cfg.batch_size; ++i) fakes[i] = g.generate({}, codes[i]);
            Tensor loss = Tensor::scalar(0.0f);
            for (const auto& x : real)
                loss = sub(loss, log_op(sigmoid(d.forward(
                                Tensor::from({static_cast<int>(x.size())}, x)))));
            for (const auto& f : fakes) {
                Tensor p = sigmoid(d.forward(Tensor::from({static_cast<int>(f.size())}, f)));
                loss = sub(loss, log_op(add_scalar(scale(p, -1.0f), 1.0f)));
            }
            loss = scale(loss, 1.0f / static_cast<float>(cfg.batch_size));
            if (!std::isfinite(loss.item()))
                throw std::runtime_error("train_gan: non-finite D loss at iter " +
                                         std::to_string(it));
            backward(loss);
            opt_d.step();
            opt_d.zero_grad();
            opt_g.zero_grad(); // D loss does not touch G here, but keep grads clean
        }

        // G step
        {
            Tensor loss = Tensor::scalar(0.0f);
            for (const auto& z : codes) {
                Tensor fake = g.forward(Tensor(), Tensor::from({static_cast<int>(z.size())}, z));
                loss = sub(loss, log_op(sigmoid(d.forward(fake))));
            }
            loss = scale(loss, 1.0f / static_cast<float>(cfg.batch_size));
            if (!std::isfinite(loss.item()))
                throw std::runtime_error("train_gan: non-finite G loss at iter " +
                                         std::to_string(it));
            backward(loss);
            opt_g.step();
            opt_g.zero_grad();
            opt_d.zero_grad(); // discard D grads from the G pass
        }

        if (hook && cfg.log_every > 0 && it % cfg.log_every == 0) hook(it, g);
    }
}

} // namespace imle
