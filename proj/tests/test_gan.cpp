#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "imle/gan.hpp"
#include "imle/rng.hpp"

using namespace imle;

namespace {

GeneratorConfig tiny_unconditional() {
    GeneratorConfig cfg;
    cfg.input_dim = 0;
    cfg.latent_dim = 3;
    cfg.output_dim = 2;
    cfg.hidden = 8;
    cfg.growth = 4;
    cfg.num_rrdb = 1;
    cfg.dense_layers = 2;
    cfg.mapping_hidden = 6;
    cfg.mapping_layers = 2;
    return cfg;
}

std::vector<float> snapshot(const ParamList& params) {
    std::vector<float> flat;
    for (const auto& p : params)
        flat.insert(flat.end(), p.tensor.data().begin(), p.tensor.data().end());
    return flat;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

TEST_CASE("discriminator is deterministic and exposes a scalar logit") {
    Rng rng(131);
    Discriminator d(2, 8, 3, rng);
    Rng data_rng(132);
    auto x = data_rng.normal_vec(2);
    CHECK(d.logit(x) == d.logit(x));
    auto params = d.parameters();
    CHECK(params.size() == 9); // 3 layers x (v, g, b)
}

TEST_CASE("gan losses match hand-computed closed forms on fixed logits") {
    // Build a 1-input discriminator whose logit is exactly its input: one
    // layer, v=[1], g=1, b=0 (weight norm leaves a unit row unchanged).
    Rng rng(133);
    Discriminator d(1, 1, 1, rng);
    auto params = d.parameters();
    for (auto& p : params) {
        if (p.name == "disc.l0.v") p.tensor.data() = {1.0f};
        if (p.name == "disc.l0.g") p.tensor.data() = {1.0f};
        if (p.name == "disc.l0.b") p.tensor.data() = {0.0f};
    }

    // sigma(0) = 0.5 -> per-sample loss term -log 0.5
    CHECK(d.logit({0.0f}) == doctest::Approx(0.0f));
    float term = -std::log(1.0f / (1.0f + std::exp(-0.0f)));
    CHECK(term == doctest::Approx(0.6931472f));

    // hand-computed 2-sample batch with fixed logits via a pass-through
    // "generator": instead of composing G, feed fixed real inputs and
    // evaluate the same formulas the library uses.
    std::vector<float> real_logits = {1.25f, -0.5f};
    std::vector<float> fake_logits = {0.75f, -2.0f};
    double want_d = 0.0, want_g = 0.0;
    for (double l : real_logits) want_d -= std::log(sig(l));
    for (double l : fake_logits) want_d -= std::log(1.0 - sig(l));
    want_d /= 2.0;
    for (double l : fake_logits) want_g -= std::log(sig(l));
    want_g /= 2.0;

    // the identity discriminator turns inputs into those exact logits
    Tensor loss_d = Tensor::scalar(0.0f);
    for (float l : real_logits)
        loss_d = sub(loss_d, log_op(sigmoid(d.forward(Tensor::from({1}, {l})))));
    for (float l : fake_logits) {
        Tensor p = sigmoid(d.forward(Tensor::from({1}, {l})));
        loss_d = sub(loss_d, log_op(add_scalar(scale(p, -1.0f), 1.0f)));
    }
    loss_d = scale(loss_d, 0.5f);
    Tensor loss_g = Tensor::scalar(0.0f);
    for (float l : fake_logits)
        loss_g = sub(loss_g, log_op(sigmoid(d.forward(Tensor::from({1}, {l})))));
    loss_g = scale(loss_g, 0.5f);

    CHECK(loss_d.item() == doctest::Approx(want_d).epsilon(1e-5));
    CHECK(loss_g.item() == doctest::Approx(want_g).epsilon(1e-5));
}

TEST_CASE("gan_losses composes G and D and stays finite") {
    Rng rng(134);
    Generator g(tiny_unconditional(), rng);
    Discriminator d(2, 8, 2, rng);
    Rng data_rng(135);
    std::vector<std::vector<float>> real = {data_rng.normal_vec(2), data_rng.normal_vec(2)};
    std::vector<std::vector<float>> codes = {data_rng.normal_vec(3), data_rng.normal_vec(3),
                                             data_rng.normal_vec(3)};
    auto losses = gan_losses(d, g, real, codes);
    CHECK(std::isfinite(losses.loss_d.item()));
    CHECK(std::isfinite(losses.loss_g.item()));
    CHECK(losses.loss_d.item() > 0.0f);
    CHECK(losses.loss_g.item() > 0.0f);

    // cross-check loss_g against a direct recomputation through logit()
    double want_g = 0.0;
    for (const auto& z : codes) want_g -= std::log(sig(d.logit(g.generate({}, z))));
    want_g /= codes.size();
    CHECK(losses.loss_g.item() == doctest::Approx(want_g).epsilon(1e-4));

    CHECK_THROWS(gan_losses(d, g, {}, codes));
    CHECK_THROWS(gan_losses(d, g, real, {}));
}

TEST_CASE("0 iterations leaves the generator unchanged") {
    Rng rng(136);
    Generator g(tiny_unconditional(), rng);
    Discriminator d(2, 8, 2, rng);
    auto before = snapshot(g.parameters());
    GanConfig cfg;
    cfg.iters = 0;
    std::vector<std::vector<float>> dataset = {{0.0f, 0.0f}};
    train_gan(g, d, dataset, cfg);
    CHECK(snapshot(g.parameters()) == before);
}

TEST_CASE("config validation and empty dataset") {
    GanConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.lr = -1.0f;
    CHECK_THROWS(cfg.validate());
    Rng rng(137);
    Generator g(tiny_unconditional(), rng);
    Discriminator d(2, 8, 2, rng);
    CHECK_THROWS(train_gan(g, d, {}, {}));
}

TEST_CASE("short training run stays finite, is seed-deterministic, and logs per interval") {
    Rng data_rng(138);
    std::vector<std::vector<float>> dataset;
    for (int i = 0; i < 32; ++i) dataset.push_back(data_rng.normal_vec(2));

    GanConfig cfg;
    cfg.iters = 30;
    cfg.batch_size = 8;
    cfg.seed = 3;
    cfg.log_every = 10;

    int hook_calls = 0;
    Rng ra(139), rb(139);
    Generator ga(tiny_unconditional(), ra), gb(tiny_unconditional(), rb);
    Discriminator da(2, 8, 2, ra), db(2, 8, 2, rb);
    train_gan(ga, da, dataset, cfg, [&](int, const Generator&) { ++hook_calls; });
    train_gan(gb, db, dataset, cfg);
    CHECK(hook_calls == 3); // iters 0, 10, 20
    CHECK(snapshot(ga.parameters()) == snapshot(gb.parameters()));
    CHECK(snapshot(da.parameters()) == snapshot(db.parameters()));

    // the generator actually moved
    Rng rc(139);
    Generator gc(tiny_unconditional(), rc);
    CHECK(snapshot(ga.parameters()) != snapshot(gc.parameters()));
}
