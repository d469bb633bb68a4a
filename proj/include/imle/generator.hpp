#pragma once

#include <string>
#include <vector>

#include "imle/optim.hpp"
#include "imle/rng.hpp"
#include "imle/tensor.hpp"

namespace imle {

// Weight-normalized dense layer: W_eff row i = g[i] * v[i,:] / ||v[i,:]||.
class WnLinear {
public:
    WnLinear() = default;
    WnLinear(int in_dim, int out_dim, Rng& rng, float gain_init = 1.0f);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
    int in_dim() const { return v_.defined() ? v_.shape()[1] : 0; }
    int out_dim() const { return v_.defined() ? v_.shape()[0] : 0; }

private:
    Tensor v_, g_, b_;
};

// Densely connected sub-block: each layer sees the block input concatenated
// with all previous layer outputs; the final layer fuses back to the block
// width (linear, no activation).
class DenseBlock {
public:
    DenseBlock() = default;
    DenseBlock(int width, int growth, int num_layers, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

private:
    std::vector<WnLinear> layers_;
};

// Residual-in-residual dense block: three dense blocks, each added back with
// factor beta, then the whole chain added to the input with factor beta.
class RRDBlock {
public:
    RRDBlock() = default;
    RRDBlock(int width, int growth, int dense_layers, float beta, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;

private:
    std::vector<DenseBlock> blocks_;
    float beta_ = 0.2f;
};

// Maps the latent code to one (scale, offset) pair per feature channel per
// RRDB position. Head gains start near zero so modulation is ~identity at init.
class MappingNetwork {
public:
    MappingNetwork() = default;
    MappingNetwork(int latent_dim, int hidden, int num_layers, int num_rrdb, int width,
                   Rng& rng);

    struct Modulation {
        Tensor scale;  // per-channel, already includes the +1
        Tensor offset;
    };
    std::vector<Modulation> forward(const Tensor& z) const;
    void collect(const std::string& prefix, ParamList& out) const;

private:
    std::vector<WnLinear> layers_;
    int num_rrdb_ = 0;
    int width_ = 0;
};

struct GeneratorConfig {
    int input_dim = 0;   // 0 for unconditional
    int latent_dim = 16;
    int output_dim = 2;
    int hidden = 128;
    int growth = 32;
    int num_rrdb = 2;
    int dense_layers = 3;
    int mapping_hidden = 64;
    int mapping_layers = 3;
    float beta = 0.2f;

    std::string to_json() const;
    static GeneratorConfig from_json(const std::string& text);
};

// y = T_theta(x, z): backbone of modulated RRDBs over dense features plus a
// latent mapping branch. Deterministic in (x, z, theta); differentiable in
// theta and z.
class Generator {
public:
    Generator() = default;
    Generator(GeneratorConfig cfg, Rng& rng);

    Tensor forward(const Tensor& x, const Tensor& z) const;
    std::vector<float> generate(const std::vector<float>& x, const std::vector<float>& z) const;

    const GeneratorConfig& config() const { return cfg_; }
    ParamList parameters(const std::string& prefix = "") const;

private:
    GeneratorConfig cfg_;
    WnLinear in_proj_;
    std::vector<RRDBlock> backbone_;
    MappingNetwork mapping_;
    WnLinear head_;
};

struct ProgressiveConfig {
    int input_dim = 49;
    std::vector<int> stage_output_dims = {196, 784}; // each stage doubles per side
    int latent_dim = 16;
    GeneratorConfig stage_template; // dims overridden per stage

    std::string to_json() const;
    static ProgressiveConfig from_json(const std::string& text);
};

// Chain of generators; stage s consumes the previous stage's output (or the
// input for s = 0) together with its own latent code.
class ProgressiveGenerator {
public:
    ProgressiveGenerator() = default;
    ProgressiveGenerator(ProgressiveConfig cfg, Rng& rng);

    // Returns every intermediate output (needed for intermediate supervision).
    std::vector<Tensor> forward_all(const Tensor& x, const std::vector<Tensor>& z_list) const;

    int num_stages() const { return static_cast<int>(stages_.size()); }
    const Generator& stage(int s) const { return stages_[s]; }
    const ProgressiveConfig& config() const { return cfg_; }
    ParamList parameters() const;

private:
    ProgressiveConfig cfg_;
    std::vector<Generator> stages_;
};

// z ~ N(0, I) from the given stream.
std::vector<float> sample_latent(int dim, Rng& rng);

} // namespace imle
