#include "imle/generator.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace imle {

// ---- WnLinear ----

WnLinear::WnLinear(int in_dim, int out_dim, Rng& rng, float gain_init) {
    // directions ~ N(0, 2/fan_in), gains gain_init, biases 0
    float std = std::sqrt(2.0f / static_cast<float>(in_dim));
    std::vector<float> v(static_cast<size_t>(out_dim) * in_dim);
    for (auto& x : v) x = static_cast<float>(rng.normal()) * std;
    v_ = Tensor::from({out_dim, in_dim}, std::move(v), true);
    g_ = Tensor::from({out_dim}, std::vector<float>(out_dim, gain_init), true);
    b_ = Tensor::zeros({out_dim}, true);
}

Tensor WnLinear::forward(const Tensor& x) const {
    return weight_norm_linear(v_, g_, b_, x);
}

void WnLinear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".v", v_});
    out.push_back({prefix + ".g", g_});
    out.push_back({prefix + ".b", b_});
}

// ---- DenseBlock ----

DenseBlock::DenseBlock(int width, int growth, int num_layers, Rng& rng) {
    for (int k = 0; k < num_layers; ++k) {
        int in = width + k * growth;
        int out = (k == num_layers - 1) ? width : growth;
        layers_.emplace_back(in, out, rng);
    }
}

Tensor DenseBlock::forward(const Tensor& x) const {
    Tensor cat = x;
    for (size_t k = 0; k + 1 < layers_.size(); ++k)
        cat = concat(cat, leaky_relu(layers_[k].forward(cat)));
    return layers_.back().forward(cat); // fusion layer, linear
}

void DenseBlock::collect(const std::string& prefix, ParamList& out) const {
    for (size_t k = 0; k < layers_.size(); ++k)
        layers_[k].collect(prefix + ".l" + std::to_string(k), out);
}

// ---- RRDBlock ----

RRDBlock::RRDBlock(int width, int growth, int dense_layers, float beta, Rng& rng)
    : beta_(beta) {
    for (int i = 0; i < 3; ++i) blocks_.emplace_back(width, growth, dense_layers, rng);
}

Tensor RRDBlock::forward(const Tensor& x) const {
    Tensor y = x;
    for (const auto& db : blocks_) y = add(y, scale(db.forward(y), beta_));
    return add(x, scale(y, beta_));
}

void RRDBlock::collect(const std::string& prefix, ParamList& out) const {
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect(prefix + ".db" + std::to_string(i), out);
}

// ---- MappingNetwork ----

MappingNetwork::MappingNetwork(int latent_dim, int hidden, int num_layers, int num_rrdb,
                               int width, Rng& rng)
    : num_rrdb_(num_rrdb), width_(width) {
    int in = latent_dim;
    for (int k = 0; k + 1 < num_layers; ++k) {
        layers_.emplace_back(in, hidden, rng);
        in = hidden;
    }
    // small head gain keeps (scale, offset) ~ (1, 0) at init
    layers_.emplace_back(in, 2 * num_rrdb * width, rng, 0.01f);
}

std::vector<MappingNetwork::Modulation> MappingNetwork::forward(const Tensor& z) const {
    Tensor h = z;
    for (size_t k = 0; k + 1 < layers_.size(); ++k) h = leaky_relu(layers_[k].forward(h));
    Tensor raw = layers_.back().forward(h);
    std::vector<Modulation> mods;
    mods.reserve(num_rrdb_);
    for (int r = 0; r < num_rrdb_; ++r) {
        Tensor s = slice(raw, 2 * r * width_, width_);
        Tensor o = slice(raw, (2 * r + 1) * width_, width_);
        mods.push_back({add_scalar(s, 1.0f), o});
    }
    return mods;
}

void MappingNetwork::collect(const std::string& prefix, ParamList& out) const {
    for (size_t k = 0; k < layers_.size(); ++k)
        layers_[k].collect(prefix + ".l" + std::to_string(k), out);
}

// ---- configs ----

static void config_to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = {{"input_dim", c.input_dim},       {"latent_dim", c.latent_dim},
         {"output_dim", c.output_dim},     {"hidden", c.hidden},
         {"growth", c.growth},             {"num_rrdb", c.num_rrdb},
         {"dense_layers", c.dense_layers}, {"mapping_hidden", c.mapping_hidden},
         {"mapping_layers", c.mapping_layers}, {"beta", c.beta}};
}

static GeneratorConfig config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.output_dim = j.value("output_dim", c.output_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.growth = j.value("growth", c.growth);
    c.num_rrdb = j.value("num_rrdb", c.num_rrdb);
    c.dense_layers = j.value("dense_layers", c.dense_layers);
    c.mapping_hidden = j.value("mapping_hidden", c.mapping_hidden);
    c.mapping_layers = j.value("mapping_layers", c.mapping_layers);
    c.beta = j.value("beta", c.beta);
    return c;
}

std::string GeneratorConfig::to_json() const {
    nlohmann::json j;
    config_to_json(j, *this);
    return j.dump(2);
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
    return config_from_json(nlohmann::json::parse(text));
}

std::string ProgressiveConfig::to_json() const {
    nlohmann::json t;
    config_to_json(t, stage_template);
    nlohmann::json j = {{"input_dim", input_dim},
                        {"stage_output_dims", stage_output_dims},
                        {"latent_dim", latent_dim},
                        {"stage_template", t}};
    return j.dump(2);
}

ProgressiveConfig ProgressiveConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ProgressiveConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.stage_output_dims = j.value("stage_output_dims", c.stage_output_dims);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("stage_template")) c.stage_template = config_from_json(j["stage_template"]);
    return c;
}

// ---- Generator ----

Generator::Generator(GeneratorConfig cfg, Rng& rng) : cfg_(cfg) {
    int in = cfg.input_dim + cfg.latent_dim;
    in_proj_ = WnLinear(in, cfg.hidden, rng);
    for (int r = 0; r < cfg.num_rrdb; ++r)
        backbone_.emplace_back(cfg.hidden, cfg.growth, cfg.dense_layers, cfg.beta, rng);
    mapping_ = MappingNetwork(cfg.latent_dim, cfg.mapping_hidden, cfg.mapping_layers,
                              cfg.num_rrdb, cfg.hidden, rng);
    head_ = WnLinear(cfg.hidden, cfg.output_dim, rng);
}

Tensor Generator::forward(const Tensor& x, const Tensor& z) const {
    if (z.shape() != Shape{cfg_.latent_dim})
        throw ShapeError("Generator::forward: latent dim " + std::to_string(z.size()) +
                         " != " + std::to_string(cfg_.latent_dim));
    Tensor in;
    if (cfg_.input_dim == 0) {
        in = z;
    } else {
        if (x.shape() != Shape{cfg_.input_dim})
            throw ShapeError("Generator::forward: input dim " + std::to_string(x.size()) +
                             " != " + std::to_string(cfg_.input_dim));
        in = concat(x, z);
    }
    Tensor h = leaky_relu(in_proj_.forward(in));
    auto mods = mapping_.forward(z);
    for (size_t r = 0; r < backbone_.size(); ++r) {
        h = backbone_[r].forward(h);
        h = scale_offset(h, mods[r].scale, mods[r].offset);
    }
    return head_.forward(h);
}

std::vector<float> Generator::generate(const std::vector<float>& x,
                                       const std::vector<float>& z) const {
    Tensor xt = cfg_.input_dim == 0
                    ? Tensor()
                    : Tensor::from({static_cast<int>(x.size())}, x);
    Tensor zt = Tensor::from({static_cast<int>(z.size())}, z);
    return forward(xt, zt).data();
}

ParamList Generator::parameters(const std::string& prefix) const {
    ParamList out;
    in_proj_.collect(prefix + "in_proj", out);
    for (size_t r = 0; r < backbone_.size(); ++r)
        backbone_[r].collect(prefix + "rrdb" + std::to_string(r), out);
    mapping_.collect(prefix + "mapping", out);
    head_.collect(prefix + "head", out);
    return out;
}

// ---- ProgressiveGenerator ----

ProgressiveGenerator::ProgressiveGenerator(ProgressiveConfig cfg, Rng& rng)
    : cfg_(std::move(cfg)) {
    int in = cfg_.input_dim;
    for (int out : cfg_.stage_output_dims) {
        GeneratorConfig sc = cfg_.stage_template;
        sc.input_dim = in;
        sc.latent_dim = cfg_.latent_dim;
        sc.output_dim = out;
        stages_.emplace_back(sc, rng);
        in = out;
    }
}

std::vector<Tensor> ProgressiveGenerator::forward_all(const Tensor& x,
                                                      const std::vector<Tensor>& z_list) const {
    if (static_cast<int>(z_list.size()) != num_stages())
        throw std::runtime_error("ProgressiveGenerator: got " + std::to_string(z_list.size()) +
                                 " latent codes for " + std::to_string(num_stages()) + " stages");
    std::vector<Tensor> outputs;
    Tensor cur = x;
    for (int s = 0; s < num_stages(); ++s) {
        cur = stages_[s].forward(cur, z_list[s]);
        outputs.push_back(cur);
    }
    return outputs;
}

ParamList ProgressiveGenerator::parameters() const {
    ParamList out;
    for (size_t s = 0; s < stages_.size(); ++s) {
        auto sub = stages_[s].parameters("stage" + std::to_string(s) + ".");
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

std::vector<float> sample_latent(int dim, Rng& rng) {
    if (dim < 1) throw std::runtime_error("sample_latent: dim must be >= 1");
    return rng.normal_vec(static_cast<size_t>(dim));
}

} // namespace imle
