#include "imle/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "imle/checkpoint.hpp"
#include "imle/data.hpp"
#include "imle/gan.hpp"
#include "imle/generator.hpp"
#include "imle/image_io.hpp"
#include "imle/imle.hpp"
#include "imle/knn.hpp"
#include "imle/metrics.hpp"
#include "imle/rng.hpp"

namespace imle {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- shared plumbing ----

int thread_cap() {
    const char* v = std::getenv("IMLE_LAB_THREADS");
    if (!v || !*v) return 0;
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 0) return 0;
    return static_cast<int>(n);
}

void parallel_for(int n, int cap, const std::function<void(int)>& fn) {
    if (cap <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    int workers = std::min(cap, n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        int lo = static_cast<int>(static_cast<int64_t>(n) * w / workers);
        int hi = static_cast<int>(static_cast<int64_t>(n) * (w + 1) / workers);
        threads.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) {
    rows_.push_back(std::move(header));
}

void CsvWriter::add_row(std::vector<std::string> fields) {
    if (fields.size() != width_)
        throw std::runtime_error("CsvWriter: row width mismatch");
    rows_.push_back(std::move(fields));
}

static std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

void CsvWriter::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& row : rows_) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) f << ',';
            f << csv_escape(row[i]);
        }
        f << '\n';
    }
}

std::string fmt_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::vector<uint64_t> histogram_2d(const std::vector<std::vector<float>>& points,
                                   int bins, float lo, float hi) {
    if (bins < 1 || !(hi > lo)) throw std::runtime_error("histogram_2d: bad range");
    std::vector<uint64_t> counts(static_cast<size_t>(bins) * bins, 0);
    const float scale = bins / (hi - lo);
    for (const auto& p : points) {
        if (p.size() != 2) throw std::runtime_error("histogram_2d: points must be 2D");
        int bx = std::clamp(static_cast<int>((p[0] - lo) * scale), 0, bins - 1);
        int by = std::clamp(static_cast<int>((p[1] - lo) * scale), 0, bins - 1);
        ++counts[static_cast<size_t>(by) * bins + bx];
    }
    return counts;
}

bool kde_inside_region(const std::vector<std::array<float, 2>>& points,
                       const std::array<float, 2>& ref, double coverage) {
    const int n = static_cast<int>(points.size());
    if (n < 2) throw std::runtime_error("kde_inside_region: need >= 2 points");
    double mean[2] = {0, 0};
    for (const auto& p : points) {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    double var[2] = {0, 0};
    for (const auto& p : points) {
        var[0] += (p[0] - mean[0]) * (p[0] - mean[0]);
        var[1] += (p[1] - mean[1]) * (p[1] - mean[1]);
    }
    // Scott's rule per axis for a 2D product kernel
    double h[2];
    for (int a = 0; a < 2; ++a) {
        double sd = std::sqrt(var[a] / std::max(1, n - 1));
        h[a] = std::max(1e-6, sd * std::pow(static_cast<double>(n), -1.0 / 6.0));
    }
    auto density = [&](double x, double y) {
        double acc = 0.0;
        for (const auto& p : points) {
            double dx = (x - p[0]) / h[0];
            double dy = (y - p[1]) / h[1];
            acc += std::exp(-0.5 * (dx * dx + dy * dy));
        }
        return acc / n;
    };
    std::vector<double> self(n);
    for (int i = 0; i < n; ++i) self[i] = density(points[i][0], points[i][1]);
    std::sort(self.begin(), self.end());
    int idx = std::clamp(static_cast<int>(std::floor((1.0 - coverage) * n)), 0, n - 1);
    return density(ref[0], ref[1]) >= self[idx];
}

json load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("bad JSON in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object: " + path);
    return j;
}

// ---- internal helpers ----

namespace {

// Reads cfg[key] with a fallback and writes the effective value back so the
// run manifest echoes the full resolved configuration.
template <typename T>
T take(json& cfg, const char* key, const T& def) {
    T v = cfg.value(key, def);
    cfg[key] = v;
    return v;
}

std::string take_str(json& cfg, const char* key, const std::string& def) {
    return take<std::string>(cfg, key, def);
}

json& sub_object(json& cfg, const char* key) {
    if (!cfg.contains(key) || !cfg[key].is_object()) cfg[key] = json::object();
    return cfg[key];
}

GeneratorConfig read_generator(json& j, GeneratorConfig d) {
    d.input_dim = take(j, "input_dim", d.input_dim);
    d.latent_dim = take(j, "latent_dim", d.latent_dim);
    d.output_dim = take(j, "output_dim", d.output_dim);
    d.hidden = take(j, "hidden", d.hidden);
    d.growth = take(j, "growth", d.growth);
    d.num_rrdb = take(j, "num_rrdb", d.num_rrdb);
    d.dense_layers = take(j, "dense_layers", d.dense_layers);
    d.mapping_hidden = take(j, "mapping_hidden", d.mapping_hidden);
    d.mapping_layers = take(j, "mapping_layers", d.mapping_layers);
    d.beta = take(j, "beta", d.beta);
    return d;
}

TrainConfig read_train(json& j, TrainConfig d) {
    d.m = take(j, "m", d.m);
    d.outer_iters = take(j, "outer_iters", d.outer_iters);
    d.inner_iters = take(j, "inner_iters", d.inner_iters);
    d.lr = take(j, "lr", d.lr);
    d.batch_size = take(j, "batch_size", d.batch_size);
    d.minibatch_size = take(j, "minibatch_size", d.minibatch_size);
    d.knn_backend_threshold = take(j, "knn_backend_threshold", d.knn_backend_threshold);
    d.log_every = take(j, "log_every", d.log_every);
    return d;
}

// Output-directory bookkeeping: absolute paths for writing, relative paths
// plus content hashes for the manifest.
class ArtifactSink {
public:
    explicit ArtifactSink(const std::string& out_dir) : dir_(out_dir) {
        fs::create_directories(dir_);
    }

    std::string path(const std::string& rel) {
        outputs_.push_back(rel);
        return (dir_ / rel).string();
    }

    // absolute path without manifest registration (e.g. checkpoint prefixes)
    std::string raw_path(const std::string& rel) const { return (dir_ / rel).string(); }

    void save_csv(const CsvWriter& csv, const std::string& rel) { csv.save(path(rel)); }

    void save_image(const GrayImage& img, const std::string& rel_no_ext) {
        write_pgm(img, path(rel_no_ext + ".pgm"));
        write_png(img, path(rel_no_ext + ".png"));
    }

    void write_manifest(const std::string& command, const json& cfg,
                        const json& info = json::object()) {
        json m;
        m["command"] = command;
        m["config"] = cfg;
        m["info"] = info;
        json outs = json::array();
        for (const auto& rel : outputs_)
            outs.push_back({{"path", rel}, {"hash", content_hash_file((dir_ / rel).string())}});
        m["outputs"] = outs;
        std::ofstream f(dir_ / "run_manifest.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write run manifest");
        f << m.dump(2) << '\n';
    }

private:
    fs::path dir_;
    std::vector<std::string> outputs_;
};

GrayImage square_tile(const std::vector<float>& v) {
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()))));
    if (side * side != static_cast<int>(v.size()))
        throw std::runtime_error("square_tile: vector is not a square image");
    return GrayImage::from_f32(v, side, side);
}

GrayImage blank_tile(int side) {
    GrayImage g;
    g.width = side;
    g.height = side;
    g.pixels.assign(static_cast<size_t>(side) * side, 0);
    return g;
}

GrayImage render_histogram(const std::vector<uint64_t>& counts, int bins) {
    uint64_t peak = 0;
    for (uint64_t c : counts) peak = std::max(peak, c);
    GrayImage img;
    img.width = bins;
    img.height = bins;
    img.pixels.resize(counts.size());
    for (size_t i = 0; i < counts.size(); ++i)
        img.pixels[i] =
            peak == 0 ? 0 : static_cast<uint8_t>((255 * counts[i] + peak / 2) / peak);
    return img;
}

// Draws codes sequentially (stream order fixed) and generates in parallel
// into preallocated slots, so output is identical at any thread cap.
std::vector<std::vector<float>> generate_batch(const Generator& gen,
                                               const std::vector<float>& x,
                                               const std::vector<std::vector<float>>& codes) {
    std::vector<std::vector<float>> out(codes.size());
    parallel_for(static_cast<int>(codes.size()), thread_cap(),
                 [&](int i) { out[i] = gen.generate(x, codes[i]); });
    return out;
}

std::vector<std::vector<float>> draw_codes(int n, int dim, Rng& rng) {
    std::vector<std::vector<float>> codes(n);
    for (auto& z : codes) z = sample_latent(dim, rng);
    return codes;
}

// Mean over pixels of the per-pixel variance across samples.
double mean_pixel_variance(const std::vector<std::vector<float>>& samples) {
    if (samples.empty()) return 0.0;
    const size_t d = samples[0].size();
    const double n = static_cast<double>(samples.size());
    double acc = 0.0;
    for (size_t p = 0; p < d; ++p) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[p];
        mean /= n;
        double var = 0.0;
        for (const auto& s : samples) var += (s[p] - mean) * (s[p] - mean);
        acc += var / n;
    }
    return acc / static_cast<double>(d);
}

struct DigitData {
    std::vector<std::vector<float>> train;    // [0,1] row-major 28x28
    std::vector<std::vector<float>> held_out;
    MnistSet held_out_raw; // for IDX re-emission
};

// Loads IDX images when a path is given, otherwise falls back to the
// procedural digit set. The last `held_out` images are reserved for eval.
DigitData load_digit_data(json& cfg, uint64_t seed) {
    std::string path = take_str(cfg, "images_idx", "");
    int train_count = take(cfg, "train_count", 10000);
    int held_out = take(cfg, "held_out", 10);
    if (train_count < 1 || held_out < 1)
        throw std::runtime_error("train_count and held_out must be >= 1");

    MnistSet set;
    if (!path.empty()) {
        set = load_idx_images(path);
        if (set.count < train_count + held_out)
            throw std::runtime_error("dataset " + path + " has only " +
                                     std::to_string(set.count) + " images; need " +
                                     std::to_string(train_count + held_out));
    } else {
        Rng rng = Rng::stream(seed, "digits");
        set = make_synthetic_digits(train_count + held_out, rng);
    }
    if (set.rows != 28 || set.cols != 28)
        throw std::runtime_error("expected 28x28 images");

    DigitData d;
    d.train.reserve(train_count);
    for (int i = 0; i < train_count; ++i) d.train.push_back(set.image_f32(i));
    d.held_out_raw.count = held_out;
    d.held_out_raw.rows = 28;
    d.held_out_raw.cols = 28;
    for (int i = 0; i < held_out; ++i) {
        d.held_out.push_back(set.image_f32(train_count + i));
        size_t off = static_cast<size_t>(train_count + i) * 784;
        d.held_out_raw.images.insert(d.held_out_raw.images.end(), set.images.begin() + off,
                                     set.images.begin() + off + 784);
    }
    return d;
}

MnistSet to_idx(const std::vector<std::vector<float>>& images) {
    MnistSet s;
    s.count = static_cast<int>(images.size());
    s.rows = 28;
    s.cols = 28;
    for (const auto& img : images)
        for (float v : img)
            s.images.push_back(
                static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    return s;
}

std::vector<float> scaled(const std::vector<float>& v, float s) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
    return out;
}

} // namespace

// ---- mode-coverage (unconditional IMLE vs GAN on a 2D mixture) ----

void cmd_mode_coverage(json cfg) {
    const uint64_t seed = take<uint64_t>(cfg, "seed", 0);
    ArtifactSink sink(take_str(cfg, "out_dir", "out/mode_coverage"));

    const int modes = take(cfg, "gmm_modes", 5);
    const float radius = take(cfg, "gmm_radius", 2.0f);
    const float stddev = take(cfg, "gmm_stddev", 0.1f);
    const int n_train = take(cfg, "train_samples", 1000);
    const int n_eval = take(cfg, "eval_samples", 2000);
    const int n_probe = take(cfg, "probe_samples", 500);
    const int coverage_every = take(cfg, "coverage_every", 10);
    const float cov_radius = take(cfg, "coverage_radius_stddevs", 3.0f) * stddev;
    const int bins = take(cfg, "heatmap_bins", 100);
    const float range = take(cfg, "heatmap_range", 3.0f);

    GeneratorConfig gdef;
    gdef.input_dim = 0;
    gdef.latent_dim = 8;
    gdef.output_dim = 2;
    gdef.hidden = 32;
    gdef.growth = 16;
    gdef.num_rrdb = 1;
    gdef.dense_layers = 2;
    gdef.mapping_hidden = 16;
    gdef.mapping_layers = 2;
    GeneratorConfig gcfg = read_generator(sub_object(cfg, "generator"), gdef);

    TrainConfig tdef;
    tdef.m = 20;
    tdef.outer_iters = 2000;
    tdef.inner_iters = 5;
    tdef.lr = 1e-3f;
    tdef.batch_size = 64;
    tdef.minibatch_size = 16;
    tdef.log_every = 10;
    TrainConfig tcfg = read_train(sub_object(cfg, "train"), tdef);
    tcfg.seed = seed;

    GanConfig gan_cfg;
    gan_cfg.iters = take(cfg, "gan_iters", tcfg.outer_iters);
    gan_cfg.batch_size = take(cfg, "gan_batch_size", 64);
    gan_cfg.lr = take(cfg, "gan_lr", 2e-4f);
    gan_cfg.seed = seed;
    gan_cfg.log_every = coverage_every;
    const int disc_hidden = take(cfg, "disc_hidden", 32);
    const int disc_layers = take(cfg, "disc_layers", 3);

    GmmSpec spec = GmmSpec::ring(modes, radius, stddev);
    Rng data_rng = Rng::stream(seed, "gmm_data");
    auto targets = sample_gmm(spec, n_train, data_rng);
    std::vector<std::vector<float>> centers;
    for (const auto& c : spec.centers) centers.push_back({c[0], c[1]});

    auto probe = [&](const Generator& g, int iter) {
        Rng r = Rng::stream(seed ^ (0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(iter) + 1)),
                            "coverage_probe");
        auto codes = draw_codes(n_probe, g.config().latent_dim, r);
        auto samples = generate_batch(g, {}, codes);
        return mode_coverage(samples, centers, cov_radius);
    };

    // IMLE
    Rng init_rng = Rng::stream(seed, "imle_init");
    Generator gen(gcfg, init_rng);
    L2Metric metric;
    CsvWriter imle_cov({"iter", "coverage"});
    auto result = train_unconditional(
        gen, targets, tcfg, metric, [&](int iter, const Generator& g) {
            if (iter % coverage_every == 0 || iter == tcfg.outer_iters - 1)
                imle_cov.add_row({std::to_string(iter), fmt_float(probe(g, iter))});
        });
    sink.save_csv(imle_cov, "imle_coverage.csv");

    CsvWriter hist({"iter", "mean_selected_distance", "post_update_loss"});
    for (const auto& log : result.history)
        hist.add_row({std::to_string(log.iter), fmt_float(log.mean_selected_distance),
                      fmt_float(log.post_update_loss)});
    sink.save_csv(hist, "imle_history.csv");

    // GAN (same generator architecture, same data; trajectory recorded,
    // never asserted — mode drop is expected but stochastic)
    Rng gan_init = Rng::stream(seed, "gan_init");
    Generator gan_gen(gcfg, gan_init);
    Discriminator disc(2, disc_hidden, disc_layers, gan_init);
    CsvWriter gan_cov({"iter", "coverage"});
    train_gan(gan_gen, disc, targets, gan_cfg, [&](int iter, const Generator& g) {
        gan_cov.add_row({std::to_string(iter), fmt_float(probe(g, iter))});
    });
    if (gan_cfg.iters > 0 && (gan_cfg.iters - 1) % coverage_every != 0)
        gan_cov.add_row({std::to_string(gan_cfg.iters - 1),
                         fmt_float(probe(gan_gen, gan_cfg.iters - 1))});
    sink.save_csv(gan_cov, "gan_coverage.csv");

    // density heatmaps: real data, IMLE samples, GAN samples
    auto heatmap = [&](const std::vector<std::vector<float>>& pts, const std::string& name) {
        auto counts = histogram_2d(pts, bins, -range, range);
        sink.save_image(render_histogram(counts, bins), name);
    };
    Rng real_rng = Rng::stream(seed, "gmm_eval");
    heatmap(sample_gmm(spec, n_eval, real_rng), "real_heatmap");
    Rng ie = Rng::stream(seed, "imle_eval_codes");
    heatmap(generate_batch(gen, {}, draw_codes(n_eval, gcfg.latent_dim, ie)), "imle_heatmap");
    Rng ge = Rng::stream(seed, "gan_eval_codes");
    heatmap(generate_batch(gan_gen, {}, draw_codes(n_eval, gcfg.latent_dim, ge)), "gan_heatmap");

    json info;
    info["final_imle_coverage"] = probe(gen, tcfg.outer_iters);
    info["final_gan_coverage"] = probe(gan_gen, gan_cfg.iters);
    sink.write_manifest("mode-coverage", cfg, info);
}

// ---- MNIST-PCA (predict a digit from its coarse PCA reconstruction) ----

void cmd_mnist_pca(json cfg) {
    const uint64_t seed = take<uint64_t>(cfg, "seed", 0);
    ArtifactSink sink(take_str(cfg, "out_dir", "out/mnist_pca"));

    DigitData data = load_digit_data(cfg, seed);
    const int held_out = static_cast<int>(data.held_out.size());

    const int pca_keep = take(cfg, "pca_components", 12);
    const int pca_input = take(cfg, "pca_input_components", 10);
    if (pca_keep < pca_input + 2)
        throw std::runtime_error("pca_components must cover the two probe coordinates");
    const int samples_per_input = take(cfg, "samples_per_input", 20);
    const int marginal_samples = take(cfg, "marginal_samples", 200);
    const int nn_count = take(cfg, "nn_count", 10);
    const std::string metric_kind = take_str(cfg, "metric", "l2");
    const bool run_m1 = take(cfg, "m1_baseline", true);

    PcaModel pca = pca_fit(data.train, pca_keep);

    // x_i = reconstruction from the leading coordinates only
    auto coarse_input = [&](const std::vector<float>& img) {
        auto coords = pca.project(img);
        for (int c = pca_input; c < pca_keep; ++c) coords[c] = 0.0f;
        return pca.reconstruct(coords);
    };

    PairedDataset dataset;
    for (const auto& img : data.train) {
        dataset.inputs.push_back(coarse_input(img));
        dataset.targets.push_back(img);
    }

    GeneratorConfig gdef;
    gdef.input_dim = 784;
    gdef.latent_dim = 16;
    gdef.output_dim = 784;
    gdef.hidden = 64;
    gdef.growth = 32;
    gdef.num_rrdb = 1;
    gdef.dense_layers = 2;
    gdef.mapping_hidden = 48;
    gdef.mapping_layers = 2;
    GeneratorConfig gcfg = read_generator(sub_object(cfg, "generator"), gdef);

    TrainConfig tdef;
    tdef.m = 10;
    tdef.outer_iters = 300;
    tdef.inner_iters = 10;
    tdef.lr = 1e-3f;
    tdef.batch_size = 32;
    tdef.minibatch_size = 8;
    tdef.log_every = 10;
    TrainConfig tcfg = read_train(sub_object(cfg, "train"), tdef);
    tcfg.seed = seed;

    auto metric = make_metric(metric_kind, 784, seed);
    Rng init_rng = Rng::stream(seed, "imle_init");
    Generator gen(gcfg, init_rng);
    auto result = train_conditional(gen, dataset, tcfg, *metric);

    CsvWriter hist({"iter", "mean_selected_distance", "post_update_loss"});
    for (const auto& log : result.history)
        hist.add_row({std::to_string(log.iter), fmt_float(log.mean_selected_distance),
                      fmt_float(log.post_update_loss)});
    sink.save_csv(hist, "history.csv");

    // evaluation on held-out inputs
    PerceptualProxyMetric proxy(784, seed);
    Rng eval_rng = Rng::stream(seed, "eval_codes");
    CsvWriter variance({"model", "input_index", "mean_pixel_variance",
                        "mean_pairwise_proxy_distance", "first10_mean_abs_dev",
                        "first10_max_abs_dev"});
    CsvWriter summary({"input_index", "ref_c11", "ref_c12", "inside95"});

    std::vector<std::vector<float>> train_coords(data.train.size());
    parallel_for(static_cast<int>(data.train.size()), thread_cap(),
                 [&](int i) { train_coords[i] = pca.project(data.train[i]); });

    auto eval_model = [&](const Generator& g, const std::string& model_name, Rng& rng,
                          bool emit_artifacts) {
        for (int i = 0; i < held_out; ++i) {
            const auto& original = data.held_out[i];
            auto x = coarse_input(original);
            auto codes = draw_codes(marginal_samples, g.config().latent_dim, rng);
            auto preds = generate_batch(g, x, codes);
            auto grid_preds = std::vector<std::vector<float>>(
                preds.begin(), preds.begin() + std::min<size_t>(samples_per_input, preds.size()));

            // diagnostics
            double pixel_var = mean_pixel_variance(grid_preds);
            double pair_sum = 0.0;
            int pair_n = 0;
            for (size_t a = 0; a < grid_preds.size(); ++a)
                for (size_t b = a + 1; b < grid_preds.size(); ++b) {
                    pair_sum += proxy.distance_value(grid_preds[a], grid_preds[b]);
                    ++pair_n;
                }
            auto x_coords = pca.project(x);
            double dev_sum = 0.0, dev_max = 0.0;
            for (const auto& p : preds) {
                auto pc = pca.project(p);
                for (int c = 0; c < pca_input; ++c) {
                    double d = std::abs(pc[c] - x_coords[c]);
                    dev_sum += d;
                    dev_max = std::max(dev_max, d);
                }
            }
            variance.add_row({model_name, std::to_string(i), fmt_float(pixel_var),
                              fmt_float(pair_n ? pair_sum / pair_n : 0.0),
                              fmt_float(dev_sum / (static_cast<double>(preds.size()) * pca_input)),
                              fmt_float(dev_max)});

            if (!emit_artifacts) continue;

            // Fig-2a-style grid: input row / prediction row / original row
            std::vector<GrayImage> tiles;
            tiles.push_back(square_tile(x));
            for (int b = 1; b < samples_per_input; ++b) tiles.push_back(blank_tile(28));
            for (const auto& p : grid_preds) tiles.push_back(square_tile(p));
            tiles.push_back(square_tile(original));
            for (int b = 1; b < samples_per_input; ++b) tiles.push_back(blank_tile(28));
            sink.save_image(tile_grid(tiles, samples_per_input),
                            "sample_grid_" + std::to_string(i));

            // marginal over the two coordinates just past the input prefix
            auto ref_coords = pca.project(original);
            CsvWriter marg({"kind", "c11", "c12"});
            std::vector<std::array<float, 2>> pts;
            for (const auto& p : preds) {
                auto pc = pca.project(p);
                marg.add_row({"prediction", fmt_float(pc[pca_input]),
                              fmt_float(pc[pca_input + 1])});
                pts.push_back({pc[pca_input], pc[pca_input + 1]});
            }
            marg.add_row({"reference", fmt_float(ref_coords[pca_input]),
                          fmt_float(ref_coords[pca_input + 1])});
            for (const auto& [id, d] :
                 nearest_by_pca_prefix(train_coords, x_coords, pca_input, nn_count)) {
                (void)d;
                marg.add_row({"train_nn", fmt_float(train_coords[id][pca_input]),
                              fmt_float(train_coords[id][pca_input + 1])});
            }
            sink.save_csv(marg, "marginal_coords_" + std::to_string(i) + ".csv");

            bool inside = kde_inside_region(pts, {ref_coords[pca_input],
                                                  ref_coords[pca_input + 1]});
            summary.add_row({std::to_string(i), fmt_float(ref_coords[pca_input]),
                             fmt_float(ref_coords[pca_input + 1]),
                             inside ? "1" : "0"});
        }
    };

    eval_model(gen, "imle", eval_rng, true);

    // contrast baseline: the same architecture trained as plain regression
    if (run_m1) {
        TrainConfig m1cfg = tcfg;
        m1cfg.m = 1;
        // With m = 1 the loop is plain regression; one step per fresh code
        // batch keeps it an unbiased stochastic regression (re-fitting the
        // same frozen codes for many inner steps would re-teach latent
        // sensitivity every iteration).
        m1cfg.inner_iters = take(cfg, "m1_inner_iters", 1);
        m1cfg.minibatch_size = take(cfg, "m1_minibatch_size", tcfg.batch_size);
        m1cfg.outer_iters = take(cfg, "m1_outer_iters", 4 * tcfg.outer_iters);
        Rng m1_init = Rng::stream(seed, "m1_init");
        Generator m1_gen(gcfg, m1_init);
        train_conditional(m1_gen, dataset, m1cfg, *metric);
        // Settle phases: residual latent sensitivity is held up by optimizer
        // jitter (step-size scale) and by gradient noise burying the tiny
        // variance-reduction signal, so both the rate and the noise shrink —
        // smaller steps, much larger minibatches.
        const int settle_iters = take(cfg, "m1_settle_iters", 600);
        const int settle_mb = take(cfg, "m1_settle_minibatch", 512);
        std::vector<float> decays =
            take<std::vector<float>>(cfg, "m1_settle_decays", {0.1f, 0.01f});
        for (size_t ph = 0; ph < decays.size() && settle_iters > 0; ++ph) {
            TrainConfig st = m1cfg;
            st.outer_iters = settle_iters;
            st.lr = tcfg.lr * decays[ph];
            st.batch_size = settle_mb;
            st.minibatch_size = settle_mb;
            st.seed = seed + 1000 + ph;
            train_conditional(m1_gen, dataset, st, *metric);
        }
        Rng m1_eval = Rng::stream(seed, "m1_eval_codes");
        eval_model(m1_gen, "regression_m1", m1_eval, false);
    }

    sink.save_csv(variance, "variance.csv");
    sink.save_csv(summary, "marginal_summary.csv");

    // model + held-out data for downstream latent traversal
    save_checkpoint(gen.parameters(), sink.raw_path("model"));
    sink.path("model.bin"); // register the two files behind the prefix
    sink.path("model.json");
    {
        std::ofstream f(sink.path("model.config.json"), std::ios::binary);
        f << gcfg.to_json() << '\n';
    }
    write_idx_images(data.held_out_raw, sink.path("heldout_targets.idx"));
    std::vector<std::vector<float>> inputs;
    for (const auto& img : data.held_out) inputs.push_back(coarse_input(img));
    write_idx_images(to_idx(inputs), sink.path("heldout_inputs.idx"));

    sink.write_manifest("mnist-pca", cfg);
}

// ---- progressive super-resolution (7 -> 14 -> 28) ----

void cmd_progressive_sr(json cfg) {
    const uint64_t seed = take<uint64_t>(cfg, "seed", 0);
    ArtifactSink sink(take_str(cfg, "out_dir", "out/progressive_sr"));

    DigitData data = load_digit_data(cfg, seed);
    const int held_out = static_cast<int>(data.held_out.size());
    const int samples_per_input = take(cfg, "samples_per_input", 20);
    std::vector<float> sigmas = take<std::vector<float>>(cfg, "fwv_sigmas", {0.3f, 0.2f, 0.15f});
    std::vector<int> pool_sizes = take<std::vector<int>>(cfg, "pool_sizes", {10, 10});
    const int frechet_features = take(cfg, "frechet_features", 32);
    const int frechet_real = take(cfg, "frechet_real_count", 200);

    PairedDataset dataset;
    std::vector<std::vector<std::vector<float>>> stage_targets(2); // [stage][example]
    for (const auto& img : data.train) {
        dataset.inputs.push_back(downsample_avg(img, 28, 4));
        dataset.targets.push_back(img);
        stage_targets[0].push_back(downsample_avg(img, 28, 2));
        stage_targets[1].push_back(img);
    }

    ProgressiveConfig pdef;
    pdef.input_dim = 49;
    pdef.stage_output_dims = {196, 784};
    pdef.latent_dim = 16;
    pdef.stage_template.hidden = 64;
    pdef.stage_template.growth = 32;
    pdef.stage_template.num_rrdb = 1;
    pdef.stage_template.dense_layers = 2;
    pdef.stage_template.mapping_hidden = 48;
    pdef.stage_template.mapping_layers = 2;
    ProgressiveConfig pcfg = pdef;
    pcfg.latent_dim = take(cfg, "latent_dim", pdef.latent_dim);
    pcfg.stage_template = read_generator(sub_object(cfg, "stage_template"), pdef.stage_template);

    TrainConfig tdef;
    tdef.outer_iters = 300;
    tdef.inner_iters = 10;
    tdef.lr = 1e-3f;
    tdef.batch_size = 32;
    tdef.minibatch_size = 8;
    tdef.log_every = 10;
    TrainConfig tcfg = read_train(sub_object(cfg, "train"), tdef);
    tcfg.seed = seed;

    L2Metric metric;
    Rng init_rng = Rng::stream(seed, "progressive_init");
    ProgressiveGenerator pg(pcfg, init_rng);
    auto result = train_progressive(pg, dataset, stage_targets, pool_sizes, tcfg, metric);

    CsvWriter hist({"iter", "mean_selected_distance", "stage0_loss", "stage1_loss"});
    for (size_t r = 0; r < result.history.size(); ++r) {
        const auto& log = result.history[r];
        const auto& per = result.per_stage_loss[r];
        hist.add_row({std::to_string(log.iter), fmt_float(log.mean_selected_distance),
                      fmt_float(per.size() > 0 ? per[0] : 0.0f),
                      fmt_float(per.size() > 1 ? per[1] : 0.0f)});
    }
    sink.save_csv(hist, "history.csv");

    // test-time sampling: independent codes per stage
    const int stages = pg.num_stages();
    Rng eval_rng = Rng::stream(seed, "eval_codes");
    // per stage, per input, per sample
    std::vector<std::vector<std::vector<std::vector<float>>>> outs(
        stages, std::vector<std::vector<std::vector<float>>>(held_out));
    for (int i = 0; i < held_out; ++i) {
        auto x = downsample_avg(data.held_out[i], 28, 4);
        Tensor xt = Tensor::from({static_cast<int>(x.size())}, x);
        for (int s_idx = 0; s_idx < samples_per_input; ++s_idx) {
            std::vector<Tensor> zs;
            for (int s = 0; s < stages; ++s) {
                auto z = sample_latent(pcfg.latent_dim, eval_rng);
                zs.push_back(Tensor::from({static_cast<int>(z.size())}, z));
            }
            auto stage_out = pg.forward_all(xt, zs);
            for (int s = 0; s < stages; ++s)
                outs[s][i].push_back(stage_out[s].data());
        }
    }

    // per-stage grids: one row per held-out input
    for (int s = 0; s < stages; ++s) {
        std::vector<GrayImage> tiles, target_tiles;
        for (int i = 0; i < held_out; ++i) {
            for (const auto& o : outs[s][i]) tiles.push_back(square_tile(o));
            target_tiles.push_back(square_tile(
                s == stages - 1 ? data.held_out[i] : downsample_avg(data.held_out[i], 28, 2)));
        }
        sink.save_image(tile_grid(tiles, samples_per_input),
                        "stage" + std::to_string(s) + "_samples");
        sink.save_image(tile_grid(target_tiles, held_out),
                        "stage" + std::to_string(s) + "_targets");
    }
    {
        std::vector<GrayImage> in_tiles;
        for (int i = 0; i < held_out; ++i)
            in_tiles.push_back(square_tile(downsample_avg(data.held_out[i], 28, 4)));
        sink.save_image(tile_grid(in_tiles, held_out), "inputs");
    }

    // diversity (FWV in per-pixel RMS units so the bandwidths bite) and
    // pixelwise variance per stage
    const float unit = 1.0f / std::sqrt(784.0f);
    CsvWriter fwv_csv({"input_index", "sigma", "fwv"});
    CsvWriter var_csv({"stage", "input_index", "mean_pixel_variance"});
    for (int i = 0; i < held_out; ++i) {
        std::vector<std::vector<float>> finals;
        for (const auto& o : outs[stages - 1][i]) finals.push_back(scaled(o, unit));
        auto ref = scaled(data.held_out[i], unit);
        for (float sg : sigmas) {
            FwvConfig fc;
            fc.sigma = sg;
            fwv_csv.add_row({std::to_string(i), fmt_float(sg),
                             fmt_float(faithfulness_weighted_variance(finals, ref, fc))});
        }
        for (int s = 0; s < stages; ++s)
            var_csv.add_row({std::to_string(s), std::to_string(i),
                             fmt_float(mean_pixel_variance(outs[s][i]))});
    }
    sink.save_csv(fwv_csv, "fwv.csv");
    sink.save_csv(var_csv, "variance.csv");

    // Frechet feature distance on a fixed top-k PCA feature map
    PcaModel feat = pca_fit(data.train, frechet_features);
    std::vector<std::vector<float>> gen_feats, real_feats;
    for (int i = 0; i < held_out; ++i)
        for (const auto& o : outs[stages - 1][i]) gen_feats.push_back(feat.project(o));
    int real_n = std::min<int>(frechet_real, static_cast<int>(data.train.size()));
    for (int i = 0; i < real_n; ++i) real_feats.push_back(feat.project(data.train[i]));
    float fd = frechet_feature_distance(gen_feats, real_feats);
    CsvWriter sum_csv({"frechet_feature_distance"});
    sum_csv.add_row({fmt_float(fd)});
    sink.save_csv(sum_csv, "summary.csv");

    json info;
    info["frechet_feature_distance"] = fd;
    sink.write_manifest("progressive-sr", cfg, info);
}

// ---- latent traversal on a saved checkpoint ----

void cmd_traverse(json cfg) {
    const uint64_t seed = take<uint64_t>(cfg, "seed", 0);
    ArtifactSink sink(take_str(cfg, "out_dir", "out/traverse"));

    const std::string prefix = take_str(cfg, "checkpoint_prefix", "out/mnist_pca/model");
    const std::string targets_idx = take_str(cfg, "targets_idx", "out/mnist_pca/heldout_targets.idx");
    const std::string inputs_idx = take_str(cfg, "inputs_idx", "out/mnist_pca/heldout_inputs.idx");
    const int index = take(cfg, "index", 0);
    const int steps = take(cfg, "steps", 200);
    const float step_size = take(cfg, "step_size", 0.3f);
    const int snapshot_interval = std::max(1, take(cfg, "snapshot_interval", 10));
    const std::string metric_kind = take_str(cfg, "metric", "perceptual_proxy");

    std::ifstream cf(prefix + ".config.json");
    if (!cf) throw std::runtime_error("missing checkpoint config: " + prefix + ".config.json");
    std::string cfg_text((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
    GeneratorConfig gcfg = GeneratorConfig::from_json(cfg_text);
    Rng init_rng(0);
    Generator gen(gcfg, init_rng);
    ParamList params = gen.parameters();
    load_checkpoint(params, prefix);

    MnistSet targets = load_idx_images(targets_idx);
    if (index < 0 || index >= targets.count)
        throw std::runtime_error("traverse index out of range");
    auto y = targets.image_f32(index);
    if (static_cast<int>(y.size()) != gcfg.output_dim)
        throw std::runtime_error("target dimension does not match the checkpoint");

    std::vector<float> x;
    if (gcfg.input_dim > 0) {
        MnistSet inputs = load_idx_images(inputs_idx);
        if (index >= inputs.count) throw std::runtime_error("traverse index out of range");
        x = inputs.image_f32(index);
        if (static_cast<int>(x.size()) != gcfg.input_dim)
            throw std::runtime_error("input dimension does not match the checkpoint");
    }

    auto metric = make_metric(metric_kind, gcfg.output_dim, seed);
    Rng z_rng = Rng::stream(seed, "traverse_init");
    auto z0 = sample_latent(gcfg.latent_dim, z_rng);
    auto points = traverse_latent(gen, x, y, z0, steps, step_size, *metric);

    CsvWriter dist({"step", "distance"});
    for (size_t s = 0; s < points.size(); ++s)
        dist.add_row({std::to_string(s), fmt_float(points[s].distance)});
    sink.save_csv(dist, "distance.csv");

    std::vector<GrayImage> frames;
    for (int s = 0; s <= steps; s += snapshot_interval) {
        size_t idx = std::min<size_t>(s, points.size() - 1);
        frames.push_back(square_tile(points[idx].output));
    }
    sink.save_image(tile_grid(frames, static_cast<int>(frames.size())), "trajectory_strip");
    sink.save_image(square_tile(y), "target");

    json info;
    info["initial_distance"] = points.front().distance;
    info["final_distance"] = points.back().distance;
    sink.write_manifest("traverse", cfg, info);
}

// ---- approximate-NN benchmark ----

void cmd_dci_bench(json cfg) {
    const uint64_t seed = take<uint64_t>(cfg, "seed", 0);
    ArtifactSink sink(take_str(cfg, "out_dir", "out/dci_bench"));

    std::vector<int> ks = take<std::vector<int>>(cfg, "point_counts", {1000});
    std::vector<int> dims = take<std::vector<int>>(cfg, "dims", {16, 64});
    std::vector<float> fracs =
        take<std::vector<float>>(cfg, "budget_fractions", {0.05f, 0.1f, 0.2f, 0.5f, 1.0f});
    const int n_queries = take(cfg, "queries", 200);
    const int k_nn = take(cfg, "neighbors", 10);
    const int cap = thread_cap();

    CsvWriter csv({"k", "D", "budget", "recall1", "recall10", "us_per_query"});
    json timings = json::array();

    for (int k : ks) {
        for (int D : dims) {
            Rng rng = Rng::stream(seed ^ (static_cast<uint64_t>(k) * 1000003ull +
                                          static_cast<uint64_t>(D)),
                                  "dci_bench");
            std::vector<std::vector<float>> points(k), queries(n_queries);
            for (auto& p : points) p = rng.normal_vec(D);
            for (auto& q : queries) q = rng.normal_vec(D);

            BruteForceIndex brute(points);
            std::vector<std::vector<Neighbor>> truth(n_queries);
            parallel_for(n_queries, cap, [&](int i) { truth[i] = brute.query(queries[i], k_nn); });

            ProjectionIndexParams params;
            params.seed = seed;
            PrioritizedProjectionIndex index(points, params);

            for (float frac : fracs) {
                int budget = std::max(1, static_cast<int>(std::lround(frac * k)));
                std::vector<std::vector<Neighbor>> got(n_queries);
                auto t0 = std::chrono::steady_clock::now();
                parallel_for(n_queries, cap,
                             [&](int i) { got[i] = index.query(queries[i], k_nn, budget); });
                auto t1 = std::chrono::steady_clock::now();
                double us =
                    std::chrono::duration<double, std::micro>(t1 - t0).count() / n_queries;

                double hit1 = 0.0, hit10 = 0.0;
                for (int i = 0; i < n_queries; ++i) {
                    if (!got[i].empty() && got[i][0].id == truth[i][0].id) hit1 += 1.0;
                    int inter = 0;
                    for (const auto& g : got[i])
                        for (const auto& t : truth[i])
                            if (g.id == t.id) ++inter;
                    hit10 += static_cast<double>(inter) / truth[i].size();
                }
                // In sequential deterministic mode the CSV must be
                // byte-reproducible, so measured time goes to the manifest
                // and the timing column reads 0.
                timings.push_back({{"k", k}, {"D", D}, {"budget", budget}, {"us_per_query", us}});
                csv.add_row({std::to_string(k), std::to_string(D), std::to_string(budget),
                             fmt_float(hit1 / n_queries), fmt_float(hit10 / n_queries),
                             cap == 0 ? std::string("0") : fmt_float(us)});
            }
        }
    }
    sink.save_csv(csv, "dci_bench.csv");

    json info;
    info["timings"] = timings;
    info["threads"] = cap;
    sink.write_manifest("dci-bench", cfg, info);
}

void run_command(const std::string& name, json cfg) {
    if (name == "mode-coverage") cmd_mode_coverage(std::move(cfg));
    else if (name == "mnist-pca") cmd_mnist_pca(std::move(cfg));
    else if (name == "progressive-sr") cmd_progressive_sr(std::move(cfg));
    else if (name == "traverse") cmd_traverse(std::move(cfg));
    else if (name == "dci-bench") cmd_dci_bench(std::move(cfg));
    else throw std::invalid_argument("unknown command: " + name);
}

} // namespace imle
