#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "imle/rng.hpp"

namespace imle {

// ---- 2D Gaussian mixture (mode-coverage toy data) ----

struct GmmSpec {
    std::vector<std::array<float, 2>> centers;
    std::vector<float> stddevs; // per component
    std::vector<float> weights; // positive, sum to 1

    void validate() const;
    // K equal-weight components on a ring of radius 2, stddev 0.1.
    static GmmSpec ring(int k = 5, float radius = 2.0f, float stddev = 0.1f);
};

std::vector<std::vector<float>> sample_gmm(const GmmSpec& spec, int n, Rng& rng);

// ---- MNIST-style IDX files ----

struct BadMagicError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MnistSet {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> images; // count * rows * cols, row-major
    std::vector<uint8_t> labels; // may be empty if only images were loaded

    std::vector<float> image_f32(int i) const; // scaled to [0, 1]
};

MnistSet load_idx_images(const std::string& path);
void load_idx_labels(const std::string& path, MnistSet& set);
void write_idx_images(const MnistSet& set, const std::string& path);
void write_idx_labels(const MnistSet& set, const std::string& path);

// Procedural MNIST-like digits (jittered glyph renderings); lets the MNIST
// experiments run without the real files. Same IDX format either way.
MnistSet make_synthetic_digits(int n, Rng& rng);

// ---- PCA ----

struct PcaModel {
    std::vector<float> mean;        // D
    std::vector<float> components;  // k x D row-major, orthonormal rows
    std::vector<float> variances;   // k, non-increasing
    int dim = 0;
    int k = 0;

    std::vector<float> project(const std::vector<float>& x) const;
    std::vector<float> reconstruct(const std::vector<float>& coords) const;
};

PcaModel pca_fit(const std::vector<std::vector<float>>& data, int k);

// Indices (and coordinate-space distances) of the `count` dataset points
// whose first `prefix` PCA coordinates are closest to those of the query.
std::vector<std::pair<int, float>> nearest_by_pca_prefix(
    const std::vector<std::vector<float>>& dataset_coords,
    const std::vector<float>& query_coords, int prefix, int count);

// ---- resampling ----

// Non-overlapping factor x factor block means over a square image.
std::vector<float> downsample_avg(const std::vector<float>& image, int side, int factor);

} // namespace imle
