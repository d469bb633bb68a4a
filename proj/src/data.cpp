#include "imle/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Dense>

namespace imle {

// ---- GMM ----

void GmmSpec::validate() const {
    if (centers.empty()) throw std::runtime_error("GmmSpec: no components");
    if (stddevs.size() != centers.size() || weights.size() != centers.size())
        throw std::runtime_error("GmmSpec: component count mismatch");
    float wsum = 0.0f;
    for (float w : weights) {
        if (w <= 0.0f) throw std::runtime_error("GmmSpec: weights must be positive");
        wsum += w;
    }
    if (std::fabs(wsum - 1.0f) > 1e-4f)
        throw std::runtime_error("GmmSpec: weights must sum to 1");
}

GmmSpec GmmSpec::ring(int k, float radius, float stddev) {
    GmmSpec spec;
    for (int i = 0; i < k; ++i) {
        float a = 6.283185307f * static_cast<float>(i) / static_cast<float>(k);
        spec.centers.push_back({radius * std::cos(a), radius * std::sin(a)});
        spec.stddevs.push_back(stddev);
        spec.weights.push_back(1.0f / static_cast<float>(k));
    }
    return spec;
}

std::vector<std::vector<float>> sample_gmm(const GmmSpec& spec, int n, Rng& rng) {
    spec.validate();
    if (n < 1) throw std::runtime_error("sample_gmm: n must be >= 1");
    std::vector<std::vector<float>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        size_t c = 0;
        double acc = 0.0;
        for (; c < spec.weights.size(); ++c) {
            acc += spec.weights[c];
            if (u < acc) break;
        }
        if (c == spec.weights.size()) c = spec.weights.size() - 1;
        float s = spec.stddevs[c];
        out.push_back({spec.centers[c][0] + s * static_cast<float>(rng.normal()),
                       spec.centers[c][1] + s * static_cast<float>(rng.normal())});
    }
    return out;
}

// ---- IDX ----

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw TruncatedFileError("idx: truncated header in " + path);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

} // namespace

MnistSet load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    uint32_t magic = read_be32(in, path);
    if (magic != kImageMagic)
        throw BadMagicError("idx: bad image magic in " + path + " (got 0x" +
                            [&] { char b[16]; snprintf(b, sizeof b, "%08x", magic); return std::string(b); }() +
                            ", want 0x00000803)");
    MnistSet set;
    set.count = static_cast<int>(read_be32(in, path));
    set.rows = static_cast<int>(read_be32(in, path));
    set.cols = static_cast<int>(read_be32(in, path));
    size_t n = static_cast<size_t>(set.count) * set.rows * set.cols;
    set.images.resize(n);
    in.read(reinterpret_cast<char*>(set.images.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw TruncatedFileError("idx: image payload in " + path + " is " +
                                 std::to_string(in.gcount()) + " bytes, header implies " +
                                 std::to_string(n));
    return set;
}

void load_idx_labels(const std::string& path, MnistSet& set) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    uint32_t magic = read_be32(in, path);
    if (magic != kLabelMagic) throw BadMagicError("idx: bad label magic in " + path);
    int count = static_cast<int>(read_be32(in, path));
    if (count != set.count)
        throw std::runtime_error("idx: label count " + std::to_string(count) +
                                 " != image count " + std::to_string(set.count));
    set.labels.resize(count);
    in.read(reinterpret_cast<char*>(set.labels.data()), count);
    if (in.gcount() != count) throw TruncatedFileError("idx: label payload truncated in " + path);
}

void write_idx_images(const MnistSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("idx: cannot write " + path);
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<uint32_t>(set.count));
    write_be32(out, static_cast<uint32_t>(set.rows));
    write_be32(out, static_cast<uint32_t>(set.cols));
    out.write(reinterpret_cast<const char*>(set.images.data()),
              static_cast<std::streamsize>(set.images.size()));
}

void write_idx_labels(const MnistSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("idx: cannot write " + path);
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<uint32_t>(set.count));
    out.write(reinterpret_cast<const char*>(set.labels.data()),
              static_cast<std::streamsize>(set.labels.size()));
}

std::vector<float> MnistSet::image_f32(int i) const {
    size_t px = static_cast<size_t>(rows) * cols;
    std::vector<float> out(px);
    const uint8_t* src = images.data() + static_cast<size_t>(i) * px;
    for (size_t j = 0; j < px; ++j) out[j] = static_cast<float>(src[j]) / 255.0f;
    return out;
}

// ---- synthetic digits ----

namespace {

// 7x7 glyph stencils for digits 0-9
const char* kGlyphs[10][7] = {
    {".XXXX.", "X....X", "X....X", "X....X", "X....X", "X....X", ".XXXX."},
    {"...X..", "..XX..", "...X..", "...X..", "...X..", "...X..", "..XXX."},
    {".XXXX.", "X....X", ".....X", "...XX.", "..X...", ".X....", "XXXXXX"},
    {"XXXXX.", ".....X", ".....X", "..XXX.", ".....X", ".....X", "XXXXX."},
    {"X...X.", "X...X.", "X...X.", "XXXXXX", "....X.", "....X.", "....X."},
    {"XXXXXX", "X.....", "X.....", "XXXXX.", ".....X", ".....X", "XXXXX."},
    {".XXXX.", "X.....", "X.....", "XXXXX.", "X....X", "X....X", ".XXXX."},
    {"XXXXXX", ".....X", "....X.", "...X..", "..X...", "..X...", "..X..."},
    {".XXXX.", "X....X", "X....X", ".XXXX.", "X....X", "X....X", ".XXXX."},
    {".XXXX.", "X....X", "X....X", ".XXXXX", ".....X", ".....X", ".XXXX."},
};

float glyph_sample(int digit, float u, float v) {
    // bilinear sample of the stencil, zero outside
    if (u < 0.0f || v < 0.0f || u >= 6.999f || v >= 6.999f) return 0.0f;
    int r0 = static_cast<int>(v), c0 = static_cast<int>(u);
    float fv = v - r0, fu = u - c0;
    auto at = [&](int r, int c) -> float {
        if (r < 0 || r > 6 || c < 0 || c > 5) return 0.0f;
        return kGlyphs[digit][r][c] == 'X' ? 1.0f : 0.0f;
    };
    return at(r0, c0) * (1 - fu) * (1 - fv) + at(r0, c0 + 1) * fu * (1 - fv) +
           at(r0 + 1, c0) * (1 - fu) * fv + at(r0 + 1, c0 + 1) * fu * fv;
}

} // namespace

MnistSet make_synthetic_digits(int n, Rng& rng) {
    MnistSet set;
    set.count = n;
    set.rows = set.cols = 28;
    set.images.resize(static_cast<size_t>(n) * 784);
    set.labels.resize(n);
    std::vector<float> img(784), blur(784);
    for (int i = 0; i < n; ++i) {
        int digit = static_cast<int>(rng.uniform_index(10));
        float scl = static_cast<float>(rng.uniform(0.75, 1.15));
        float rot = static_cast<float>(rng.uniform(-0.25, 0.25));
        float tx = static_cast<float>(rng.uniform(-2.5, 2.5));
        float ty = static_cast<float>(rng.uniform(-2.5, 2.5));
        float amp = static_cast<float>(rng.uniform(0.7, 1.0));
        float ca = std::cos(rot), sa = std::sin(rot);
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c) {
                // map image coords back into glyph coords (glyph center 3, 3.5)
                float x = (c - 13.5f - tx) / (3.2f * scl);
                float y = (r - 13.5f - ty) / (3.2f * scl);
                float u = ca * x + sa * y + 2.75f;
                float v = -sa * x + ca * y + 3.0f;
                img[r * 28 + c] = amp * glyph_sample(digit, u, v);
            }
        // separable 3-tap blur
        auto tap = [&](const std::vector<float>& src, int r, int c) {
            if (r < 0 || r > 27 || c < 0 || c > 27) return 0.0f;
            return src[r * 28 + c];
        };
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c)
                blur[r * 28 + c] = 0.25f * tap(img, r, c - 1) + 0.5f * tap(img, r, c) +
                                   0.25f * tap(img, r, c + 1);
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c) {
                float v = 0.25f * tap(blur, r - 1, c) + 0.5f * tap(blur, r, c) +
                          0.25f * tap(blur, r + 1, c);
                v += 0.02f * static_cast<float>(rng.normal());
                int px = static_cast<int>(std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f));
                set.images[static_cast<size_t>(i) * 784 + r * 28 + c] =
                    static_cast<uint8_t>(px);
            }
        set.labels[i] = static_cast<uint8_t>(digit);
    }
    return set;
}

// ---- PCA ----

PcaModel pca_fit(const std::vector<std::vector<float>>& data, int k) {
    if (data.empty()) throw std::runtime_error("pca_fit: empty data");
    const int n = static_cast<int>(data.size());
    const int d = static_cast<int>(data[0].size());
    if (k < 1 || k > std::min(n, d))
        throw std::runtime_error("pca_fit: k=" + std::to_string(k) + " out of range for n=" +
                                 std::to_string(n) + ", D=" + std::to_string(d));
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = data[i][j];
    Eigen::VectorXd mean = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);

    PcaModel model;
    model.dim = d;
    model.k = k;
    model.mean.resize(d);
    for (int j = 0; j < d; ++j) model.mean[j] = static_cast<float>(mean(j));
    model.components.resize(static_cast<size_t>(k) * d);
    model.variances.resize(k);
    // eigenvalues come back ascending; take the top k, descending
    for (int c = 0; c < k; ++c) {
        int src = d - 1 - c;
        Eigen::VectorXd comp = es.eigenvectors().col(src);
        // sign convention: largest-magnitude entry positive
        int arg = 0;
        for (int j = 1; j < d; ++j)
            if (std::fabs(comp(j)) > std::fabs(comp(arg))) arg = j;
        if (comp(arg) < 0) comp = -comp;
        for (int j = 0; j < d; ++j)
            model.components[static_cast<size_t>(c) * d + j] = static_cast<float>(comp(j));
        model.variances[c] = static_cast<float>(std::max(es.eigenvalues()(src), 0.0));
    }
    return model;
}

std::vector<float> PcaModel::project(const std::vector<float>& x) const {
    if (static_cast<int>(x.size()) != dim) throw std::runtime_error("pca_project: dim mismatch");
    std::vector<float> coords(k, 0.0f);
    for (int c = 0; c < k; ++c) {
        float acc = 0.0f;
        const float* row = components.data() + static_cast<size_t>(c) * dim;
        for (int j = 0; j < dim; ++j) acc += row[j] * (x[j] - mean[j]);
        coords[c] = acc;
    }
    return coords;
}

std::vector<float> PcaModel::reconstruct(const std::vector<float>& coords) const {
    if (static_cast<int>(coords.size()) != k)
        throw std::runtime_error("pca_reconstruct: coord dim mismatch");
    std::vector<float> x(mean);
    for (int c = 0; c < k; ++c) {
        const float* row = components.data() + static_cast<size_t>(c) * dim;
        for (int j = 0; j < dim; ++j) x[j] += coords[c] * row[j];
    }
    return x;
}

std::vector<std::pair<int, float>> nearest_by_pca_prefix(
    const std::vector<std::vector<float>>& dataset_coords,
    const std::vector<float>& query_coords, int prefix, int count) {
    if (count > static_cast<int>(dataset_coords.size()))
        throw std::runtime_error("nearest_by_pca_prefix: count exceeds dataset size");
    std::vector<std::pair<int, float>> all(dataset_coords.size());
    for (size_t i = 0; i < dataset_coords.size(); ++i) {
        float acc = 0.0f;
        for (int j = 0; j < prefix; ++j) {
            float d = dataset_coords[i][j] - query_coords[j];
            acc += d * d;
        }
        all[i] = {static_cast<int>(i), std::sqrt(acc)};
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    all.resize(count);
    return all;
}

// ---- downsample ----

std::vector<float> downsample_avg(const std::vector<float>& image, int side, int factor) {
    if (factor < 1 || side % factor != 0)
        throw std::runtime_error("downsample_avg: side " + std::to_string(side) +
                                 " not divisible by factor " + std::to_string(factor));
    if (static_cast<int>(image.size()) != side * side)
        throw std::runtime_error("downsample_avg: image size mismatch");
    int out_side = side / factor;
    std::vector<float> out(static_cast<size_t>(out_side) * out_side, 0.0f);
    float inv = 1.0f / static_cast<float>(factor * factor);
    for (int r = 0; r < out_side; ++r)
        for (int c = 0; c < out_side; ++c) {
            float acc = 0.0f;
            for (int dr = 0; dr < factor; ++dr)
                for (int dc = 0; dc < factor; ++dc)
                    acc += image[(r * factor + dr) * side + (c * factor + dc)];
            out[r * out_side + c] = acc * inv;
        }
    return out;
}

} // namespace imle
