#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace imle {

// ---- shared plumbing ----

// Worker cap from the IMLE_LAB_THREADS environment variable.
// 0 (or unset / unparsable) means sequential deterministic mode.
int thread_cap();

// Runs fn(i) for i in [0, n). With cap <= 1 the loop is sequential; otherwise
// contiguous chunks are handed to up to `cap` threads. Results must be written
// to disjoint, preallocated slots so the outcome is identical either way.
void parallel_for(int n, int cap, const std::function<void(int)>& fn);

// RFC-4180-style CSV: fields containing comma, quote, CR or LF are quoted
// with internal quotes doubled; rows end in "\n"; first row is the header.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(std::vector<std::string> fields);
    void save(const std::string& path) const;

private:
    size_t width_;
    std::vector<std::vector<std::string>> rows_;
};

// Shortest stable decimal rendering ("%.9g"); the CSV cells it produces are
// byte-identical across reruns of the same computation.
std::string fmt_float(double v);

// 2D histogram over [lo, hi)^2; out-of-range points clamp to the border bin.
// Row-major, bins x bins; entries sum to points.size().
std::vector<uint64_t> histogram_2d(const std::vector<std::vector<float>>& points,
                                   int bins, float lo, float hi);

// Gaussian-KDE membership probe: fit a product-kernel KDE (Scott bandwidth
// per axis) to `points`, threshold at the (1 - coverage) quantile of the
// points' own densities, and report whether `ref` clears the threshold.
bool kde_inside_region(const std::vector<std::array<float, 2>>& points,
                       const std::array<float, 2>& ref, double coverage = 0.95);

// Parses a JSON config file; throws with the path in the message on failure.
nlohmann::json load_config_file(const std::string& path);

// ---- commands ----
// Each command reads its settings from `cfg` (missing keys fall back to
// defaults), writes artifacts only below cfg["out_dir"], and finishes by
// writing run_manifest.json (effective config echo + content hash per output).

void cmd_mode_coverage(nlohmann::json cfg);
void cmd_mnist_pca(nlohmann::json cfg);
void cmd_progressive_sr(nlohmann::json cfg);
void cmd_traverse(nlohmann::json cfg);
void cmd_dci_bench(nlohmann::json cfg);

// Dispatch by subcommand name; throws std::invalid_argument on unknown names.
void run_command(const std::string& name, nlohmann::json cfg);

} // namespace imle
