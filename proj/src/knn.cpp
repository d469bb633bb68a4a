#include "imle/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace imle {

namespace {

float euclid(const std::vector<float>& a, const std::vector<float>& b) {
    float acc = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

void check_points(const std::vector<std::vector<float>>& points, int& dim) {
    if (points.empty()) throw std::runtime_error("index: need at least one point");
    dim = static_cast<int>(points[0].size());
    for (const auto& p : points)
        if (static_cast<int>(p.size()) != dim)
            throw std::runtime_error("index: inconsistent point dimensions");
}

void sort_neighbors(std::vector<Neighbor>& v) {
    std::sort(v.begin(), v.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.id < b.id;
    });
}

} // namespace

// ---- brute force ----

BruteForceIndex::BruteForceIndex(std::vector<std::vector<float>> points)
    : points_(std::move(points)) {
    check_points(points_, dim_);
}

std::vector<Neighbor> BruteForceIndex::query(const std::vector<float>& q, int k_nn) const {
    if (k_nn < 1) throw std::runtime_error("query: k_nn must be >= 1");
    if (static_cast<int>(q.size()) != dim_) throw std::runtime_error("query: dim mismatch");
    std::vector<Neighbor> all(points_.size());
    for (size_t i = 0; i < points_.size(); ++i)
        all[i] = {static_cast<int>(i), euclid(q, points_[i])};
    sort_neighbors(all);
    if (static_cast<int>(all.size()) > k_nn) all.resize(k_nn);
    return all;
}

// ---- prioritized projection index ----

PrioritizedProjectionIndex::PrioritizedProjectionIndex(std::vector<std::vector<float>> points,
                                                       const ProjectionIndexParams& params)
    : points_(std::move(points)), params_(params) {
    check_points(points_, dim_);
    int num_lists = params_.num_simple * params_.num_composite;
    Rng rng = Rng::stream(params_.seed, "projection_index");
    directions_.reserve(num_lists);
    key_lists_.reserve(num_lists);
    for (int l = 0; l < num_lists; ++l) {
        std::vector<float> dir = rng.normal_vec(static_cast<size_t>(dim_));
        float norm = 0.0f;
        for (float x : dir) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : dir) x /= norm;
        std::vector<std::pair<float, int>> keys(points_.size());
        for (size_t i = 0; i < points_.size(); ++i) {
            float proj = 0.0f;
            for (int j = 0; j < dim_; ++j) proj += dir[j] * points_[i][j];
            keys[i] = {proj, static_cast<int>(i)};
        }
        std::sort(keys.begin(), keys.end());
        directions_.push_back(std::move(dir));
        key_lists_.push_back(std::move(keys));
    }
}

const std::vector<std::pair<float, int>>& PrioritizedProjectionIndex::list(int composite,
                                                                           int simple) const {
    return key_lists_[static_cast<size_t>(composite) * params_.num_simple + simple];
}

std::vector<Neighbor> PrioritizedProjectionIndex::query(const std::vector<float>& q, int k_nn,
                                                        int budget) const {
    if (k_nn < 1) throw std::runtime_error("query: k_nn must be >= 1");
    if (static_cast<int>(q.size()) != dim_) throw std::runtime_error("query: dim mismatch");
    const int n = static_cast<int>(points_.size());
    if (budget <= 0 || budget > n) budget = n;

    const int num_lists = static_cast<int>(key_lists_.size());
    std::vector<float> qproj(num_lists);
    for (int l = 0; l < num_lists; ++l) {
        float p = 0.0f;
        for (int j = 0; j < dim_; ++j) p += directions_[l][j] * q[j];
        qproj[l] = p;
    }

    // Two-sided cursor per list, seeded by binary search around q's key.
    struct Cursor {
        int lo, hi; // next candidates on each side
    };
    std::vector<Cursor> cursors(num_lists);
    // priority queue entry: (key gap, list, side) — side 0 = lo, 1 = hi
    struct Entry {
        float gap;
        int list;
        int side;
        bool operator>(const Entry& o) const { return gap > o.gap; }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> pq;

    auto push_side = [&](int l, int side) {
        const auto& keys = key_lists_[l];
        Cursor& c = cursors[l];
        int idx = side == 0 ? c.lo : c.hi;
        if (idx < 0 || idx >= n) return;
        pq.push({std::fabs(keys[idx].first - qproj[l]), l, side});
    };

    for (int l = 0; l < num_lists; ++l) {
        const auto& keys = key_lists_[l];
        auto it = std::lower_bound(keys.begin(), keys.end(),
                                   std::make_pair(qproj[l], std::numeric_limits<int>::min()));
        int hi = static_cast<int>(it - keys.begin());
        cursors[l] = {hi - 1, hi};
        push_side(l, 0);
        push_side(l, 1);
    }

    // A point "completes" once every simple list of some composite index has
    // reached it. Its accumulated sum of projection gaps over that composite
    // is a low-variance proxy for its true distance, so the walk overcollects
    // completions and spends the exact-distance budget on the best-scored ones.
    std::vector<std::vector<int>> visit_counts(
        params_.num_composite, std::vector<int>(points_.size(), 0));
    std::vector<std::vector<float>> gap_sums(
        params_.num_composite, std::vector<float>(points_.size(), 0.0f));
    std::vector<char> completed(points_.size(), 0);
    std::vector<std::pair<float, int>> scored; // (gap sum, id)
    const int target = budget >= n ? n : std::min(n, 4 * budget);
    while (!pq.empty() && static_cast<int>(scored.size()) < target) {
        Entry e = pq.top();
        pq.pop();
        Cursor& c = cursors[e.list];
        int idx = e.side == 0 ? c.lo-- : c.hi++;
        push_side(e.list, e.side);
        int id = key_lists_[e.list][idx].second;
        int composite = e.list / params_.num_simple;
        gap_sums[composite][id] += e.gap;
        if (++visit_counts[composite][id] < params_.num_simple || completed[id]) continue;
        completed[id] = 1;
        scored.emplace_back(gap_sums[composite][id], id);
    }
    std::sort(scored.begin(), scored.end());

    std::vector<Neighbor> candidates;
    candidates.reserve(budget);
    for (const auto& [score, id] : scored) {
        if (static_cast<int>(candidates.size()) >= budget) break;
        candidates.push_back({id, euclid(q, points_[id])});
    }

    sort_neighbors(candidates);
    if (static_cast<int>(candidates.size()) > k_nn) candidates.resize(k_nn);
    return candidates;
}

} // namespace imle
