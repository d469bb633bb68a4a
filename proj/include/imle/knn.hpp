#pragma once

#include <cstdint>
#include <vector>

#include "imle/rng.hpp"

namespace imle {

struct Neighbor {
    int id;
    float distance;
};

// Exact Euclidean nearest neighbors by full scan. Ties resolve to lower id.
class BruteForceIndex {
public:
    explicit BruteForceIndex(std::vector<std::vector<float>> points);

    std::vector<Neighbor> query(const std::vector<float>& q, int k_nn) const;
    int size() const { return static_cast<int>(points_.size()); }
    int dim() const { return dim_; }

private:
    std::vector<std::vector<float>> points_;
    int dim_ = 0;
};

struct ProjectionIndexParams {
    int num_simple = 64;    // projection directions per composite index
    int num_composite = 2;
    uint64_t seed = 0;
};

// DCI-flavored prioritized search: random unit projections with sorted key
// lists; candidates are expanded in order of closest projected key across all
// lists and re-ranked by exact distance. Exact once the visit budget reaches
// the point count.
class PrioritizedProjectionIndex {
public:
    PrioritizedProjectionIndex(std::vector<std::vector<float>> points,
                               const ProjectionIndexParams& params);

    // budget = max number of exact-distance evaluations (distinct points);
    // budget <= 0 means unlimited.
    std::vector<Neighbor> query(const std::vector<float>& q, int k_nn, int budget) const;

    int size() const { return static_cast<int>(points_.size()); }
    int dim() const { return dim_; }
    // sorted (projection value, point id) pairs for one list; for tests
    const std::vector<std::pair<float, int>>& list(int composite, int simple) const;

private:
    std::vector<std::vector<float>> points_;
    int dim_ = 0;
    ProjectionIndexParams params_;
    std::vector<std::vector<float>> directions_;                 // one per list, unit norm
    std::vector<std::vector<std::pair<float, int>>> key_lists_;  // sorted by key
};

} // namespace imle
