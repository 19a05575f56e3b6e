#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "pancut/errors.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Patch affinity graph
//
// Nodes are patch-grid cells; edge weights are clamped cosine similarities
// between their embeddings.  Dense storage only — the N x N cost is intrinsic
// to the method, so sizes beyond kMaxNodes are refused instead of degraded.
// ============================================================================

namespace pancut {

constexpr int kMaxNodes = 16384;       // 128 x 128 patch grid
constexpr double kDefaultEpsilonW = 1e-5;

struct AffinityGraph {
    int n = 0;
    int grid_rows = 0, grid_cols = 0;
    Eigen::MatrixXd weights;           // symmetric, non-negative
    std::vector<int> coord_row;        // per-node grid position
    std::vector<int> coord_col;
    std::vector<int> zero_norm_nodes;  // nodes whose features had zero norm

    /// Row sums of W (degree vector), diagonal included.
    Eigen::VectorXd degrees() const { return weights.rowwise().sum(); }
};

/// Wrap an explicit symmetric weight matrix (test graphs, oracles).  Unlike
/// build_affinity this performs no clamping, so zero edges and zero diagonals
/// are representable; degrees must stay positive for spectral use.
inline AffinityGraph make_graph_from_weights(const Eigen::MatrixXd& weights,
                                             std::vector<int> coord_row = {},
                                             std::vector<int> coord_col = {},
                                             int grid_rows = 0, int grid_cols = 0) {
    const int n = static_cast<int>(weights.rows());
    if (n == 0) throw EmptyGraphError("weight matrix has no nodes");
    if (weights.cols() != n) throw ShapeError("weight matrix must be square");
    if (n > kMaxNodes)
        throw SizeError("graph has " + std::to_string(n) + " nodes; dense limit is " +
                        std::to_string(kMaxNodes));
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            if (weights(i, j) != weights(j, i))
                throw DataError("weight matrix is not symmetric at (" + std::to_string(i) +
                                "," + std::to_string(j) + ")");
            if (weights(i, j) < 0.0)
                throw DataError("negative weight at (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
        }

    AffinityGraph g;
    g.n = n;
    g.weights = weights;
    if (coord_row.empty()) {  // default: lay nodes out on a single row
        g.coord_row.assign(n, 0);
        g.coord_col.resize(n);
        for (int i = 0; i < n; ++i) g.coord_col[i] = i;
        g.grid_rows = 1;
        g.grid_cols = n;
    } else {
        if (static_cast<int>(coord_row.size()) != n ||
            static_cast<int>(coord_col.size()) != n)
            throw ShapeError("coordinate arrays must have one entry per node");
        g.coord_row = std::move(coord_row);
        g.coord_col = std::move(coord_col);
        g.grid_rows = grid_rows;
        g.grid_cols = grid_cols;
    }
    return g;
}

/// Build the clamped-cosine affinity graph over the given active nodes
/// (row-major patch ids; empty = every patch).  affine_shift switches the
/// negative-cosine treatment from clamping to (1+cos)/2.
inline AffinityGraph build_affinity(const FeatureMap& features,
                                    const std::vector<int>& active = {},
                                    double epsilon_w = kDefaultEpsilonW,
                                    bool affine_shift = false) {
    const int total = features.height * features.width;
    std::vector<int> nodes = active;
    if (nodes.empty()) {
        nodes.resize(total);
        for (int i = 0; i < total; ++i) nodes[i] = i;
    }
    const int n = static_cast<int>(nodes.size());
    if (n == 0) throw EmptyGraphError("active node set is empty");
    if (n > kMaxNodes)
        throw SizeError("graph has " + std::to_string(n) + " nodes; dense limit is " +
                        std::to_string(kMaxNodes));
    if (features.channels < 1) throw ShapeError("feature map has no channels");

    AffinityGraph g;
    g.n = n;
    g.grid_rows = features.height;
    g.grid_cols = features.width;
    g.coord_row.resize(n);
    g.coord_col.resize(n);

    std::vector<double> norms(n);
    for (int i = 0; i < n; ++i) {
        const int id = nodes[i];
        if (id < 0 || id >= total)
            throw RangeError("active node id " + std::to_string(id) + " out of grid");
        g.coord_row[i] = id / features.width;
        g.coord_col[i] = id % features.width;
        const float* f = features.at(g.coord_row[i], g.coord_col[i]);
        double s = 0.0;
        for (int c = 0; c < features.channels; ++c) s += double(f[c]) * f[c];
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0) g.zero_norm_nodes.push_back(i);
    }

    // upper triangle once, then mirror: symmetric to the last ULP
    g.weights.resize(n, n);
    for (int i = 0; i < n; ++i) {
        g.weights(i, i) = 1.0;
        const float* fi = features.at(g.coord_row[i], g.coord_col[i]);
        for (int j = i + 1; j < n; ++j) {
            double w;
            if (norms[i] == 0.0 || norms[j] == 0.0) {
                w = epsilon_w;  // padded/degenerate export: minimal uniform affinity
            } else {
                const float* fj = features.at(g.coord_row[j], g.coord_col[j]);
                double dot = 0.0;
                for (int c = 0; c < features.channels; ++c) dot += double(fi[c]) * fj[c];
                double cos = dot / (norms[i] * norms[j]);
                if (cos > 1.0) cos = 1.0;
                if (cos < -1.0) cos = -1.0;
                w = affine_shift ? (1.0 + cos) / 2.0 : cos;
                if (w < epsilon_w) w = epsilon_w;
            }
            g.weights(i, j) = w;
            g.weights(j, i) = w;
        }
    }
    return g;
}

/// cut(A,B) + normalized-association objective, exactly per the definition:
/// ncut = cut/assoc(A,V) + cut/assoc(B,V), assoc summing all edges incident
/// to the side (self-weights included when present).
inline double ncut_objective(const AffinityGraph& g, const std::vector<int>& a,
                             const std::vector<int>& b) {
    if (a.empty() || b.empty()) throw PartitionError("bipartition side is empty");
    std::vector<signed char> side(g.n, 0);
    for (int i : a) {
        if (i < 0 || i >= g.n) throw PartitionError("node id out of range in side A");
        side[i] = 1;
    }
    for (int i : b) {
        if (i < 0 || i >= g.n) throw PartitionError("node id out of range in side B");
        if (side[i]) throw PartitionError("sides overlap at node " + std::to_string(i));
        side[i] = 2;
    }
    for (int i = 0; i < g.n; ++i)
        if (!side[i]) throw PartitionError("node " + std::to_string(i) + " not assigned");

    double cut = 0.0, assoc_a = 0.0, assoc_b = 0.0;
    for (int i = 0; i < g.n; ++i) {
        double row = 0.0;
        for (int j = 0; j < g.n; ++j) {
            row += g.weights(i, j);
            if (side[i] == 1 && side[j] == 2) cut += g.weights(i, j);
        }
        (side[i] == 1 ? assoc_a : assoc_b) += row;
    }
    const double ta = cut == 0.0 ? 0.0 : cut / assoc_a;
    const double tb = cut == 0.0 ? 0.0 : cut / assoc_b;
    return ta + tb;
}

/// Restriction of the graph to `keep` (indices into g's node list).
inline AffinityGraph subgraph(const AffinityGraph& g, const std::vector<int>& keep) {
    if (keep.empty()) throw EmptyGraphError("subgraph keep-set is empty");
    AffinityGraph s;
    s.n = static_cast<int>(keep.size());
    s.grid_rows = g.grid_rows;
    s.grid_cols = g.grid_cols;
    s.weights.resize(s.n, s.n);
    s.coord_row.resize(s.n);
    s.coord_col.resize(s.n);
    for (int i = 0; i < s.n; ++i) {
        const int gi = keep[i];
        if (gi < 0 || gi >= g.n)
            throw RangeError("keep index " + std::to_string(gi) + " out of range");
        s.coord_row[i] = g.coord_row[gi];
        s.coord_col[i] = g.coord_col[gi];
        for (int j = 0; j < s.n; ++j) s.weights(i, j) = g.weights(gi, keep[j]);
    }
    for (int z : g.zero_norm_nodes)
        for (int i = 0; i < s.n; ++i)
            if (keep[i] == z) s.zero_norm_nodes.push_back(i);
    return s;
}

} // namespace pancut
