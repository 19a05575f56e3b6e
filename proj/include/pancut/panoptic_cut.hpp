#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "pancut/affinity.hpp"
#include "pancut/errors.hpp"
#include "pancut/spectral.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Panoptic cut
//
// Iteratively bipartitions the patch graph by the Fiedler vector's mean
// threshold, keeps the heuristically-selected foreground side as an object,
// and recurses on the rest.  Discovery halts when too few nodes remain, the
// iteration cap is hit, or the cut degenerates (constant eigenvector, or a
// structureless graph whose algebraic connectivity is ~1, where every
// bipartition is equally bad).  Whatever remains is background.
// ============================================================================

namespace pancut {

struct CutConfig {
    int max_iters = 16;
    int min_nodes = 5;
    double epsilon_w = kDefaultEpsilonW;
    bool affine_shift = false;            // (1+cos)/2 instead of clamping
    double degenerate_lambda = 0.999;     // lambda2 at/above this = no structure
    SolverConfig solver;
};

struct PanopticCutResult {
    std::vector<ObjectMask> objects;      // patch-level masks, discovery order
    std::vector<std::uint8_t> background; // grid bitmap of unassigned patches
    int grid_rows = 0, grid_cols = 0;
    int iterations = 0;                   // bipartitions actually performed
    std::vector<double> lambdas;          // lambda2 per iteration (diagnostics)
};

/// Mean-threshold split: A = { nodes[i] : z_i > mean(z) }, B = the rest.
inline std::pair<std::vector<int>, std::vector<int>> bipartition(
    const Eigen::VectorXd& z, const std::vector<int>& nodes) {
    const int n = static_cast<int>(nodes.size());
    if (n < 2 || z.size() != n)
        throw PartitionError("bipartition needs |nodes| = len(z) >= 2");
    const double mean = z.mean();
    std::vector<int> a, b;
    for (int i = 0; i < n; ++i)
        (z[i] > mean ? a : b).push_back(nodes[i]);
    if (a.empty() || b.empty())
        throw DegenerateCutError("mean threshold produced an empty side (constant z)");
    return {std::move(a), std::move(b)};
}

/// Foreground heuristics: the side holding max |z| is the candidate; it wins
/// unless it covers 2+ of the active-extent corner nodes, in which case the
/// other side is foreground.  Corners are recomputed from the nodes still
/// active here, since original image corners may already be consumed.
inline std::vector<int> select_foreground(const std::vector<int>& a,
                                          const std::vector<int>& b,
                                          const Eigen::VectorXd& z,
                                          const std::vector<int>& nodes,
                                          const std::vector<int>& coord_row,
                                          const std::vector<int>& coord_col) {
    const int n = static_cast<int>(nodes.size());
    if (a.empty() || b.empty() || z.size() != n)
        throw PartitionError("select_foreground needs a valid bipartition");

    std::unordered_map<int, int> local;  // node id -> position in z/coords
    local.reserve(n);
    for (int i = 0; i < n; ++i) local.emplace(nodes[i], i);

    int arg = 0;
    double best = -1.0;
    int min_r = coord_row[0], max_r = coord_row[0];
    int min_c = coord_col[0], max_c = coord_col[0];
    for (int i = 0; i < n; ++i) {
        const double mag = std::abs(z[i]);
        if (mag > best) {
            best = mag;
            arg = i;
        }
        min_r = std::min(min_r, coord_row[i]);
        max_r = std::max(max_r, coord_row[i]);
        min_c = std::min(min_c, coord_col[i]);
        max_c = std::max(max_c, coord_col[i]);
    }

    bool arg_in_a = false;
    for (int id : a)
        if (id == nodes[arg]) {
            arg_in_a = true;
            break;
        }
    const std::vector<int>& candidate = arg_in_a ? a : b;
    const std::vector<int>& other = arg_in_a ? b : a;

    const int corner_coords[4][2] = {
        {min_r, min_c}, {min_r, max_c}, {max_r, min_c}, {max_r, max_c}};
    int corners_in_candidate = 0;
    for (auto& rc : corner_coords) {
        // a corner only exists if some active node occupies that exact cell
        for (int id : candidate) {
            const int i = local.at(id);
            if (coord_row[i] == rc[0] && coord_col[i] == rc[1]) {
                ++corners_in_candidate;
                break;
            }
        }
    }
    return corners_in_candidate <= 1 ? candidate : other;
}

/// Full discovery loop over a feature map; returns disjoint object masks plus
/// the background remainder.
inline PanopticCutResult panoptic_cut(const FeatureMap& features, const CutConfig& cfg = {}) {
    if (cfg.max_iters < 1) throw RangeError("max_iters must be >= 1");
    if (cfg.min_nodes < 2) throw RangeError("min_nodes must be >= 2");
    const int total = features.height * features.width;
    if (total == 0) throw EmptyGraphError("feature map has no patches");

    PanopticCutResult res;
    res.grid_rows = features.height;
    res.grid_cols = features.width;
    res.background.assign(total, 1);

    std::vector<int> remaining(total);
    for (int i = 0; i < total; ++i) remaining[i] = i;
    if (total < cfg.min_nodes) return res;  // nothing to cut; all background

    const AffinityGraph full =
        build_affinity(features, {}, cfg.epsilon_w, cfg.affine_shift);

    while (static_cast<int>(remaining.size()) >= cfg.min_nodes &&
           res.iterations < cfg.max_iters) {
        const AffinityGraph sub = subgraph(full, remaining);
        const EigenPair fiedler = fiedler_pair(sub, cfg.solver);
        res.lambdas.push_back(fiedler.value);
        if (fiedler.value >= cfg.degenerate_lambda) break;  // no cluster structure

        std::vector<int> a, b;
        try {
            std::tie(a, b) = bipartition(fiedler.vector, remaining);
        } catch (const DegenerateCutError&) {
            break;  // halt discovery; remainder stays background
        }
        const std::vector<int> fg = select_foreground(a, b, fiedler.vector, remaining,
                                                      sub.coord_row, sub.coord_col);

        ObjectMask mask;
        mask.id = static_cast<int>(res.objects.size()) + 1;
        mask.discovery_order = res.iterations;
        mask.grid_rows = res.grid_rows;
        mask.grid_cols = res.grid_cols;
        mask.patch_mask.assign(total, 0);
        for (int id : fg) {
            mask.patch_mask[id] = 1;
            res.background[id] = 0;
        }
        res.objects.push_back(std::move(mask));

        std::vector<int> next;
        next.reserve(remaining.size() - fg.size());
        std::vector<std::uint8_t> in_fg(total, 0);
        for (int id : fg) in_fg[id] = 1;
        for (int id : remaining)
            if (!in_fg[id]) next.push_back(id);
        remaining = std::move(next);
        ++res.iterations;
    }
    return res;
}

} // namespace pancut
