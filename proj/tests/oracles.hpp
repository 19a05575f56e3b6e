#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <set>
#include <vector>

#include "pancut/affinity.hpp"
#include "pancut/panoptic_cut.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Independent reference implementations and fixture builders shared by the
// test binaries.  Everything here is written against the mathematical
// definitions directly -- brute-force enumeration, closed-form spectra, exact
// quadratic-cost filtering -- so a test that compares a library routine with
// its counterpart here exercises two separately-derived code paths.
// ============================================================================

namespace oracle {

// ---------------------------------------------------------------------------
// Normalized cut, from the definition
// ---------------------------------------------------------------------------

/// ncut of the bipartition encoded by `in_a` (true = side A), computed
/// directly from the weight matrix: cut/assoc(A,V) + cut/assoc(B,V).
inline double ncut_of_mask(const Eigen::MatrixXd& w, const std::vector<bool>& in_a) {
    const int n = static_cast<int>(w.rows());
    double cut = 0.0, assoc_a = 0.0, assoc_b = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            row += w(i, j);
            if (in_a[i] && !in_a[j]) cut += w(i, j);
        }
        (in_a[i] ? assoc_a : assoc_b) += row;
    }
    if (cut == 0.0) return 0.0;
    return cut / assoc_a + cut / assoc_b;
}

/// Minimum ncut over all 2^(n-1) - 1 proper bipartitions (node 0 fixed to A).
inline double brute_force_min_ncut(const Eigen::MatrixXd& w) {
    const int n = static_cast<int>(w.rows());
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t bits = 0; bits + 1 < (1u << (n - 1)); ++bits) {
        std::vector<bool> in_a(n, false);
        in_a[0] = true;
        for (int i = 1; i < n; ++i) in_a[i] = (bits >> (i - 1)) & 1;
        best = std::min(best, ncut_of_mask(w, in_a));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Closed-form spectra of (D - W) z = lambda D z for classic unit-weight graphs
// ---------------------------------------------------------------------------

/// Path on n nodes: lambda_k = 1 - cos(pi k / (n-1)), k = 0..n-1, ascending.
inline std::vector<double> path_eigenvalues(int n) {
    std::vector<double> vals(n);
    for (int k = 0; k < n; ++k) vals[k] = 1.0 - std::cos(M_PI * k / (n - 1));
    return vals;
}

/// Cycle on n nodes: lambda_k = 1 - cos(2 pi k / n), k = 0..n-1, sorted.
inline std::vector<double> cycle_eigenvalues(int n) {
    std::vector<double> vals(n);
    for (int k = 0; k < n; ++k) vals[k] = 1.0 - std::cos(2.0 * M_PI * k / n);
    std::sort(vals.begin(), vals.end());
    return vals;
}

/// Complete graph K_n without self-loops: 0 once, n/(n-1) with multiplicity n-1.
inline std::vector<double> complete_eigenvalues(int n) {
    std::vector<double> vals(n, static_cast<double>(n) / (n - 1));
    vals[0] = 0.0;
    return vals;
}

/// Unit-weight adjacency builders (zero diagonal).
inline Eigen::MatrixXd path_weights(int n) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) w(i, i + 1) = w(i + 1, i) = 1.0;
    return w;
}
inline Eigen::MatrixXd cycle_weights(int n) {
    Eigen::MatrixXd w = path_weights(n);
    w(0, n - 1) = w(n - 1, 0) = 1.0;
    return w;
}
inline Eigen::MatrixXd complete_weights(int n) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Ones(n, n);
    w.diagonal().setZero();
    return w;
}

/// Random symmetric weight matrix with every entry (diagonal included) drawn
/// uniformly from [lo, hi].
inline Eigen::MatrixXd random_weights(int n, std::mt19937_64& rng, double lo = 1e-5,
                                      double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) w(i, j) = w(j, i) = u(rng);
    return w;
}

/// D-weighted inner product of two vectors (for eigenvector comparisons).
inline double d_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                      const Eigen::VectorXd& degrees) {
    return a.cwiseProduct(degrees).dot(b);
}

// ---------------------------------------------------------------------------
// Hole filling by connected-component enumeration
// ---------------------------------------------------------------------------

/// Label each background 4-component with BFS; flip the components that never
/// touch the border.  A deliberately different traversal from the library's
/// border-seeded sweep.
inline std::vector<std::uint8_t> fill_holes_reference(const std::vector<std::uint8_t>& mask,
                                                      int rows, int cols) {
    std::vector<int> comp(mask.size(), -1);
    std::vector<bool> touches_border;
    int n_comp = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const std::size_t start = static_cast<std::size_t>(r) * cols + c;
            if (mask[start] || comp[start] != -1) continue;
            touches_border.push_back(false);
            std::queue<std::pair<int, int>> q;
            q.push({r, c});
            comp[start] = n_comp;
            while (!q.empty()) {
                auto [cr, cc] = q.front();
                q.pop();
                if (cr == 0 || cr == rows - 1 || cc == 0 || cc == cols - 1)
                    touches_border[n_comp] = true;
                const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const int nr = cr + dr[d], nc = cc + dc[d];
                    if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                    const std::size_t ni = static_cast<std::size_t>(nr) * cols + nc;
                    if (mask[ni] || comp[ni] != -1) continue;
                    comp[ni] = n_comp;
                    q.push({nr, nc});
                }
            }
            ++n_comp;
        }
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        out[i] = (mask[i] || !touches_border[comp[i]]) ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Exact quadratic-cost mean field
// ---------------------------------------------------------------------------

/// Reference mean-field iteration with exact pairwise message sums:
///   Q_i(l) <- softmax_l( log P_i(l) + w_s m_s(i,l) + w_b m_b(i,l) ),
///   m_k(i,l) = sum_{j != i} k(i,j) Q_j(l),
/// where the spatial kernel is exp(-|dp|^2 / 2 s_s^2) and the bilateral kernel
/// exp(-|dp|^2 / 2 s_xy^2 - |drgb|^2 / 2 s_rgb^2), both untruncated.
inline pancut::DenseGrid exact_mean_field(const pancut::DenseGrid& probs,
                                          const pancut::Image& image, int iterations,
                                          double sigma_s, double sigma_xy,
                                          double sigma_rgb, double w_s, double w_b) {
    const int h = probs.height, w = probs.width, labels = probs.channels;
    const std::size_t n = static_cast<std::size_t>(h) * w;

    // pairwise kernels, tabulated once
    Eigen::MatrixXd ks(n, n), kb(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const int yi = static_cast<int>(i) / w, xi = static_cast<int>(i) % w;
        const std::uint8_t* pi = image.px(yi, xi);
        for (std::size_t j = 0; j < n; ++j) {
            const int yj = static_cast<int>(j) / w, xj = static_cast<int>(j) % w;
            const double dp = double(yi - yj) * (yi - yj) + double(xi - xj) * (xi - xj);
            ks(i, j) = std::exp(-0.5 * dp / (sigma_s * sigma_s));
            const std::uint8_t* pj = image.px(yj, xj);
            double drgb = 0.0;
            for (int c = 0; c < 3; ++c)
                drgb += double(pi[c] - pj[c]) * (pi[c] - pj[c]);
            kb(i, j) = std::exp(-0.5 * dp / (sigma_xy * sigma_xy) -
                                0.5 * drgb / (sigma_rgb * sigma_rgb));
        }
        ks(i, i) = 0.0;  // messages exclude the pixel itself
        kb(i, i) = 0.0;
    }

    std::vector<double> log_unary(n * labels);
    for (std::size_t i = 0; i < n * labels; ++i)
        log_unary[i] = std::log(std::max(probs.data[i], 1e-12));

    pancut::DenseGrid q = probs;
    std::vector<double> score(n * labels);
    for (int it = 0; it < iterations; ++it) {
        for (int l = 0; l < labels; ++l) {
            Eigen::VectorXd plane(n);
            for (std::size_t i = 0; i < n; ++i) plane[i] = q.data[i * labels + l];
            const Eigen::VectorXd ms = ks * plane;
            const Eigen::VectorXd mb = kb * plane;
            for (std::size_t i = 0; i < n; ++i)
                score[i * labels + l] = log_unary[i * labels + l] + w_s * ms[i] + w_b * mb[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double mx = score[i * labels];
            for (int l = 1; l < labels; ++l) mx = std::max(mx, score[i * labels + l]);
            double sum = 0.0;
            for (int l = 0; l < labels; ++l) {
                const double e = std::exp(score[i * labels + l] - mx);
                q.data[i * labels + l] = e;
                sum += e;
            }
            for (int l = 0; l < labels; ++l) q.data[i * labels + l] /= sum;
        }
    }
    return q;
}

// ---------------------------------------------------------------------------
// Planted feature grids
// ---------------------------------------------------------------------------

struct Rect {
    int r0, c0, r1, c1;  // half-open
};

/// Vertical strips spanning rows 1..G-2; rows 0 and G-1 stay background.
/// Widths must tile the G columns.
inline std::vector<Rect> strip_rects(int grid, const std::vector<int>& widths) {
    std::vector<Rect> rects;
    int c = 0;
    for (int w : widths) {
        rects.push_back({1, c, grid - 1, c + w});
        c += w;
    }
    if (c != grid) throw std::logic_error("strip widths must tile the grid");
    return rects;
}

/// Region k gets unit direction e_k, the rest e_K; optional per-element
/// Gaussian noise on top.
inline pancut::FeatureMap planted_features(int grid, const std::vector<Rect>& rects,
                                           double sigma, std::mt19937_64& rng,
                                           int channels = 0, int patch_size = 8) {
    const int k_regions = static_cast<int>(rects.size());
    const int c = channels > 0 ? channels : k_regions + 1;
    pancut::FeatureMap fm;
    fm.height = grid;
    fm.width = grid;
    fm.channels = c;
    fm.patch_size = patch_size;
    fm.data.assign(static_cast<std::size_t>(grid) * grid * c, 0.0f);
    for (int r = 0; r < grid; ++r)
        for (int col = 0; col < grid; ++col) {
            int axis = k_regions;  // background direction
            for (int k = 0; k < k_regions; ++k)
                if (r >= rects[k].r0 && r < rects[k].r1 && col >= rects[k].c0 &&
                    col < rects[k].c1)
                    axis = k;
            fm.data[(static_cast<std::size_t>(r) * grid + col) * c + axis] = 1.0f;
        }
    if (sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& v : fm.data) v = static_cast<float>(v + noise(rng));
    }
    return fm;
}

inline std::set<int> rect_cells(int grid, const Rect& r) {
    std::set<int> cells;
    for (int row = r.r0; row < r.r1; ++row)
        for (int col = r.c0; col < r.c1; ++col) cells.insert(row * grid + col);
    return cells;
}

inline std::set<int> mask_cells(const std::vector<std::uint8_t>& mask) {
    std::set<int> cells;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) cells.insert(static_cast<int>(i));
    return cells;
}

inline double set_iou(const std::set<int>& a, const std::set<int>& b) {
    std::size_t inter = 0;
    for (int v : a) inter += b.count(v);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Best IoU of a target cell set against any discovered object mask.
inline double best_object_iou(const std::set<int>& target,
                              const std::vector<pancut::ObjectMask>& objects) {
    double best = 0.0;
    for (const auto& o : objects) best = std::max(best, set_iou(target, mask_cells(o.patch_mask)));
    return best;
}

// ---------------------------------------------------------------------------
// Misc random fixtures
// ---------------------------------------------------------------------------

inline pancut::Image random_image(int h, int w, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, 255);
    pancut::Image img;
    img.height = h;
    img.width = w;
    img.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(u(rng));
    return img;
}

/// Per-pixel distributions drawn from a symmetric Dirichlet via normalized
/// exponentials.
inline pancut::DenseGrid random_probs(int h, int w, int labels, std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    pancut::DenseGrid g = pancut::DenseGrid::zeros(h, w, labels);
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) {
        double sum = 0.0;
        for (int l = 0; l < labels; ++l) {
            g.data[i * labels + l] = e(rng);
            sum += g.data[i * labels + l];
        }
        for (int l = 0; l < labels; ++l) g.data[i * labels + l] /= sum;
    }
    return g;
}

inline std::vector<std::uint8_t> random_mask(int rows, int cols, double p_fg,
                                             std::mt19937_64& rng) {
    std::bernoulli_distribution b(p_fg);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(rows) * cols);
    for (auto& v : mask) v = b(rng) ? 1 : 0;
    return mask;
}

/// Disjointness plus exact cover: every patch is in exactly one object mask or
/// the background bitmap.
inline bool partition_is_exact(const pancut::PanopticCutResult& res) {
    const std::size_t total =
        static_cast<std::size_t>(res.grid_rows) * res.grid_cols;
    std::vector<int> owners(total, 0);
    for (const auto& o : res.objects) {
        if (o.patch_mask.size() != total) return false;
        for (std::size_t i = 0; i < total; ++i) owners[i] += o.patch_mask[i] ? 1 : 0;
    }
    if (res.background.size() != total) return false;
    for (std::size_t i = 0; i < total; ++i) owners[i] += res.background[i] ? 1 : 0;
    for (std::size_t i = 0; i < total; ++i)
        if (owners[i] != 1) return false;
    return true;
}

} // namespace oracle
