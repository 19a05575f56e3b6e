#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pancut/errors.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Mask refinement
//
// - fill_holes:       flood fill from the border; enclosed background flips
// - upsample_mask:    bilinear {0,1} interpolation, > 0.5 keeps foreground
// - crf_refine:       joint multi-label mean-field with Potts compatibility
//                     and spatial + bilateral Gaussian kernels; messages are
//                     approximated by separable Gaussian filtering (the
//                     bilateral kernel on a coarse 5-D grid)
// - resolve_overlaps: earlier discovery order wins contested pixels
// ============================================================================

namespace pancut {

struct CrfConfig {
    int iterations = 10;
    double spatial_sigma = 3.0;
    double bilateral_sigma_xy = 40.0;
    double bilateral_sigma_rgb = 13.0;
    double compat_spatial = 3.0;
    double compat_bilateral = 10.0;
    double unary_smoothing = 0.1;  // mask -> probability smoothing constant
};

// ---------------------------------------------------------------------------
// Hole filling
// ---------------------------------------------------------------------------

/// Flip every background component (4-connectivity) that does not touch the
/// border.  Foreground is never removed; idempotent.
inline std::vector<std::uint8_t> fill_holes(const std::vector<std::uint8_t>& mask,
                                            int rows, int cols) {
    if (rows <= 0 || cols <= 0 ||
        mask.size() != static_cast<std::size_t>(rows) * cols)
        throw ShapeError("fill_holes: mask buffer does not match its dimensions");

    std::vector<std::uint8_t> reachable(mask.size(), 0);
    std::vector<int> stack;
    auto push = [&](int r, int c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        if (!mask[i] && !reachable[i]) {
            reachable[i] = 1;
            stack.push_back(static_cast<int>(i));
        }
    };
    for (int c = 0; c < cols; ++c) {
        push(0, c);
        push(rows - 1, c);
    }
    for (int r = 0; r < rows; ++r) {
        push(r, 0);
        push(r, cols - 1);
    }
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        const int r = i / cols, c = i % cols;
        if (r > 0) push(r - 1, c);
        if (r + 1 < rows) push(r + 1, c);
        if (c > 0) push(r, c - 1);
        if (c + 1 < cols) push(r, c + 1);
    }

    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        out[i] = (mask[i] || !reachable[i]) ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Upsampling
// ---------------------------------------------------------------------------

/// Bilinear interpolation of a {0,1} patch grid to pixel resolution, with
/// pixel-center alignment; values strictly above 0.5 become foreground.
inline std::vector<std::uint8_t> upsample_mask(const std::vector<std::uint8_t>& mask,
                                               int grid_rows, int grid_cols,
                                               int patch_size, int target_h,
                                               int target_w) {
    if (grid_rows <= 0 || grid_cols <= 0 ||
        mask.size() != static_cast<std::size_t>(grid_rows) * grid_cols)
        throw ShapeError("upsample_mask: mask buffer does not match its dimensions");
    if (patch_size < 1) throw RangeError("upsample_mask: patch_size must be >= 1");
    if (target_h < grid_rows || target_w < grid_cols)
        throw ShapeError("upsample_mask: target dims must be >= patch grid dims");

    std::vector<std::uint8_t> out(static_cast<std::size_t>(target_h) * target_w);
    const double sy = static_cast<double>(grid_rows) / target_h;
    const double sx = static_cast<double>(grid_cols) / target_w;
    for (int y = 0; y < target_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(grid_rows - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, grid_rows - 1);
        const double wy = fy - y0;
        for (int x = 0; x < target_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(grid_cols - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, grid_cols - 1);
            const double wx = fx - x0;
            const double v00 = mask[static_cast<std::size_t>(y0) * grid_cols + x0];
            const double v01 = mask[static_cast<std::size_t>(y0) * grid_cols + x1];
            const double v10 = mask[static_cast<std::size_t>(y1) * grid_cols + x0];
            const double v11 = mask[static_cast<std::size_t>(y1) * grid_cols + x1];
            const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                             wy * ((1 - wx) * v10 + wx * v11);
            out[static_cast<std::size_t>(y) * target_w + x] = v > 0.5 ? 1 : 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mean-field CRF
// ---------------------------------------------------------------------------

namespace detail {

/// 1-D unnormalized Gaussian taps exp(-d^2 / (2 sigma^2)), d in [-R, R].
inline std::vector<double> gaussian_taps(double sigma, int radius) {
    std::vector<double> taps(2 * radius + 1);
    for (int d = -radius; d <= radius; ++d)
        taps[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
    return taps;
}

/// In-place separable full-resolution Gaussian over one plane (rows x cols).
inline void separable_blur(std::vector<double>& plane, int rows, int cols,
                           const std::vector<double>& taps) {
    const int radius = static_cast<int>(taps.size() / 2);
    std::vector<double> tmp(plane.size(), 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            const int lo = std::max(0, c - radius), hi = std::min(cols - 1, c + radius);
            for (int cc = lo; cc <= hi; ++cc)
                acc += taps[cc - c + radius] * plane[static_cast<std::size_t>(r) * cols + cc];
            tmp[static_cast<std::size_t>(r) * cols + c] = acc;
        }
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) {
            double acc = 0.0;
            const int lo = std::max(0, r - radius), hi = std::min(rows - 1, r + radius);
            for (int rr = lo; rr <= hi; ++rr)
                acc += taps[rr - r + radius] * tmp[static_cast<std::size_t>(rr) * cols + c];
            plane[static_cast<std::size_t>(r) * cols + c] = acc;
        }
}

/// Coarse 5-D bilateral grid: multilinear splat, separable Gaussian blur of
/// one-cell sigma along every axis, multilinear slice.  Approximates the map
/// q -> sum_j exp(-|dpos|^2/(2 sxy^2) - |drgb|^2/(2 srgb^2)) q_j per plane.
class BilateralGrid {
public:
    static constexpr int kPad = 3;  // blur radius in cells

    BilateralGrid(const Image& img, double sigma_xy, double sigma_rgb) {
        dims_[0] = static_cast<int>((img.height - 1) / sigma_xy) + 2 + 2 * kPad;
        dims_[1] = static_cast<int>((img.width - 1) / sigma_xy) + 2 + 2 * kPad;
        for (int c = 0; c < 3; ++c)
            dims_[2 + c] = static_cast<int>(255.0 / sigma_rgb) + 2 + 2 * kPad;
        strides_[4] = 1;
        for (int a = 3; a >= 0; --a)
            strides_[a] = strides_[a + 1] * static_cast<std::size_t>(dims_[a + 1]);
        cells_.assign(strides_[0] * static_cast<std::size_t>(dims_[0]), 0.0);

        const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
        coord_.resize(n * 5);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
                const std::uint8_t* px = img.px(y, x);
                coord_[i * 5 + 0] = y / sigma_xy + kPad;
                coord_[i * 5 + 1] = x / sigma_xy + kPad;
                for (int c = 0; c < 3; ++c)
                    coord_[i * 5 + 2 + c] = px[c] / sigma_rgb + kPad;
            }
        taps_ = gaussian_taps(1.0, kPad);
    }

    /// Apply the bilateral kernel to one label plane (pixel-ordered values).
    std::vector<double> filter(const std::vector<double>& q) {
        std::fill(cells_.begin(), cells_.end(), 0.0);
        const std::size_t n = coord_.size() / 5;
        for (std::size_t i = 0; i < n; ++i)
            visit_corners(i, [&](std::size_t idx, double w) { cells_[idx] += w * q[i]; });
        blur();
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            visit_corners(i, [&](std::size_t idx, double w) { out[i] += w * cells_[idx]; });
        return out;
    }

private:
    template <typename Fn>
    void visit_corners(std::size_t i, Fn&& fn) const {
        int base[5];
        double frac[5];
        for (int a = 0; a < 5; ++a) {
            const double v = coord_[i * 5 + a];
            base[a] = static_cast<int>(v);
            frac[a] = v - base[a];
        }
        for (int corner = 0; corner < 32; ++corner) {
            double w = 1.0;
            std::size_t idx = 0;
            for (int a = 0; a < 5; ++a) {
                const int hi = (corner >> a) & 1;
                w *= hi ? frac[a] : 1.0 - frac[a];
                idx += static_cast<std::size_t>(base[a] + hi) * strides_[a];
            }
            fn(idx, w);
        }
    }

    void blur() {
        const int radius = static_cast<int>(taps_.size() / 2);
        std::vector<double> tmp(cells_.size());
        for (int axis = 0; axis < 5; ++axis) {
            const std::size_t stride = strides_[axis];
            const int dim = dims_[axis];
            tmp.swap(cells_);
            for (std::size_t i = 0; i < cells_.size(); ++i) {
                const int pos = static_cast<int>((i / stride) % dim);
                const int lo = std::max(0, pos - radius);
                const int hi = std::min(dim - 1, pos + radius);
                const double* src = tmp.data() + i - pos * stride;  // axis origin
                double acc = 0.0;
                for (int p = lo; p <= hi; ++p)
                    acc += taps_[p - pos + radius] * src[static_cast<std::size_t>(p) * stride];
                cells_[i] = acc;
            }
        }
    }

    int dims_[5];
    std::size_t strides_[5];
    std::vector<double> cells_;
    std::vector<double> coord_;  // 5 grid coordinates per pixel
    std::vector<double> taps_;
};

} // namespace detail

/// Mean-field iterations returning the final per-pixel distributions.  The
/// update for pixel i and label l is
///   Q_i(l) <- softmax_l( log P_i(l) + w_s * m_s(i,l) + w_b * m_b(i,l) )
/// where m_k(i,l) = sum_{j != i} k(i,j) Q_j(l) with unnormalized Gaussian
/// kernels; the self tap (k=1) is subtracted after filtering.
inline DenseGrid crf_refine_probs(const DenseGrid& probs, const Image& image,
                                  const CrfConfig& cfg) {
    if (cfg.iterations < 1) throw RangeError("crf iterations must be >= 1");
    if (!(cfg.spatial_sigma > 0.0) || !(cfg.bilateral_sigma_xy > 0.0) ||
        !(cfg.bilateral_sigma_rgb > 0.0))
        throw RangeError("crf sigmas must be positive");
    if (probs.height != image.height || probs.width != image.width)
        throw ShapeError("crf_refine: probability grid is " + std::to_string(probs.width) +
                         "x" + std::to_string(probs.height) + " but image is " +
                         std::to_string(image.width) + "x" + std::to_string(image.height));
    const int h = probs.height, w = probs.width, labels = probs.channels;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (labels < 1) throw ShapeError("crf_refine: no labels");
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int l = 0; l < labels; ++l) {
            const double p = probs.data[i * labels + l];
            if (p < 0.0) throw DataError("crf_refine: negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw DataError("crf_refine: pixel distribution sums to " + std::to_string(sum));
    }

    // log-unary; floor avoids -inf on exact zeros
    std::vector<double> log_unary(n * labels);
    for (std::size_t i = 0; i < n * labels; ++i)
        log_unary[i] = std::log(std::max(probs.data[i], 1e-12));

    const std::vector<double> spatial_taps =
        detail::gaussian_taps(cfg.spatial_sigma,
                              static_cast<int>(std::ceil(4.0 * cfg.spatial_sigma)));
    detail::BilateralGrid grid(image, cfg.bilateral_sigma_xy, cfg.bilateral_sigma_rgb);

    DenseGrid q = probs;
    std::vector<double> plane(n), score(n * labels);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int l = 0; l < labels; ++l) {
            for (std::size_t i = 0; i < n; ++i) plane[i] = q.data[i * labels + l];
            std::vector<double> spatial = plane;
            detail::separable_blur(spatial, h, w, spatial_taps);
            std::vector<double> bilateral = grid.filter(plane);
            for (std::size_t i = 0; i < n; ++i) {
                const double m_s = spatial[i] - plane[i];     // drop self tap
                const double m_b = bilateral[i] - plane[i];
                score[i * labels + l] = log_unary[i * labels + l] +
                                        cfg.compat_spatial * m_s +
                                        cfg.compat_bilateral * m_b;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {  // per-pixel softmax
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

/// Argmax label map after cfg.iterations mean-field updates.
inline LabelMap crf_refine(const DenseGrid& probs, const Image& image,
                           const CrfConfig& cfg) {
    const DenseGrid q = crf_refine_probs(probs, image, cfg);
    LabelMap out;
    out.height = q.height;
    out.width = q.width;
    out.labels.resize(static_cast<std::size_t>(q.height) * q.width);
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        int best = 0;
        for (int l = 1; l < q.channels; ++l)
            if (q.data[i * q.channels + l] > q.data[i * q.channels + best]) best = l;
        out.labels[i] = best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overlap resolution
// ---------------------------------------------------------------------------

/// Give contested pixels to the mask with the earliest discovery_order and
/// drop masks that end up empty.  Masks must share one resolution.
inline std::vector<ObjectMask> resolve_overlaps(std::vector<ObjectMask> masks) {
    if (masks.empty()) return masks;
    const int h = masks.front().pixel_h, w = masks.front().pixel_w;
    for (const auto& m : masks)
        if (m.pixel_h != h || m.pixel_w != w ||
            m.pixel_mask.size() != static_cast<std::size_t>(h) * w)
            throw ShapeError("resolve_overlaps: masks disagree on resolution");

    std::vector<int> order(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return masks[x].discovery_order < masks[y].discovery_order;
    });

    std::vector<std::int32_t> owner(static_cast<std::size_t>(h) * w, -1);
    for (int idx : order) {
        auto& m = masks[idx];
        for (std::size_t p = 0; p < m.pixel_mask.size(); ++p) {
            if (!m.pixel_mask[p]) continue;
            if (owner[p] == -1)
                owner[p] = idx;
            else
                m.pixel_mask[p] = 0;  // contested: earlier discovery wins
        }
    }

    std::vector<ObjectMask> out;
    out.reserve(masks.size());
    for (auto& m : masks)
        if (m.pixel_area() > 0) out.push_back(std::move(m));
    return out;
}

// ---------------------------------------------------------------------------
// Refinement driver
// ---------------------------------------------------------------------------

/// Build the smoothed label distribution {objects..., background} from
/// disjoint pixel masks: own label 1-s, every other label s/(L-1).
inline DenseGrid masks_to_probs(const std::vector<ObjectMask>& masks, int h, int w,
                                double smoothing) {
    const int labels = static_cast<int>(masks.size()) + 1;  // + background
    DenseGrid probs = DenseGrid::zeros(h, w, labels);
    std::vector<std::int32_t> owner(static_cast<std::size_t>(h) * w,
                                    labels - 1);  // default: background
    for (std::size_t k = 0; k < masks.size(); ++k)
        for (std::size_t p = 0; p < masks[k].pixel_mask.size(); ++p)
            if (masks[k].pixel_mask[p]) owner[p] = static_cast<std::int32_t>(k);
    const double off = labels > 1 ? smoothing / (labels - 1) : 0.0;
    for (std::size_t p = 0; p < owner.size(); ++p)
        for (int l = 0; l < labels; ++l)
            probs.data[p * labels + l] = (l == owner[p]) ? 1.0 - smoothing : off;
    return probs;
}

/// Upsample patch masks to pixel resolution, fill holes, optionally run the
/// joint CRF, and restore disjointness.  Masks come back finalized.
inline std::vector<ObjectMask> refine_masks(std::vector<ObjectMask> masks, int target_h,
                                            int target_w, int patch_size,
                                            const Image* image, bool use_crf,
                                            const CrfConfig& cfg = {}) {
    for (auto& m : masks) {
        m.pixel_mask = upsample_mask(m.patch_mask, m.grid_rows, m.grid_cols, patch_size,
                                     target_h, target_w);
        m.pixel_h = target_h;
        m.pixel_w = target_w;
        m.pixel_mask = fill_holes(m.pixel_mask, target_h, target_w);
    }
    masks = resolve_overlaps(std::move(masks));

    if (use_crf && !masks.empty()) {
        if (!image) throw ShapeError("refine_masks: CRF requested without an image");
        const DenseGrid probs = masks_to_probs(masks, target_h, target_w,
                                               cfg.unary_smoothing);
        const LabelMap refined = crf_refine(probs, *image, cfg);
        for (std::size_t k = 0; k < masks.size(); ++k) {
            auto& m = masks[k];
            for (std::size_t p = 0; p < m.pixel_mask.size(); ++p)
                m.pixel_mask[p] = refined.labels[p] == static_cast<std::int32_t>(k) ? 1 : 0;
            m.pixel_mask = fill_holes(m.pixel_mask, target_h, target_w);
        }
        masks = resolve_overlaps(std::move(masks));
    }
    return masks;
}

} // namespace pancut
