#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pancut/errors.hpp"
#include "pancut/grounding.hpp"
#include "pancut/mask_refine.hpp"
#include "pancut/panoptic_cut.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Whole-image orchestration: discover masks once on the full frame, refine
// them at pixel resolution, then ground them against text by pooling a
// window-aggregated cosine-logit field.  Sliding windows overlap; overlapping
// contributions are averaged per pixel, so logits stay bounded cosines.
// ============================================================================

namespace pancut {

struct WindowPlan {
    int image_h = 0, image_w = 0;
    int window_h = 0, window_w = 0;   // clamped to image dims when small
    int stride = 0;
    std::vector<std::pair<int, int>> origins;  // (top, left) per crop
    std::vector<std::int32_t> coverage;        // per pixel, row-major, >= 1
};

namespace detail {

/// Origins along one axis: march by stride, then clamp the last window flush
/// with the far edge so every position is covered exactly once at minimum.
inline std::vector<int> axis_origins(int dim, int window, int stride) {
    std::vector<int> out;
    if (window >= dim) {
        out.push_back(0);
        return out;
    }
    for (int o = 0;; o += stride) {
        if (o + window >= dim) {
            if (out.empty() || out.back() != dim - window) out.push_back(dim - window);
            break;
        }
        out.push_back(o);
    }
    return out;
}

} // namespace detail

/// Tile an image with fixed windows and stride.  Small images collapse to a
/// single full-frame window per axis.
inline WindowPlan plan_windows(int image_h, int image_w, int window = 224,
                               int stride = 112) {
    if (image_h <= 0 || image_w <= 0) throw ShapeError("plan_windows: empty image");
    if (window <= 0 || stride <= 0 || stride > window)
        throw RangeError("plan_windows: need 0 < stride <= window");
    WindowPlan plan;
    plan.image_h = image_h;
    plan.image_w = image_w;
    plan.window_h = std::min(window, image_h);
    plan.window_w = std::min(window, image_w);
    plan.stride = stride;
    const std::vector<int> rows = detail::axis_origins(image_h, plan.window_h, stride);
    const std::vector<int> cols = detail::axis_origins(image_w, plan.window_w, stride);
    for (int r : rows)
        for (int c : cols) plan.origins.emplace_back(r, c);

    plan.coverage.assign(static_cast<std::size_t>(image_h) * image_w, 0);
    for (const auto& [top, left] : plan.origins)
        for (int y = top; y < top + plan.window_h; ++y)
            for (int x = left; x < left + plan.window_w; ++x)
                ++plan.coverage[static_cast<std::size_t>(y) * image_w + x];
    for (auto c : plan.coverage)
        if (c < 1) throw PartitionError("plan_windows: coverage hole");  // unreachable
    return plan;
}

/// Cosine logits of every feature patch against every text embedding.
/// Zero-norm patches contribute zero logits.
inline DenseGrid patch_logit_map(const FeatureMap& features, const TextEmbeddingSet& texts) {
    if (features.channels != texts.dim)
        throw ShapeError("patch_logit_map: feature dim " + std::to_string(features.channels) +
                         " vs text dim " + std::to_string(texts.dim));
    DenseGrid grid = DenseGrid::zeros(features.height, features.width, texts.count());
    std::vector<double> tnorm(texts.count());
    for (int y = 0; y < texts.count(); ++y) {
        const float* t = texts.vec(y);
        double n = 0.0;
        for (int d = 0; d < texts.dim; ++d) n += double(t[d]) * t[d];
        tnorm[y] = std::sqrt(n);
    }
    for (int r = 0; r < features.height; ++r)
        for (int c = 0; c < features.width; ++c) {
            const float* f = features.at(r, c);
            double fn = 0.0;
            for (int d = 0; d < features.channels; ++d) fn += double(f[d]) * f[d];
            fn = std::sqrt(fn);
            if (fn == 0.0) continue;
            double* out = grid.at(r, c);
            for (int y = 0; y < texts.count(); ++y) {
                if (tnorm[y] == 0.0) continue;
                double dot = 0.0;
                const float* t = texts.vec(y);
                for (int d = 0; d < features.channels; ++d) dot += double(f[d]) * t[d];
                out[y] = std::clamp(dot / (fn * tnorm[y]), -1.0, 1.0);
            }
        }
    return grid;
}

/// Bilinear resize of a multi-channel grid with pixel-center alignment (the
/// same convention as mask upsampling), clamping at the borders.
inline DenseGrid resize_grid_bilinear(const DenseGrid& src, int dst_h, int dst_w) {
    if (dst_h <= 0 || dst_w <= 0) throw ShapeError("resize_grid_bilinear: empty target");
    DenseGrid dst = DenseGrid::zeros(dst_h, dst_w, src.channels);
    const double sy = static_cast<double>(src.height) / dst_h;
    const double sx = static_cast<double>(src.width) / dst_w;
    for (int y = 0; y < dst_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < dst_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            const double* p00 = src.at(y0, x0);
            const double* p01 = src.at(y0, x1);
            const double* p10 = src.at(y1, x0);
            const double* p11 = src.at(y1, x1);
            double* out = dst.at(y, x);
            for (int ch = 0; ch < src.channels; ++ch)
                out[ch] = (1 - wy) * ((1 - wx) * p00[ch] + wx * p01[ch]) +
                          wy * ((1 - wx) * p10[ch] + wx * p11[ch]);
        }
    }
    return dst;
}

/// Scatter per-crop logit maps back onto the full frame and divide by the
/// coverage count, i.e. a per-pixel mean over the windows that saw the pixel.
inline DenseGrid aggregate_logits(const std::vector<DenseGrid>& crops,
                                  const WindowPlan& plan) {
    if (crops.size() != plan.origins.size())
        throw ShapeError("aggregate_logits: " + std::to_string(crops.size()) +
                         " crops for " + std::to_string(plan.origins.size()) + " windows");
    if (crops.empty()) throw ShapeError("aggregate_logits: no crops");
    const int channels = crops.front().channels;
    DenseGrid field = DenseGrid::zeros(plan.image_h, plan.image_w, channels);
    for (std::size_t k = 0; k < crops.size(); ++k) {
        const DenseGrid& crop = crops[k];
        if (crop.height != plan.window_h || crop.width != plan.window_w ||
            crop.channels != channels)
            throw ShapeError("aggregate_logits: crop " + std::to_string(k) +
                             " does not match the window plan");
        const auto [top, left] = plan.origins[k];
        for (int y = 0; y < crop.height; ++y)
            for (int x = 0; x < crop.width; ++x) {
                const double* in = crop.at(y, x);
                double* out = field.at(top + y, left + x);
                for (int ch = 0; ch < channels; ++ch) out[ch] += in[ch];
            }
    }
    for (int y = 0; y < plan.image_h; ++y)
        for (int x = 0; x < plan.image_w; ++x) {
            const double inv =
                1.0 / plan.coverage[static_cast<std::size_t>(y) * plan.image_w + x];
            double* out = field.at(y, x);
            for (int ch = 0; ch < channels; ++ch) out[ch] *= inv;
        }
    return field;
}

struct PipelineConfig {
    CutConfig cut;
    CrfConfig crf;
    bool use_crf = true;
    int window = 224;
    int stride = 112;
    bool mean_merge = false;         // background merge: mean instead of max
    std::int32_t background_class = 0;  // painted for background; <0 = none
};

struct SegmentationResult {
    LabelMap label_map;                    // dataset class ids per pixel
    std::vector<ObjectMask> masks;         // refined, disjoint
    std::vector<ObjectLogits> object_logits;  // per object, text-label space
    std::vector<double> lambdas;           // discovery eigenvalue trace
    int iterations = 0;
    double fallback_fraction = 0.0;        // pixels labeled without an object
};

namespace detail {

/// Slice a window's patch block out of a full-frame feature map.  Window
/// origins are pixel coordinates; the block is the smallest patch-aligned
/// cover of the window.
inline FeatureMap slice_features(const FeatureMap& full, int top, int left, int win_h,
                                 int win_w, int patch) {
    const int r0 = std::clamp(top / patch, 0, full.height - 1);
    const int c0 = std::clamp(left / patch, 0, full.width - 1);
    const int r1 = std::clamp((top + win_h + patch - 1) / patch, r0 + 1, full.height);
    const int c1 = std::clamp((left + win_w + patch - 1) / patch, c0 + 1, full.width);
    FeatureMap crop;
    crop.height = r1 - r0;
    crop.width = c1 - c0;
    crop.channels = full.channels;
    crop.patch_size = full.patch_size;
    crop.source_tag = full.source_tag;
    crop.data.resize(static_cast<std::size_t>(crop.height) * crop.width * crop.channels);
    for (int r = 0; r < crop.height; ++r)
        std::copy_n(full.at(r0 + r, c0),
                    static_cast<std::size_t>(crop.width) * crop.channels,
                    crop.data.begin() + static_cast<std::size_t>(r) * crop.width * crop.channels);
    return crop;
}

/// Map a text-label index to a dataset class id.  With background queries the
/// text list is [queries..., class 1..Y-1]; without, text index == class id.
inline std::int32_t text_index_to_class(int idx, const TextEmbeddingSet& texts,
                                        std::int32_t background_class) {
    if (idx == ObjectLogits::kBackgroundLabel) return background_class;
    if (texts.background_indices.empty()) return idx;
    const int n_queries = static_cast<int>(texts.background_indices.size());
    return idx - n_queries + 1;
}

} // namespace detail

/// Full pipeline: discovery cut -> pixel-level refinement -> windowed logit
/// field -> per-object pooling -> label map.  `grounding_crops`, when
/// non-empty, supplies one feature map per planned window (in plan order) in
/// place of slices from the full-frame grounding features.
inline SegmentationResult segment_image(const FeatureMap& discovery,
                                        const FeatureMap& grounding,
                                        const TextEmbeddingSet& texts, const Image& image,
                                        const PipelineConfig& cfg = {},
                                        const std::vector<FeatureMap>* grounding_crops =
                                            nullptr) {
    const int h = image.height, w = image.width;
    if (h <= 0 || w <= 0) throw ShapeError("segment_image: empty image");
    auto check_cover = [&](const FeatureMap& f, const char* what) {
        if (std::abs(f.height * f.patch_size - h) >= f.patch_size ||
            std::abs(f.width * f.patch_size - w) >= f.patch_size)
            throw ShapeError(std::string("segment_image: ") + what +
                             " grid does not tile the image");
    };
    check_cover(discovery, "discovery");
    if (grounding_crops == nullptr) check_cover(grounding, "grounding");

    SegmentationResult result;

    // 1. discover objects on the full frame, refine to pixel resolution
    PanopticCutResult cut = panoptic_cut(discovery, cfg.cut);
    result.lambdas = cut.lambdas;
    result.iterations = cut.iterations;
    result.masks = refine_masks(cut.objects, h, w, discovery.patch_size,
                                cfg.use_crf ? &image : nullptr, cfg.use_crf, cfg.crf);

    // 2. windowed cosine-logit field over the frame
    const WindowPlan plan = plan_windows(h, w, cfg.window, cfg.stride);
    if (grounding_crops && grounding_crops->size() != plan.origins.size())
        throw ShapeError("segment_image: expected " + std::to_string(plan.origins.size()) +
                         " grounding crops, got " + std::to_string(grounding_crops->size()));
    std::vector<DenseGrid> crop_logits;
    crop_logits.reserve(plan.origins.size());
    for (std::size_t k = 0; k < plan.origins.size(); ++k) {
        const auto [top, left] = plan.origins[k];
        const FeatureMap crop_features =
            grounding_crops ? (*grounding_crops)[k]
                            : detail::slice_features(grounding, top, left, plan.window_h,
                                                     plan.window_w, grounding.patch_size);
        DenseGrid patch_logits = patch_logit_map(crop_features, texts);
        crop_logits.push_back(
            resize_grid_bilinear(patch_logits, plan.window_h, plan.window_w));
    }
    const DenseGrid field = aggregate_logits(crop_logits, plan);

    // 3. pool the field per object, merge background queries, pick labels
    result.object_logits.reserve(result.masks.size());
    for (const auto& mask : result.masks) {
        ObjectLogits ol;
        ol.object_id = mask.id;
        ol.logits.assign(texts.count(), 0.0);
        std::int64_t count = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!mask.pixel_mask[static_cast<std::size_t>(y) * w + x]) continue;
                const double* v = field.at(y, x);
                for (int c = 0; c < texts.count(); ++c) ol.logits[c] += v[c];
                ++count;
            }
        if (count == 0) {
            ol.assigned_label = ObjectLogits::kBackgroundLabel;
        } else {
            for (auto& v : ol.logits) v /= static_cast<double>(count);
            ol = merge_background(std::move(ol), texts, cfg.mean_merge);
        }
        result.object_logits.push_back(std::move(ol));
    }

    // 4. render in dataset class space
    std::vector<ObjectLogits> class_logits = result.object_logits;
    for (auto& ol : class_logits)
        if (ol.assigned_label != ObjectLogits::kBackgroundLabel)
            ol.assigned_label =
                detail::text_index_to_class(ol.assigned_label, texts, cfg.background_class);

    const bool has_background = cfg.background_class >= 0;
    LabelMap fallback;
    if (!has_background) {  // uncovered pixels take the per-pixel argmax class
        fallback.height = h;
        fallback.width = w;
        fallback.labels.assign(static_cast<std::size_t>(h) * w, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double* v = field.at(y, x);
                int best = 0;
                for (int c = 1; c < texts.count(); ++c)
                    if (v[c] > v[best]) best = c;
                fallback.labels[static_cast<std::size_t>(y) * w + x] =
                    detail::text_index_to_class(best, texts, cfg.background_class);
            }
    }
    result.label_map =
        render_segmentation(result.masks, class_logits, cfg.background_class, h, w,
                            has_background ? nullptr : &fallback);

    std::int64_t covered = 0;
    for (const auto& m : result.masks) covered += m.pixel_area();
    result.fallback_fraction =
        1.0 - static_cast<double>(covered) / (static_cast<double>(h) * w);
    return result;
}

} // namespace pancut
