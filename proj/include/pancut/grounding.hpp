#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pancut/errors.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Lazy grounding
//
// Discovery never sees text; only after masks are final does each object get
// a class.  An object's prototype is the plain mean of grounding features
// under its mask; class logits are cosines between the prototype and the text
// embeddings; designated background-query logits collapse into one synthetic
// background score before the argmax.
// ============================================================================

namespace pancut {

/// Project a pixel mask onto the feature patch grid by majority vote: a patch
/// is covered when at least half of its pixels are masked (ties covered).  If
/// nothing survives, the single patch with maximum coverage is used.
inline std::vector<std::uint8_t> project_mask_to_grid(
    const std::vector<std::uint8_t>& pixel_mask, int h, int w, int grid_rows,
    int grid_cols) {
    if (h <= 0 || w <= 0 || pixel_mask.size() != static_cast<std::size_t>(h) * w)
        throw ShapeError("project_mask_to_grid: mask buffer does not match dims");
    std::vector<std::int64_t> covered(static_cast<std::size_t>(grid_rows) * grid_cols, 0);
    std::vector<std::int64_t> total(covered.size(), 0);
    for (int y = 0; y < h; ++y) {
        const int pr = std::min(static_cast<int>(static_cast<std::int64_t>(y) * grid_rows / h),
                                grid_rows - 1);
        for (int x = 0; x < w; ++x) {
            const int pc = std::min(
                static_cast<int>(static_cast<std::int64_t>(x) * grid_cols / w), grid_cols - 1);
            const std::size_t p = static_cast<std::size_t>(pr) * grid_cols + pc;
            ++total[p];
            covered[p] += pixel_mask[static_cast<std::size_t>(y) * w + x] ? 1 : 0;
        }
    }
    std::vector<std::uint8_t> grid(covered.size(), 0);
    bool any = false;
    for (std::size_t p = 0; p < covered.size(); ++p) {
        if (total[p] > 0 && 2 * covered[p] >= total[p] && covered[p] > 0) {
            grid[p] = 1;
            any = true;
        }
    }
    if (!any) {  // fall back to the single best-covered patch
        std::size_t best = 0;
        double best_frac = -1.0;
        for (std::size_t p = 0; p < covered.size(); ++p) {
            const double frac = total[p] > 0 ? double(covered[p]) / double(total[p]) : 0.0;
            if (frac > best_frac) {
                best_frac = frac;
                best = p;
            }
        }
        if (best_frac <= 0.0)
            throw EmptyMaskError("mask covers no feature patch even after fallback");
        grid[best] = 1;
    }
    return grid;
}

/// Mean grounding feature over the mask (no normalization).  Pixel masks are
/// projected onto the feature grid first; patch masks must already match it.
inline std::vector<double> object_prototype(const FeatureMap& features,
                                            const ObjectMask& mask) {
    std::vector<std::uint8_t> grid;
    if (!mask.pixel_mask.empty()) {
        grid = project_mask_to_grid(mask.pixel_mask, mask.pixel_h, mask.pixel_w,
                                    features.height, features.width);
    } else if (mask.grid_rows == features.height && mask.grid_cols == features.width) {
        grid = mask.patch_mask;
    } else {
        throw ShapeError("object_prototype: patch mask is " +
                         std::to_string(mask.grid_cols) + "x" +
                         std::to_string(mask.grid_rows) + " but features are " +
                         std::to_string(features.width) + "x" +
                         std::to_string(features.height));
    }

    std::vector<double> proto(features.channels, 0.0);
    std::int64_t count = 0;
    for (int r = 0; r < features.height; ++r)
        for (int c = 0; c < features.width; ++c) {
            if (!grid[static_cast<std::size_t>(r) * features.width + c]) continue;
            const float* f = features.at(r, c);
            for (int ch = 0; ch < features.channels; ++ch) proto[ch] += f[ch];
            ++count;
        }
    if (count == 0) throw EmptyMaskError("object mask is empty after projection");
    for (auto& v : proto) v /= static_cast<double>(count);
    return proto;
}

/// Cosine of a prototype against one text embedding; zero prototype gives 0.
inline double prototype_cosine(const std::vector<double>& proto, const float* text,
                               int dim) {
    double dot = 0.0, np = 0.0, nt = 0.0;
    for (int d = 0; d < dim; ++d) {
        dot += proto[d] * text[d];
        np += proto[d] * proto[d];
        nt += double(text[d]) * text[d];
    }
    if (np == 0.0 || nt == 0.0) return 0.0;
    double cos = dot / (std::sqrt(np) * std::sqrt(nt));
    return std::clamp(cos, -1.0, 1.0);
}

/// Collapse background-query logits into one synthetic score (max by default,
/// mean optionally) and pick the winning label.  The synthetic background
/// occupies the earliest background index in scan order, so ties resolve
/// exactly like an argmax over the reduced label list.
inline ObjectLogits merge_background(ObjectLogits logits, const TextEmbeddingSet& texts,
                                     bool mean_merge = false) {
    if (texts.count() == 0) throw DataError("merge_background: no text embeddings");
    if (logits.logits.size() != static_cast<std::size_t>(texts.count()))
        throw ShapeError("merge_background: logits length does not match label count");
    if (texts.background_indices.empty()) {  // no-op: plain argmax
        int best = 0;
        for (int i = 1; i < texts.count(); ++i)
            if (logits.logits[i] > logits.logits[best]) best = i;
        logits.assigned_label = best;
        logits.merged = false;
        return logits;
    }

    std::vector<std::uint8_t> is_bg(texts.count(), 0);
    for (int i : texts.background_indices) is_bg[i] = 1;
    const int first_bg =
        *std::min_element(texts.background_indices.begin(), texts.background_indices.end());

    double bg = mean_merge ? 0.0 : -2.0;
    for (int i : texts.background_indices)
        bg = mean_merge ? bg + logits.logits[i] : std::max(bg, logits.logits[i]);
    if (mean_merge) bg /= static_cast<double>(texts.background_indices.size());
    logits.background_score = bg;
    logits.merged = true;

    // argmax over the reduced list: synthetic background sits at first_bg
    int best = ObjectLogits::kBackgroundLabel;
    double best_score = 0.0;
    bool have = false;
    for (int i = 0; i < texts.count(); ++i) {
        double score;
        int label;
        if (i == first_bg) {
            score = bg;
            label = ObjectLogits::kBackgroundLabel;
        } else if (is_bg[i]) {
            continue;  // merged away
        } else {
            score = logits.logits[i];
            label = i;
        }
        if (!have || score > best_score) {
            have = true;
            best_score = score;
            best = label;
        }
    }
    logits.assigned_label = best;
    return logits;
}

/// Ground every mask: prototype -> cosine logits -> background merge.  An
/// object whose mask dies in projection is labeled background with zero
/// logits rather than failing the batch.
inline std::vector<ObjectLogits> ground_objects(const std::vector<ObjectMask>& masks,
                                                const FeatureMap& features,
                                                const TextEmbeddingSet& texts,
                                                bool mean_merge = false) {
    if (texts.count() == 0) throw DataError("ground_objects: no text embeddings");
    std::vector<ObjectLogits> out;
    out.reserve(masks.size());
    for (const auto& mask : masks) {
        ObjectLogits ol;
        ol.object_id = mask.id;
        ol.logits.assign(texts.count(), 0.0);
        try {
            const std::vector<double> proto = object_prototype(features, mask);
            double norm2 = 0.0;
            for (double v : proto) norm2 += v * v;
            if (norm2 == 0.0) {
                ol.degenerate_prototype = true;  // cancellation; all cosines 0
            } else {
                for (int y = 0; y < texts.count(); ++y)
                    ol.logits[y] = prototype_cosine(proto, texts.vec(y), texts.dim);
            }
            ol = merge_background(std::move(ol), texts, mean_merge);
        } catch (const EmptyMaskError&) {
            ol.assigned_label = ObjectLogits::kBackgroundLabel;
        }
        out.push_back(std::move(ol));
    }
    return out;
}

/// Paint assigned labels into a label map.  Uncovered pixels take the
/// background label, or the per-pixel fallback map when one is supplied
/// (required when background_label < 0, i.e. datasets without background).
inline LabelMap render_segmentation(const std::vector<ObjectMask>& masks,
                                    const std::vector<ObjectLogits>& logits,
                                    std::int32_t background_label, int h, int w,
                                    const LabelMap* fallback = nullptr) {
    if (masks.size() != logits.size())
        throw ShapeError("render_segmentation: one ObjectLogits per mask required");
    if (background_label < 0 && fallback == nullptr)
        throw LabelError("render_segmentation: negative background label needs a fallback map");
    if (fallback && (fallback->height != h || fallback->width != w))
        throw ShapeError("render_segmentation: fallback map dims mismatch");

    LabelMap out;
    out.height = h;
    out.width = w;
    out.labels.assign(static_cast<std::size_t>(h) * w, -1);

    for (std::size_t k = 0; k < masks.size(); ++k) {
        const auto& m = masks[k];
        if (m.pixel_mask.size() != out.labels.size())
            throw ShapeError("render_segmentation: mask resolution mismatch");
        const std::int32_t value = logits[k].assigned_label == ObjectLogits::kBackgroundLabel
                                       ? background_label
                                       : logits[k].assigned_label;
        for (std::size_t p = 0; p < m.pixel_mask.size(); ++p) {
            if (!m.pixel_mask[p]) continue;
            if (out.labels[p] != -1)
                throw PartitionError("render_segmentation: masks overlap at pixel " +
                                     std::to_string(p));
            out.labels[p] = value;
        }
    }
    for (std::size_t p = 0; p < out.labels.size(); ++p) {
        if (out.labels[p] == -1)
            out.labels[p] = fallback ? fallback->labels[p] : background_label;
        else if (out.labels[p] < 0)  // sentinel-labeled object without a background class
            out.labels[p] = fallback->labels[p];
    }
    return out;
}

} // namespace pancut
