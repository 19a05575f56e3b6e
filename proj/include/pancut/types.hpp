#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pancut/errors.hpp"

// ============================================================================
// Shared containers
//
// Plain-data types passed between modules.  All grids are row-major.  Boolean
// grids use std::vector<std::uint8_t> (0/1) to keep addressing simple.
// ============================================================================

namespace pancut {

/// Dense H x W x C grid of per-patch embeddings from an exported backbone.
struct FeatureMap {
    int height = 0;              // patch rows
    int width = 0;               // patch cols
    int channels = 0;            // embedding dimension
    int patch_size = 1;          // pixels per patch side
    std::string source_tag;      // free-form identifier of the export
    std::vector<float> data;     // height*width*channels, row-major

    const float* at(int r, int c) const {
        return data.data() + (static_cast<std::size_t>(r) * width + c) * channels;
    }
    std::size_t size() const { return data.size(); }
};

/// 8-bit RGB raster.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // height*width*3, row-major

    const std::uint8_t* px(int r, int c) const {
        return rgb.data() + (static_cast<std::size_t>(r) * width + c) * 3;
    }
};

/// Integer label raster (prediction or ground truth).
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;  // height*width, row-major, non-negative
    std::int32_t ignore_value = 255;   // sentinel for unlabeled pixels

    std::int32_t at(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * width + c];
    }
    std::int32_t& at(int r, int c) {
        return labels[static_cast<std::size_t>(r) * width + c];
    }
};

/// Class-description embeddings; a subset of rows may act as background queries.
struct TextEmbeddingSet {
    std::vector<std::string> labels;      // one name per vector
    int dim = 0;
    std::vector<float> vectors;           // labels.size()*dim, row-major
    std::vector<int> background_indices;  // distinct, valid; possibly empty

    const float* vec(int i) const {
        return vectors.data() + static_cast<std::size_t>(i) * dim;
    }
    int count() const { return static_cast<int>(labels.size()); }
};

/// One discovered object: a patch-grid mask at discovery resolution plus the
/// pixel mask produced by refinement/upsampling.
struct ObjectMask {
    int id = 0;                            // >= 1
    int discovery_order = 0;               // iteration that emitted the mask
    int grid_rows = 0, grid_cols = 0;
    std::vector<std::uint8_t> patch_mask;  // grid_rows*grid_cols
    int pixel_h = 0, pixel_w = 0;
    std::vector<std::uint8_t> pixel_mask;  // pixel_h*pixel_w, empty until refined

    int patch_area() const {
        int a = 0;
        for (auto v : patch_mask) a += v != 0;
        return a;
    }
    int pixel_area() const {
        int a = 0;
        for (auto v : pixel_mask) a += v != 0;
        return a;
    }
};

/// Dense H x W x C double grid (CRF distributions, aggregated logit fields).
struct DenseGrid {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;  // height*width*channels, row-major

    static DenseGrid zeros(int h, int w, int c) {
        DenseGrid g;
        g.height = h;
        g.width = w;
        g.channels = c;
        g.data.assign(static_cast<std::size_t>(h) * w * c, 0.0);
        return g;
    }
    double* at(int r, int c) {
        return data.data() + (static_cast<std::size_t>(r) * width + c) * channels;
    }
    const double* at(int r, int c) const {
        return data.data() + (static_cast<std::size_t>(r) * width + c) * channels;
    }
};

/// Per-object class scores against a TextEmbeddingSet.
struct ObjectLogits {
    static constexpr int kBackgroundLabel = -1;

    int object_id = 0;
    std::vector<double> logits;       // one cosine per text label, in [-1, 1]
    int assigned_label = kBackgroundLabel;  // text-label index, or background
    double background_score = 0.0;    // merged background logit (if any)
    bool merged = false;              // background merge applied
    bool degenerate_prototype = false;  // zero prototype; logits forced to 0
};

} // namespace pancut
