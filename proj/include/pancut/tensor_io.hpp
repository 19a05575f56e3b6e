#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pancut/errors.hpp"
#include "pancut/image_io.hpp"
#include "pancut/npy.hpp"
#include "pancut/types.hpp"

// ============================================================================
// Tensor ingestion
//
// The boundary contract replacing live backbones: feature maps and text
// embeddings arrive as little-endian float NPY files.  Rank-3 (H, W, C) is
// preferred; rank-2 (H*W, C) is accepted when the caller supplies H and W.
// ============================================================================

namespace pancut {

namespace detail {

inline void require_finite(const std::vector<float>& data, const std::string& what) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw DataError(what + " contains a non-finite value at flat index " +
                            std::to_string(i));
    }
}

} // namespace detail

/// Load an exported feature tensor.  sidecar_h/w resolve rank-2 files; pass 0
/// to require rank 3.
inline FeatureMap load_feature_map(const std::string& path, int patch_size,
                                   const std::string& source_tag, int sidecar_h = 0,
                                   int sidecar_w = 0) {
    if (patch_size < 1) throw RangeError("patch_size must be >= 1");
    const npy::Array arr = npy::load(path);

    FeatureMap fm;
    fm.patch_size = patch_size;
    fm.source_tag = source_tag;
    if (arr.shape.size() == 3) {
        fm.height = static_cast<int>(arr.shape[0]);
        fm.width = static_cast<int>(arr.shape[1]);
        fm.channels = static_cast<int>(arr.shape[2]);
    } else if (arr.shape.size() == 2) {
        if (sidecar_h < 1 || sidecar_w < 1)
            throw ShapeError("rank-2 tensor " + path +
                             " needs an explicit grid height/width");
        if (arr.shape[0] != static_cast<std::size_t>(sidecar_h) * sidecar_w)
            throw ShapeError("rank-2 tensor " + path + " has " +
                             std::to_string(arr.shape[0]) + " rows, expected " +
                             std::to_string(sidecar_h) + "*" + std::to_string(sidecar_w));
        fm.height = sidecar_h;
        fm.width = sidecar_w;
        fm.channels = static_cast<int>(arr.shape[1]);
    } else {
        throw ShapeError("tensor " + path + " has rank " +
                         std::to_string(arr.shape.size()) + ", expected 2 or 3");
    }
    if (fm.height < 1 || fm.width < 1 || fm.channels < 1)
        throw ShapeError("tensor " + path + " has an empty dimension");

    fm.data = arr.data;
    detail::require_finite(fm.data, "tensor " + path);
    return fm;
}

/// Write a FeatureMap as rank-3 '<f4' NPY (fixtures, round trips).
inline void save_feature_map(const FeatureMap& fm, const std::string& path) {
    npy::save(path,
              {static_cast<std::size_t>(fm.height), static_cast<std::size_t>(fm.width),
               static_cast<std::size_t>(fm.channels)},
              fm.data.data());
}

/// Bind a rank-2 embedding matrix to label names and background-query indices.
inline TextEmbeddingSet make_text_embeddings(const npy::Array& arr,
                                             std::vector<std::string> labels,
                                             std::vector<int> background_indices) {
    if (arr.shape.size() != 2)
        throw ShapeError("text embeddings must be rank 2 (labels x dim), got rank " +
                         std::to_string(arr.shape.size()));
    if (arr.shape[0] != labels.size())
        throw ShapeError("text embeddings hold " + std::to_string(arr.shape[0]) +
                         " vectors but " + std::to_string(labels.size()) +
                         " labels were supplied");
    TextEmbeddingSet t;
    t.labels = std::move(labels);
    t.dim = static_cast<int>(arr.shape[1]);
    t.vectors = arr.data;
    detail::require_finite(t.vectors, "text embeddings");

    for (std::size_t i = 0; i < t.labels.size(); ++i) {
        double norm2 = 0.0;
        for (int d = 0; d < t.dim; ++d) {
            const double v = t.vec(static_cast<int>(i))[d];
            norm2 += v * v;
        }
        if (norm2 == 0.0)
            throw DataError("text embedding for label '" + t.labels[i] + "' is a zero vector");
    }

    std::vector<bool> seen(t.labels.size(), false);
    for (int idx : background_indices) {
        if (idx < 0 || idx >= t.count())
            throw RangeError("background index " + std::to_string(idx) + " out of range");
        if (seen[idx])
            throw DataError("duplicate background index " + std::to_string(idx));
        seen[idx] = true;
    }
    t.background_indices = std::move(background_indices);
    return t;
}

/// Load text embeddings from an NPY file.
inline TextEmbeddingSet load_text_embeddings(const std::string& path,
                                             std::vector<std::string> labels,
                                             std::vector<int> background_indices) {
    return make_text_embeddings(npy::load(path), std::move(labels),
                                std::move(background_indices));
}

} // namespace pancut
