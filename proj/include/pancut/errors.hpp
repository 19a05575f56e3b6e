#pragma once

#include <stdexcept>
#include <string>
#include <utility>

// ============================================================================
// Error taxonomy
//
// Every failure raised by the library is a subclass of pancut::Error with a
// stable machine-readable kind() string.  The CLI serializes these to JSON on
// stderr; tests match on the concrete type.
// ============================================================================

namespace pancut {

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}

    /// Stable identifier, e.g. "ShapeError".
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define PANCUT_DEFINE_ERROR(NAME)                                   \
    class NAME : public Error {                                     \
    public:                                                         \
        explicit NAME(const std::string& msg) : Error(#NAME, msg) {} \
    }

PANCUT_DEFINE_ERROR(FormatError);        // unreadable/malformed file container
PANCUT_DEFINE_ERROR(DataError);          // values violate a content invariant (NaN/Inf, ...)
PANCUT_DEFINE_ERROR(ShapeError);         // tensor/grid rank or dimension mismatch
PANCUT_DEFINE_ERROR(RangeError);         // value outside the representable range
PANCUT_DEFINE_ERROR(EmptyGraphError);    // graph/subgraph with no nodes
PANCUT_DEFINE_ERROR(PartitionError);     // invalid bipartition (empty/overlapping sides)
PANCUT_DEFINE_ERROR(SizeError);          // problem size above a hard limit
PANCUT_DEFINE_ERROR(EmptyMaskError);     // mask empty even after projection fallback
PANCUT_DEFINE_ERROR(LabelError);         // label id outside the class range
PANCUT_DEFINE_ERROR(EmptyEvalError);     // confusion matrix with no usable class

#undef PANCUT_DEFINE_ERROR

/// Eigensolver failed to reach tolerance; carries the best residual achieved.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, double best_residual)
        : Error("ConvergenceError", msg), best_residual_(best_residual) {}

    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

/// Mean-threshold split produced an empty side (constant eigenvector) or the
/// subgraph has no cluster structure; callers halt discovery, they do not abort.
class DegenerateCutError : public Error {
public:
    explicit DegenerateCutError(const std::string& msg)
        : Error("DegenerateCutError", msg) {}
};

} // namespace pancut
