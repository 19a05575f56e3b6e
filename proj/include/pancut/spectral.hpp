#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pancut/affinity.hpp"
#include "pancut/errors.hpp"

// ============================================================================
// Spectral solver
//
// Solves (D - W) z = lambda D z for the second-smallest (Fiedler) pair via the
// symmetric reduction  D^{-1/2} (D - W) D^{-1/2} y = lambda y,  z = D^{-1/2} y.
// The lambda = 0 constant direction (q = D^{1/2} 1) is deflated explicitly, so
// the smallest remaining pair is the Fiedler pair even for disconnected test
// graphs.  Large problems run a block LOBPCG iteration; small ones fall back
// to a dense solve.  dense_spectrum exposes the full dense spectrum as the
// test oracle.
// ============================================================================

namespace pancut {

struct EigenPair {
    double value = 0.0;
    Eigen::VectorXd vector;  // z, unit D-norm, sign-fixed
    double residual = 0.0;   // ||(D-W)z - lambda D z|| / ||D z||
};

struct SolverConfig {
    double tol = 1e-7;        // generalized-residual tolerance
    int max_iters = 2000;
    int block_size = 4;
    int dense_cutoff = 256;   // n <= cutoff solves densely
    std::uint64_t seed = 0x70616e63ull;  // deterministic start block
};

namespace detail {

/// Symmetric normalized Laplacian I - D^{-1/2} W D^{-1/2}, exactly symmetric.
inline Eigen::MatrixXd normalized_laplacian(const AffinityGraph& g,
                                            Eigen::VectorXd& degrees) {
    degrees = g.degrees();
    for (int i = 0; i < g.n; ++i)
        if (!(degrees[i] > 0.0))
            throw DataError("node " + std::to_string(i) + " has non-positive degree");
    Eigen::VectorXd dinv_sqrt = degrees.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd lap = -(dinv_sqrt * dinv_sqrt.transpose()).cwiseProduct(g.weights);
    lap.diagonal().array() += 1.0;
    lap = ((lap + lap.transpose()) * 0.5).eval();
    return lap;
}

inline double generalized_residual(const AffinityGraph& g, const Eigen::VectorXd& degrees,
                                   double lambda, const Eigen::VectorXd& z) {
    Eigen::VectorXd dz = degrees.cwiseProduct(z);
    Eigen::VectorXd lhs = dz - g.weights * z - lambda * dz;
    const double denom = dz.norm();
    return denom == 0.0 ? lhs.norm() : lhs.norm() / denom;
}

/// Flip sign so the entry of maximum |z| is positive (first such entry wins).
inline void fix_sign(Eigen::VectorXd& z) {
    int arg = 0;
    double best = -1.0;
    for (int i = 0; i < z.size(); ++i) {
        const double a = std::abs(z[i]);
        if (a > best) {
            best = a;
            arg = i;
        }
    }
    if (z[arg] < 0.0) z = -z;
}

inline EigenPair make_pair(const AffinityGraph& g, const Eigen::VectorXd& degrees,
                           double lambda, Eigen::VectorXd y) {
    EigenPair p;
    p.value = lambda;
    y.normalize();  // unit y-norm gives unit D-norm after z = D^{-1/2} y
    p.vector = degrees.cwiseSqrt().cwiseInverse().cwiseProduct(y);
    fix_sign(p.vector);
    p.residual = generalized_residual(g, degrees, lambda, p.vector);
    return p;
}

/// Smallest eigenpair of lap restricted to the complement of q, densely.
inline EigenPair dense_fiedler(const AffinityGraph& g, const Eigen::MatrixXd& lap,
                               const Eigen::VectorXd& degrees, const Eigen::VectorXd& q) {
    Eigen::MatrixXd proj = lap - q * (q.transpose() * lap);
    proj -= (proj * q) * q.transpose();
    proj = ((proj + proj.transpose()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(proj);
    if (eig.info() != Eigen::Success)
        throw ConvergenceError("dense eigensolver failed", 1.0);
    for (int k = 0; k < g.n; ++k) {
        Eigen::VectorXd y = eig.eigenvectors().col(k);
        y -= q * q.dot(y);  // drop any component along the deflated direction
        if (y.norm() <= 1e-8) continue;  // this column was (mostly) q itself
        return make_pair(g, degrees, eig.eigenvalues()[k], std::move(y));
    }
    throw ConvergenceError("deflation left no usable eigenvector", 1.0);
}

/// Orthonormalize the columns of m against prior columns and q; drops
/// near-dependent columns.  Returns the surviving column count.
inline int orthonormalize(Eigen::MatrixXd& m, const Eigen::VectorXd& q) {
    int kept = 0;
    for (int c = 0; c < m.cols(); ++c) {
        Eigen::VectorXd v = m.col(c);
        v -= q * q.dot(v);
        for (int pass = 0; pass < 2; ++pass)  // twice-is-enough Gram-Schmidt
            for (int k = 0; k < kept; ++k) v -= m.col(k) * m.col(k).dot(v);
        const double norm = v.norm();
        if (norm > 1e-10) {
            m.col(kept) = v / norm;
            ++kept;
        }
    }
    return kept;
}

/// Block LOBPCG for the smallest deflated eigenpair of lap (y-space).
inline EigenPair lobpcg_fiedler(const AffinityGraph& g, const Eigen::MatrixXd& lap,
                                const Eigen::VectorXd& degrees, const Eigen::VectorXd& q,
                                const SolverConfig& cfg) {
    const int n = g.n;
    const int m = std::max(1, std::min(cfg.block_size, n - 1));

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::MatrixXd x(n, m);
    for (int c = 0; c < m; ++c)
        for (int r = 0; r < n; ++r) x(r, c) = unit(rng);
    if (orthonormalize(x, q) < m)
        for (int c = 0; c < m; ++c)  // astronomically unlikely; reroll once
            for (int r = 0; r < n; ++r) x(r, c) = unit(rng);
    orthonormalize(x, q);

    Eigen::MatrixXd p(n, 0);  // previous search directions
    double best_residual = std::numeric_limits<double>::infinity();
    double lambda0 = 0.0;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        // Rayleigh-Ritz on the current block
        Eigen::MatrixXd ax = lap * x;
        Eigen::MatrixXd xtax = x.transpose() * ax;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(
            ((xtax + xtax.transpose()) * 0.5).eval());
        x = (x * ritz.eigenvectors()).eval();
        ax = (ax * ritz.eigenvectors()).eval();
        Eigen::VectorXd theta = ritz.eigenvalues();
        lambda0 = theta[0];

        // convergence is judged on the target (smallest) column in z-space
        Eigen::VectorXd z0 = degrees.cwiseSqrt().cwiseInverse().cwiseProduct(x.col(0));
        const double res = generalized_residual(g, degrees, lambda0, z0);
        best_residual = std::min(best_residual, res);
        if (res <= cfg.tol) return make_pair(g, degrees, lambda0, x.col(0));

        Eigen::MatrixXd r = ax - x * theta.asDiagonal();

        // expanded trial basis [X | R | P], orthonormalized jointly against q
        Eigen::MatrixXd basis(n, m + r.cols() + p.cols());
        basis << x, r, p;
        const int kept = orthonormalize(basis, q);
        if (kept < m + 1) {  // no usable new directions; restart from residuals
            basis.conservativeResize(Eigen::NoChange, kept);
            if (kept <= m) {
                p.resize(n, 0);
                continue;
            }
        } else {
            basis.conservativeResize(Eigen::NoChange, kept);
        }

        Eigen::MatrixXd abasis = lap * basis;
        Eigen::MatrixXd s = basis.transpose() * abasis;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sub(((s + s.transpose()) * 0.5).eval());
        const int take = std::min<int>(m, static_cast<int>(sub.eigenvalues().size()));
        Eigen::MatrixXd coef = sub.eigenvectors().leftCols(take);

        Eigen::MatrixXd x_next = basis * coef;
        // implicit direction block: the part of x_next outside the old X span
        Eigen::MatrixXd coef_tail = coef.bottomRows(kept - std::min(kept, m));
        Eigen::MatrixXd p_next =
            basis.rightCols(kept - std::min(kept, m)) * coef_tail;
        x = std::move(x_next);
        p = std::move(p_next);
        if (orthonormalize(x, q) < take) p.resize(n, 0);
    }
    throw ConvergenceError("LOBPCG did not reach tolerance " + std::to_string(cfg.tol) +
                               " after " + std::to_string(cfg.max_iters) + " iterations",
                           best_residual);
}

} // namespace detail

/// Second-smallest generalized eigenpair of (D - W) z = lambda D z.
inline EigenPair fiedler_pair(const AffinityGraph& g, const SolverConfig& cfg = {}) {
    if (g.n < 2) throw EmptyGraphError("fiedler_pair needs at least 2 nodes");
    Eigen::VectorXd degrees;
    const Eigen::MatrixXd lap = detail::normalized_laplacian(g, degrees);
    Eigen::VectorXd q = degrees.cwiseSqrt();
    q.normalize();  // deflated constant direction D^{1/2} 1
    if (g.n <= cfg.dense_cutoff) return detail::dense_fiedler(g, lap, degrees, q);
    return detail::lobpcg_fiedler(g, lap, degrees, q, cfg);
}

constexpr int kDenseSpectrumLimit = 2048;

/// Full spectrum of the symmetric reduced problem, ascending (pair 0: lambda ~ 0).
inline std::vector<EigenPair> dense_spectrum(const AffinityGraph& g) {
    if (g.n > kDenseSpectrumLimit)
        throw SizeError("dense_spectrum limited to n <= " +
                        std::to_string(kDenseSpectrumLimit) + ", got " +
                        std::to_string(g.n));
    if (g.n < 1) throw EmptyGraphError("dense_spectrum on empty graph");
    Eigen::VectorXd degrees;
    const Eigen::MatrixXd lap = detail::normalized_laplacian(g, degrees);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
    if (eig.info() != Eigen::Success)
        throw ConvergenceError("dense eigensolver failed", 1.0);
    std::vector<EigenPair> pairs;
    pairs.reserve(g.n);
    for (int k = 0; k < g.n; ++k)
        pairs.push_back(detail::make_pair(g, degrees, eig.eigenvalues()[k],
                                          eig.eigenvectors().col(k)));
    return pairs;
}

} // namespace pancut
