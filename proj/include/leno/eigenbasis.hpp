#pragma once
// Laplacian eigenbasis: generalized symmetric eigenproblem K phi = lambda M phi.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "error.hpp"
#include "graph.hpp"
#include "hash.hpp"
#include "mesh.hpp"

namespace leno {

enum class DomainKind { mesh, graph };

struct EigenBasis {
    DomainKind kind = DomainKind::graph;
    Eigen::VectorXd eigenvalues;     // ascending, length P
    Eigen::MatrixXd modes;           // V x P, M-orthonormal columns
    SparseMatrix weight;             // inner-product matrix M (identity for graphs)
    Eigen::MatrixXd weighted_modes;  // M * modes, so that beta = weighted_modes^T u
    Eigen::VectorXd integral_weights;  // w such that w^T u approximates the domain integral of u
    std::uint64_t domain_hash = 0;
    std::uint64_t id = 0;  // fingerprint of (domain, P)

    int size() const { return static_cast<int>(eigenvalues.size()); }
    int num_nodes() const { return static_cast<int>(modes.rows()); }
};

struct EigenSolverOptions {
    int dense_threshold = 500;  // V at or below this uses the dense solver
    int max_iterations = 1000;
    double tolerance = 1e-10;   // relative residual target of the iterative solver
    unsigned seed = 20240611;
};

namespace detail {

inline void fix_signs(Eigen::MatrixXd& modes) {
    for (Eigen::Index j = 0; j < modes.cols(); ++j) {
        Eigen::Index arg = 0;
        double best = -1;
        for (Eigen::Index i = 0; i < modes.rows(); ++i) {
            if (std::abs(modes(i, j)) > best) {
                best = std::abs(modes(i, j));
                arg = i;
            }
        }
        if (modes(arg, j) < 0) modes.col(j) *= -1.0;
    }
}

inline bool is_identity(const SparseMatrix& m) {
    if (m.rows() != m.cols()) return false;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(m, k); it; ++it)
            if (it.value() != (it.row() == it.col() ? 1.0 : 0.0)) return false;
    return m.nonZeros() >= m.rows();
}

inline void solve_dense(const SparseMatrix& k, const SparseMatrix& m, int p, Eigen::VectorXd& evals,
                        Eigen::MatrixXd& evecs) {
    const Eigen::MatrixXd kd = Eigen::MatrixXd(k);
    if (is_identity(m)) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kd);
        if (es.info() != Eigen::Success) throw numerical_error("eigensolver: dense solver failed");
        evals = es.eigenvalues().head(p);
        evecs = es.eigenvectors().leftCols(p);
        return;
    }
    const Eigen::MatrixXd md = Eigen::MatrixXd(m);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(kd, md);
    if (es.info() != Eigen::Success) throw numerical_error("eigensolver: dense generalized solver failed");
    evals = es.eigenvalues().head(p);
    evecs = es.eigenvectors().leftCols(p);
}

// Block shift-invert subspace iteration with Rayleigh-Ritz on the pencil
// (K, M), shifted slightly left of zero so K - sigma M is positive definite.
inline void solve_shift_invert(const SparseMatrix& k, const SparseMatrix& m, int p, const EigenSolverOptions& opt,
                               Eigen::VectorXd& evals, Eigen::MatrixXd& evecs) {
    const Eigen::Index n = k.rows();
    const int block = static_cast<int>(std::min<Eigen::Index>(n, std::max(2 * p, p + 16)));
    const double scale = k.diagonal().sum() / std::max(m.diagonal().sum(), 1e-300);
    const double shift = 1e-4 * scale;

    SparseMatrix shifted = k + shift * m;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
    if (ldlt.info() != Eigen::Success) throw numerical_error("eigensolver: factorization of shifted pencil failed");

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd x(n, block);
    for (Eigen::Index j = 0; j < block; ++j)
        for (Eigen::Index i = 0; i < n; ++i) x(i, j) = normal(rng);

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        Eigen::MatrixXd y = ldlt.solve(m * x);
        // orthonormalize first; the shift-invert spectrum makes y badly scaled
        y = Eigen::HouseholderQR<Eigen::MatrixXd>(y).householderQ() * Eigen::MatrixXd::Identity(n, block);
        const Eigen::MatrixXd kr = y.transpose() * (k * y);
        const Eigen::MatrixXd mr = y.transpose() * (m * y);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> rr(0.5 * (kr + kr.transpose()),
                                                                     0.5 * (mr + mr.transpose()));
        if (rr.info() != Eigen::Success) throw numerical_error("eigensolver: Rayleigh-Ritz step failed");
        x = y * rr.eigenvectors();
        const Eigen::VectorXd theta = rr.eigenvalues();

        const Eigen::MatrixXd res = k * x.leftCols(p) - m * x.leftCols(p) * theta.head(p).asDiagonal();
        const Eigen::MatrixXd mx = m * x.leftCols(p);
        bool converged = true;
        for (int j = 0; j < p && converged; ++j) {
            const double ref = (1.0 + std::abs(theta(j))) * std::max(mx.col(j).norm(), 1e-300);
            converged = res.col(j).norm() <= opt.tolerance * ref;
        }
        if (converged) {
            evals = theta.head(p);
            evecs = x.leftCols(p);
            return;
        }
    }
    throw numerical_error("eigensolver: shift-invert iteration did not converge in " +
                          std::to_string(opt.max_iterations) + " iterations");
}

} // namespace detail

/// Lowest P eigenpairs of K phi = lambda M phi with M-orthonormal modes and a
/// deterministic sign convention (largest-magnitude entry positive).
inline EigenBasis compute_eigenbasis(const SparseMatrix& k, const SparseMatrix& m, int p,
                                     const EigenSolverOptions& opt = {}) {
    const Eigen::Index n = k.rows();
    if (k.cols() != n || m.rows() != n || m.cols() != n) throw input_error("eigenbasis: matrix size mismatch");
    if (p < 1 || p > n) {
        throw input_error("eigenbasis: requested " + std::to_string(p) + " modes but dimension is " +
                          std::to_string(n));
    }
    EigenBasis basis;
    if (n <= opt.dense_threshold) {
        detail::solve_dense(k, m, p, basis.eigenvalues, basis.modes);
    } else {
        detail::solve_shift_invert(k, m, p, opt, basis.eigenvalues, basis.modes);
    }
    // re-normalize in M (cheap, and keeps both solver paths on the same footing)
    for (int j = 0; j < p; ++j) {
        const double nrm = std::sqrt(basis.modes.col(j).dot(m * basis.modes.col(j)));
        basis.modes.col(j) /= nrm;
    }
    detail::fix_signs(basis.modes);
    basis.weight = m;
    basis.weighted_modes = m * basis.modes;
    basis.integral_weights = m * Eigen::VectorXd::Ones(n);
    Fnv1a h;
    for (const SparseMatrix* mat : {&k, &m}) {
        h.value(static_cast<std::int64_t>(mat->rows()));
        for (int c = 0; c < mat->outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(*mat, c); it; ++it) {
                if (it.value() == 0.0) continue;
                h.value(static_cast<std::int64_t>(it.row())).value(static_cast<std::int64_t>(it.col())).value(it.value());
            }
        }
    }
    basis.domain_hash = h.digest();
    basis.id = Fnv1a().value(static_cast<std::int64_t>(basis.domain_hash)).value(std::int64_t{p}).digest();
    return basis;
}

inline EigenBasis mesh_eigenbasis(const Mesh2D& mesh, int p, const EigenSolverOptions& opt = {}) {
    const FemMatrices fem = assemble_fem(mesh);
    EigenBasis basis = compute_eigenbasis(fem.stiffness, fem.mass, p, opt);
    basis.kind = DomainKind::mesh;
    return basis;
}

/// Graph basis: M = identity, and the domain "integral" is the node mean.
inline EigenBasis graph_eigenbasis(const GraphDomain& g, int p, const EigenSolverOptions& opt = {}) {
    const int n = g.num_nodes();
    SparseMatrix identity(n, n);
    identity.setIdentity();
    EigenBasis basis = compute_eigenbasis(g.laplacian.sparseView(0.0, 0.0), identity, p, opt);
    basis.kind = DomainKind::graph;
    basis.integral_weights = Eigen::VectorXd::Constant(n, 1.0 / n);
    return basis;
}

} // namespace leno
