#pragma once
// Nodal <-> spectral translation and the semi-implicit spectral Euler step.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"

namespace leno {

struct SpectralCoeffs {
    Eigen::VectorXd beta;
    std::uint64_t basis_id = 0;
};

struct ResidualSeries {
    std::vector<Eigen::VectorXd> residuals;  // R^1 ... R^N
};

/// beta_i = phi_i^T M u (graph: phi_i^T u).
inline SpectralCoeffs project(const Eigen::VectorXd& field, const EigenBasis& basis) {
    if (field.size() != basis.num_nodes()) {
        throw input_error("project: field has " + std::to_string(field.size()) + " entries, basis has " +
                          std::to_string(basis.num_nodes()) + " nodes");
    }
    return {basis.weighted_modes.transpose() * field, basis.id};
}

inline Eigen::VectorXd reconstruct(const SpectralCoeffs& coeffs, const EigenBasis& basis) {
    if (coeffs.basis_id != basis.id || coeffs.beta.size() != basis.size()) {
        throw input_error("reconstruct: coefficients belong to a different basis");
    }
    return basis.modes * coeffs.beta;
}

/// Projects every column of a V x k block at once.
inline Eigen::MatrixXd project_columns(const Eigen::MatrixXd& fields, const EigenBasis& basis) {
    if (fields.rows() != basis.num_nodes()) throw input_error("project: node count mismatch");
    return basis.weighted_modes.transpose() * fields;
}

/// R^n = (beta^n - beta^{n-1}) / (t_n - t_{n-1}) + alpha * Lambda * beta^n.
inline ResidualSeries residual_series(const std::vector<SpectralCoeffs>& series, const std::vector<double>& times,
                                      double alpha, const EigenBasis& basis) {
    if (series.size() < 2 || series.size() != times.size()) {
        throw input_error("residual_series: need at least two aligned time points");
    }
    ResidualSeries out;
    out.residuals.reserve(series.size() - 1);
    for (std::size_t n = 1; n < series.size(); ++n) {
        const double dt = times[n] - times[n - 1];
        if (!(dt > 0)) throw input_error("residual_series: times must be strictly increasing");
        if (series[n].basis_id != basis.id || series[n - 1].basis_id != basis.id) {
            throw input_error("residual_series: coefficients belong to a different basis");
        }
        out.residuals.push_back((series[n].beta - series[n - 1].beta) / dt +
                                alpha * basis.eigenvalues.cwiseProduct(series[n].beta));
    }
    return out;
}

/// One step of (b^n - b^{n-1})/dt + alpha Lambda b^n = g, solved mode-wise.
inline Eigen::VectorXd rollout_step(const Eigen::VectorXd& beta_prev, double dt, double alpha,
                                    const Eigen::VectorXd& eigenvalues, const Eigen::VectorXd& drive) {
    if (!(dt > 0)) throw input_error("rollout_step: dt must be positive");
    return ((beta_prev + dt * drive).array() / (1.0 + dt * alpha * eigenvalues.array())).matrix();
}

inline SpectralCoeffs rollout_step(const SpectralCoeffs& prev, double dt, double alpha, const EigenBasis& basis,
                                   const Eigen::VectorXd& drive) {
    if (prev.basis_id != basis.id) throw input_error("rollout_step: coefficients belong to a different basis");
    return {rollout_step(prev.beta, dt, alpha, basis.eigenvalues, drive), basis.id};
}

} // namespace leno
