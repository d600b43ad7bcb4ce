#pragma once
// Jacobians of the learned operators and the regional influence matrices
// derived from them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"
#include "mesh.hpp"
#include "mlp.hpp"
#include "model.hpp"

namespace leno {

/// Exact Jacobian dy/dx at x (output_size x input_size), one reverse pass per
/// output row.
inline Eigen::MatrixXd jacobian_spectral(const MlpParams& net, const Eigen::VectorXd& x) {
    if (x.size() != net.input_size()) {
        throw input_error("jacobian: point has length " + std::to_string(x.size()) + ", network expects " +
                          std::to_string(net.input_size()));
    }
    const int out = net.output_size();
    ForwardCache cache;
    forward_batch(net, x.replicate(1, out), &cache);
    return backward_batch(net, cache, Eigen::MatrixXd::Identity(out, out), nullptr).transpose();
}

/// Entry (r, s) is the change of the output species' rate at node r per unit
/// perturbation of the input species at node s.
struct InteractionMatrix {
    Eigen::MatrixXd values;
    Species output = Species::A;
    Species input = Species::A;
    std::string state;  // free-form description of the evaluation state

    std::string pair() const { return std::string(species_name(input)) + "->" + species_name(output); }
};

/// Phi J Phi^T M, with J the block of the spectral Jacobian of G_output that
/// belongs to the input species. Species downstream of the output have no
/// influence and give a zero matrix.
inline InteractionMatrix jacobian_regional(const LenoModel& model, Species output, Species input,
                                           const FieldState& state, const EigenBasis& basis,
                                           const std::string& description = "") {
    check_compatible(model, basis);
    const int so = index_of(output), si = index_of(input);
    if (!model.trained[so]) throw stage_error(std::string("operator for ") + species_name(output) + " is not trained");
    InteractionMatrix out;
    out.output = output;
    out.input = input;
    out.state = description;
    const int v = basis.num_nodes(), p = basis.size();
    if (si > so) {
        out.values = Eigen::MatrixXd::Zero(v, v);
        return out;
    }
    const JointState st = project_state(state, basis);
    const Eigen::MatrixXd j = jacobian_spectral(model.op(output), operator_input(st, output));
    const Eigen::MatrixXd block = j.middleCols(static_cast<Eigen::Index>(si) * p, p);
    out.values = basis.modes * block * basis.weighted_modes.transpose();
    return out;
}

struct Edge {
    int source = 0;  // perturbed node (column)
    int target = 0;  // responding node (row)
    double weight = 0;
};

/// Entries with |w| >= threshold * max|w|, strongest first; ties keep
/// (target, source) order.
inline std::vector<Edge> connectivity_export(const InteractionMatrix& mat, double threshold) {
    if (!(threshold >= 0 && threshold <= 1)) throw input_error("connectivity_export: threshold must lie in [0, 1]");
    const Eigen::MatrixXd& m = mat.values;
    std::vector<Edge> edges;
    if (m.size() == 0) return edges;
    const double cut = threshold * m.cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index s = 0; s < m.cols(); ++s)
            if (std::abs(m(r, s)) >= cut) edges.push_back({static_cast<int>(s), static_cast<int>(r), m(r, s)});
    std::stable_sort(edges.begin(), edges.end(),
                     [](const Edge& a, const Edge& b) { return std::abs(a.weight) > std::abs(b.weight); });
    return edges;
}

/// Shortest paths along mesh edges with Euclidean edge lengths.
inline Eigen::MatrixXd mesh_distances(const Mesh2D& mesh) {
    const int n = mesh.num_vertices();
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) d(i, i) = 0;
    for (const auto& t : mesh.triangles) {
        for (int a = 0; a < 3; ++a) {
            const int i = t[a], j = t[(a + 1) % 3];
            const double len = (mesh.vertices[i] - mesh.vertices[j]).norm();
            d(i, j) = d(j, i) = std::min(d(i, j), len);
        }
    }
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
    return d;
}

/// Mean distance of the exported edges, each weighted by m_source * m_target
/// with m the lumped (row-summed) inner-product weights. Self-loops count with
/// distance zero.
inline double interaction_length(const std::vector<Edge>& edges, const Eigen::MatrixXd& distances,
                                 const EigenBasis& basis) {
    if (edges.empty()) throw input_error("interaction_length: no edges above threshold");
    const Eigen::VectorXd m = basis.weight * Eigen::VectorXd::Ones(basis.num_nodes());
    double num = 0, den = 0;
    for (const auto& e : edges) {
        const double w = m(e.source) * m(e.target);
        num += w * distances(e.target, e.source);
        den += w;
    }
    return num / den;
}

} // namespace leno
