#pragma once
// Weighted graph domains (brain networks) and their Laplacians.

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "mesh.hpp"

namespace leno {

struct GraphDomain {
    Eigen::MatrixXd weights;
    Eigen::MatrixXd laplacian;
    std::vector<std::string> region_labels;  // optional, empty when unnamed
    std::vector<Eigen::Vector2d> positions;  // optional embedding, used for plotting/distances only

    int num_nodes() const { return static_cast<int>(weights.rows()); }
};

inline constexpr double kSymmetryTolerance = 1e-12;

/// L = D - W with D the diagonal degree matrix. With `normalize`, W is first
/// replaced by D^{-1/2} W D^{-1/2} (isolated nodes keep zero rows).
inline GraphDomain build_graph_laplacian(const Eigen::MatrixXd& w, bool normalize = false) {
    if (w.rows() != w.cols() || w.rows() == 0) throw input_error("graph: adjacency matrix must be square and nonempty");
    const Eigen::Index n = w.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!std::isfinite(w(i, j))) throw input_error("graph: non-finite weight");
            if (w(i, j) < 0) {
                throw input_error("graph: negative weight " + std::to_string(w(i, j)) + " at (" + std::to_string(i) +
                                  "," + std::to_string(j) + ")");
            }
            if (std::abs(w(i, j) - w(j, i)) > kSymmetryTolerance) {
                throw input_error("graph: adjacency not symmetric at (" + std::to_string(i) + "," + std::to_string(j) +
                                  ")");
            }
        }
    }
    GraphDomain g;
    g.weights = 0.5 * (w + w.transpose());
    g.weights.diagonal().setZero();
    if (normalize) {
        const Eigen::VectorXd deg = g.weights.rowwise().sum();
        Eigen::VectorXd scale = deg.unaryExpr([](double d) { return d > 0 ? 1.0 / std::sqrt(d) : 0.0; });
        g.weights = scale.asDiagonal() * g.weights * scale.asDiagonal();
    }
    g.laplacian = -g.weights;
    g.laplacian.diagonal() = g.weights.rowwise().sum();
    return g;
}

/// Header `n`, then n rows of n whitespace-separated weights.
inline GraphDomain load_graph(const std::string& path, bool normalize = false) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open graph file: " + path);
    std::vector<std::pair<int, std::string>> lines;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        lines.emplace_back(lineno, line);
    }
    if (lines.empty()) throw input_error(path + ": empty graph file");
    long n = 0;
    {
        std::istringstream hdr(lines[0].second);
        if (!(hdr >> n) || n <= 0) throw input_error(path + ":" + std::to_string(lines[0].first) + ": bad node count");
    }
    if (static_cast<long>(lines.size()) != n + 1) {
        throw input_error(path + ": expected " + std::to_string(n) + " weight rows, found " +
                          std::to_string(lines.size() - 1));
    }
    Eigen::MatrixXd w(n, n);
    for (long i = 0; i < n; ++i) {
        std::istringstream ss(lines[1 + i].second);
        for (long j = 0; j < n; ++j) {
            if (!(ss >> w(i, j))) {
                throw input_error(path + ":" + std::to_string(lines[1 + i].first) + ": expected " + std::to_string(n) +
                                  " weights");
            }
        }
        std::string extra;
        if (ss >> extra) throw input_error(path + ":" + std::to_string(lines[1 + i].first) + ": too many weights");
    }
    return build_graph_laplacian(w, normalize);
}

inline void save_graph(const GraphDomain& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write graph file: " + path);
    out.precision(17);
    out << g.num_nodes() << '\n';
    for (int i = 0; i < g.num_nodes(); ++i) {
        for (int j = 0; j < g.num_nodes(); ++j) out << (j ? " " : "") << g.weights(i, j);
        out << '\n';
    }
}

/// Random geometric graph on the unit square: nodes closer than `radius` are
/// joined with Gaussian-decaying weights `scale * exp(-(d/radius)^2)`. Missing
/// links between components are bridged through the closest node pair so the
/// result is always connected.
inline GraphDomain random_geometric_graph(int n, double radius, double scale, unsigned seed) {
    if (n < 2) throw input_error("random_geometric_graph: need at least two nodes");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Eigen::Vector2d> pos(n);
    for (auto& p : pos) p = {unif(rng), unif(rng)};

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    auto link = [&](int i, int j) {
        const double d = (pos[i] - pos[j]).norm();
        w(i, j) = w(j, i) = scale * std::exp(-(d / radius) * (d / radius));
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if ((pos[i] - pos[j]).norm() < radius) link(i, j);

    for (;;) {
        detail::DisjointSet ds(n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (w(i, j) > 0) ds.unite(i, j);
        const int root = ds.find(0);
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (int i = 0; i < n; ++i) {
            if (ds.find(i) != root) continue;
            for (int j = 0; j < n; ++j) {
                if (ds.find(j) == root) continue;
                const double d = (pos[i] - pos[j]).norm();
                if (d < best) best = d, bi = i, bj = j;
            }
        }
        if (bi < 0) break;
        link(bi, bj);
    }
    GraphDomain g = build_graph_laplacian(w);
    g.positions = std::move(pos);
    for (int i = 0; i < n; ++i) g.region_labels.push_back("R" + std::to_string(i));
    return g;
}

/// Shortest-path distances with edge length 1/w (Floyd-Warshall; graphs here are small).
inline Eigen::MatrixXd graph_distances(const GraphDomain& g) {
    const int n = g.num_nodes();
    const double inf = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, inf);
    for (int i = 0; i < n; ++i) {
        d(i, i) = 0;
        for (int j = 0; j < n; ++j)
            if (g.weights(i, j) > 0) d(i, j) = 1.0 / g.weights(i, j);
    }
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
    return d;
}

} // namespace leno
