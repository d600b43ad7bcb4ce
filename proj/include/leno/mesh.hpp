#pragma once
// Unstructured 2D triangle meshes and P1 finite element assembly.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "error.hpp"

namespace leno {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Mesh2D {
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
};

namespace detail {

inline double signed_area(const Mesh2D& mesh, const std::array<int, 3>& tri) {
    const auto& a = mesh.vertices[tri[0]];
    const auto& b = mesh.vertices[tri[1]];
    const auto& c = mesh.vertices[tri[2]];
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

} // namespace detail

inline constexpr double kDegenerateArea = 1e-14;

/// Validates a raw vertex/triangle soup and returns it with every triangle
/// oriented counterclockwise. Rejects dangling indices, degenerate triangles
/// and meshes with more than one connected component (unreferenced vertices
/// count as separate components).
inline Mesh2D make_mesh(std::vector<Eigen::Vector2d> vertices, std::vector<std::array<int, 3>> triangles) {
    Mesh2D mesh{std::move(vertices), std::move(triangles)};
    const int nv = mesh.num_vertices();
    if (nv == 0 || mesh.triangles.empty()) throw input_error("mesh: empty vertex or triangle list");
    detail::DisjointSet components(nv);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        auto& tri = mesh.triangles[t];
        for (int idx : tri) {
            if (idx < 0 || idx >= nv) {
                throw input_error("mesh: triangle " + std::to_string(t) + " references vertex " +
                                  std::to_string(idx) + " but only " + std::to_string(nv) + " vertices exist");
            }
        }
        const double area = detail::signed_area(mesh, tri);
        if (std::abs(area) < kDegenerateArea) {
            throw input_error("mesh: triangle " + std::to_string(t) + " has zero area");
        }
        if (area < 0) std::swap(tri[1], tri[2]);
        components.unite(tri[0], tri[1]);
        components.unite(tri[1], tri[2]);
    }
    const int root = components.find(0);
    for (int v = 1; v < nv; ++v) {
        if (components.find(v) != root) {
            throw input_error("mesh: disconnected (vertex " + std::to_string(v) + " is not reachable from vertex 0)");
        }
    }
    return mesh;
}

/// Reads the `V T` / `x y` / `i j k` text format. `#` starts a comment.
inline Mesh2D load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open mesh file: " + path);

    std::vector<std::pair<int, std::string>> lines;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        lines.emplace_back(lineno, line);
    }
    auto fail = [&](int lineno, const std::string& msg) {
        return input_error(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (lines.empty()) throw input_error(path + ": empty mesh file");

    long nv = 0, nt = 0;
    {
        std::istringstream hdr(lines[0].second);
        std::string extra;
        if (!(hdr >> nv >> nt) || (hdr >> extra) || nv <= 0 || nt <= 0) {
            throw fail(lines[0].first, "expected header 'V T' with positive counts");
        }
    }
    if (static_cast<long>(lines.size()) != 1 + nv + nt) {
        throw fail(lines.back().first, "expected " + std::to_string(nv + nt) + " data lines after header, found " +
                                           std::to_string(lines.size() - 1));
    }
    std::vector<Eigen::Vector2d> vertices(nv);
    for (long i = 0; i < nv; ++i) {
        const auto& [lineno, text] = lines[1 + i];
        std::istringstream ss(text);
        std::string extra;
        double x, y;
        if (!(ss >> x >> y) || (ss >> extra)) throw fail(lineno, "expected vertex 'x y'");
        vertices[i] = {x, y};
    }
    std::vector<std::array<int, 3>> triangles(nt);
    for (long t = 0; t < nt; ++t) {
        const auto& [lineno, text] = lines[1 + nv + t];
        std::istringstream ss(text);
        std::string extra;
        long i, j, k;
        if (!(ss >> i >> j >> k) || (ss >> extra)) throw fail(lineno, "expected triangle 'i j k'");
        for (long idx : {i, j, k}) {
            if (idx < 0 || idx >= nv) {
                throw fail(lineno, "dangling vertex index " + std::to_string(idx) + " (vertex count " +
                                       std::to_string(nv) + ")");
            }
        }
        triangles[t] = {static_cast<int>(i), static_cast<int>(j), static_cast<int>(k)};
    }
    return make_mesh(std::move(vertices), std::move(triangles));
}

inline void save_mesh(const Mesh2D& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write mesh file: " + path);
    out.precision(17);
    out << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
    for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << '\n';
    for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

/// Structured triangulation of [0,1]^2 with n cells per side (2n^2 triangles).
inline Mesh2D unit_square_mesh(int n) {
    if (n < 1) throw input_error("unit_square_mesh: n must be >= 1");
    std::vector<Eigen::Vector2d> vertices;
    vertices.reserve((n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) vertices.emplace_back(double(i) / n, double(j) / n);
    std::vector<std::array<int, 3>> triangles;
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            // alternate the diagonal so the mesh has no preferred direction
            if ((i + j) % 2 == 0) {
                triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            } else {
                triangles.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
                triangles.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
            }
        }
    }
    return make_mesh(std::move(vertices), std::move(triangles));
}

/// Triangulates the grid cells of spacing h whose four corners lie inside
/// `inside`, then keeps the largest connected component.
inline Mesh2D masked_grid_mesh(const std::function<bool(double, double)>& inside, Eigen::Vector2d lo,
                               Eigen::Vector2d hi, double h) {
    const int nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / h));
    const int ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / h));
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    auto point = [&](int i, int j) { return Eigen::Vector2d(lo.x() + i * h, lo.y() + j * h); };

    std::vector<std::array<int, 3>> raw;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            bool ok = true;
            for (auto [di, dj] : {std::pair{0, 0}, {1, 0}, {0, 1}, {1, 1}}) {
                const auto p = point(i + di, j + dj);
                ok = ok && inside(p.x(), p.y());
            }
            if (!ok) continue;
            if ((i + j) % 2 == 0) {
                raw.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                raw.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            } else {
                raw.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
                raw.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
            }
        }
    }
    if (raw.empty()) throw input_error("masked_grid_mesh: no cell lies inside the shape");

    const int ngrid = (nx + 1) * (ny + 1);
    detail::DisjointSet ds(ngrid);
    for (const auto& t : raw) {
        ds.unite(t[0], t[1]);
        ds.unite(t[1], t[2]);
    }
    std::vector<int> size(ngrid, 0);
    for (const auto& t : raw) size[ds.find(t[0])] += 1;
    const int best = static_cast<int>(std::max_element(size.begin(), size.end()) - size.begin());

    std::vector<int> remap(ngrid, -1);
    std::vector<Eigen::Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;
    for (const auto& t : raw) {
        if (ds.find(t[0]) != best) continue;
        std::array<int, 3> out{};
        for (int k = 0; k < 3; ++k) {
            int& r = remap[t[k]];
            if (r < 0) {
                r = static_cast<int>(vertices.size());
                vertices.push_back(point(t[k] % (nx + 1), t[k] / (nx + 1)));
            }
            out[k] = r;
        }
        triangles.push_back(out);
    }
    return make_mesh(std::move(vertices), std::move(triangles));
}

enum class BrainSlice { axial, sagittal };

/// Brain-like planar outline (roughly 8 x 6.5 units) used for synthetic
/// experiments. Axial: two hemispheres with a posterior notch. Sagittal:
/// cerebrum with a temporal lobe indentation and a cerebellum bulge.
inline Mesh2D brain_slice_mesh(BrainSlice slice, double h) {
    std::function<bool(double, double)> inside;
    if (slice == BrainSlice::axial) {
        inside = [](double x, double y) {
            const double r = std::hypot(x / 3.4, y / 4.1);
            const double theta = std::atan2(y, x);
            const double wobble = 1.0 + 0.05 * std::cos(4 * theta) + 0.03 * std::sin(7 * theta);
            if (r > wobble) return false;
            // longitudinal fissure cut in from the front and back
            return !(std::abs(x) < 0.25 && std::abs(y) > 3.0);
        };
        return masked_grid_mesh(inside, {-3.8, -4.6}, {3.8, 4.6}, h);
    }
    inside = [](double x, double y) {
        const double theta = std::atan2(y, x);
        const bool cerebrum = std::hypot(x / 4.2, y / 3.0) <= 1.0 + 0.04 * std::sin(6 * theta);
        const bool cerebellum = std::hypot((x - 2.4) / 1.5, (y + 2.4) / 1.0) <= 1.0;
        const bool temporal_notch = std::hypot((x + 0.3) / 1.3, (y + 2.9) / 0.9) <= 1.0;
        return (cerebrum || cerebellum) && !temporal_notch;
    };
    return masked_grid_mesh(inside, {-4.6, -3.6}, {4.6, 3.4}, h);
}

struct FemMatrices {
    SparseMatrix stiffness;
    SparseMatrix mass;
};

/// Linear (P1) stiffness and consistent mass matrices with natural (no-flux)
/// boundary conditions.
inline FemMatrices assemble_fem(const Mesh2D& mesh) {
    const int nv = mesh.num_vertices();
    std::vector<Eigen::Triplet<double>> kt, mt;
    kt.reserve(9 * mesh.triangles.size());
    mt.reserve(9 * mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double area = detail::signed_area(mesh, tri);
        if (std::abs(area) < kDegenerateArea) {
            throw input_error("assemble_fem: degenerate triangle " + std::to_string(t));
        }
        // barycentric gradients: grad(lambda_k) = rot(opposite edge) / (2 area)
        Eigen::Matrix<double, 3, 2> grads;
        for (int k = 0; k < 3; ++k) {
            const auto& p = mesh.vertices[tri[(k + 1) % 3]];
            const auto& q = mesh.vertices[tri[(k + 2) % 3]];
            grads(k, 0) = (p.y() - q.y()) / (2 * area);
            grads(k, 1) = (q.x() - p.x()) / (2 * area);
        }
        const Eigen::Matrix3d ke = std::abs(area) * grads * grads.transpose();
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                kt.emplace_back(tri[a], tri[b], ke(a, b));
                mt.emplace_back(tri[a], tri[b], std::abs(area) / 12.0 * (a == b ? 2.0 : 1.0));
            }
        }
    }
    FemMatrices fem;
    fem.stiffness.resize(nv, nv);
    fem.mass.resize(nv, nv);
    fem.stiffness.setFromTriplets(kt.begin(), kt.end());
    fem.mass.setFromTriplets(mt.begin(), mt.end());
    return fem;
}

inline double mesh_area(const Mesh2D& mesh) {
    double total = 0;
    for (const auto& t : mesh.triangles) total += std::abs(detail::signed_area(mesh, t));
    return total;
}

} // namespace leno
