// Regenerates the domain files under data/.
#include <cstdio>
#include <filesystem>
#include <string>

#include "leno/graph.hpp"
#include "leno/mesh.hpp"

using namespace leno;

namespace {

// brain slices at quarter scale: about 2 units across, so that diffusion
// mixes a patient's fields within the observation span
Mesh2D scaled_slice(BrainSlice slice) {
    Mesh2D m = brain_slice_mesh(slice, 0.4);
    for (auto& v : m.vertices) v *= 0.25;
    return make_mesh(m.vertices, m.triangles);
}

} // namespace

int main(int argc, char** argv) {
    const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
    std::filesystem::create_directories(dir);
    save_mesh(scaled_slice(BrainSlice::axial), (dir / "brain_axial.mesh").string());
    save_mesh(scaled_slice(BrainSlice::sagittal), (dir / "brain_sagittal.mesh").string());
    save_mesh(unit_square_mesh(20), (dir / "unit_square.mesh").string());
    save_graph(random_geometric_graph(68, 0.2, 0.1, 2024), (dir / "connectome68.graph").string());
    save_graph(build_graph_laplacian((Eigen::MatrixXd(3, 3) << 0, 1, 0, 1, 0, 1, 0, 1, 0).finished()),
               (dir / "path3.graph").string());
    std::printf("fixtures written to %s\n", dir.string().c_str());
}
