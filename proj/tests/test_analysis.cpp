#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "benchmarks.hpp"
#include "leno/analysis.hpp"

using namespace leno;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    return Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
}

const bench::Quick& q() { return bench::quick(); }

FieldState some_state() { return q().setup.cohort[1].state(2); }

} // namespace

TEST(JacobianSpectral, LinearLayerIsItsMatrix) {
    MlpParams net = make_mlp({4, 3}, Activation::relu, Activation::linear, 1);
    net.layers[0].bias = random_vector(3, 2);
    EXPECT_EQ(jacobian_spectral(net, random_vector(4, 3)), net.layers[0].weight);
    EXPECT_THROW(jacobian_spectral(net, random_vector(5, 3)), Error);
}

TEST(JacobianSpectral, FiniteDifferencesAndLocalConstancy) {
    const MlpParams& net = q().model.op(Species::tau);
    const Eigen::VectorXd x = operator_input(project_state(some_state(), q().setup.basis), Species::tau);
    const Eigen::MatrixXd j = jacobian_spectral(net, x);
    Eigen::MatrixXd fd(j.rows(), j.cols());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        Eigen::VectorXd up = x, down = x;
        up(c) += 1e-5;
        down(c) -= 1e-5;
        fd.col(c) = (forward(net, up) - forward(net, down)) / 2e-5;
    }
    EXPECT_LE((fd - j).cwiseAbs().maxCoeff() / j.cwiseAbs().maxCoeff(), 1e-5);

    // relu pieces: away from kinks the Jacobian does not move under a tiny shift
    double closest = INFINITY;
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
        const Eigen::VectorXd z = net.layers[l].weight * a + net.layers[l].bias;
        closest = std::min(closest, z.cwiseAbs().minCoeff());
        a = z.cwiseMax(0.0);
    }
    ASSERT_GT(closest, 1e-6) << "sample point sits on a kink";
    const Eigen::MatrixXd j2 = jacobian_spectral(net, x + 1e-8 * random_vector(x.size(), 5));
    EXPECT_LT((j2 - j).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(JacobianRegional, PureDecayIsMinusProjection) {
    const EigenBasis& b = q().setup.basis;
    LenoModel m = q().model;
    const int p = b.size();
    MlpParams decay;
    decay.layers.push_back({-Eigen::MatrixXd::Identity(p, p), Eigen::VectorXd::Zero(p)});
    m.operators[0] = decay;
    const InteractionMatrix im = jacobian_regional(m, Species::A, Species::A, some_state(), b);
    const Eigen::MatrixXd expect = -b.modes * b.weighted_modes.transpose();
    EXPECT_LT((im.values - expect).cwiseAbs().maxCoeff(), 1e-12);
    // a truncated projection is not diagonally dominant row by row, only on average
    double diag = 0, off = 0;
    for (Eigen::Index i = 0; i < im.values.rows(); ++i) {
        EXPECT_LT(im.values(i, i), 0);
        double row = 0;
        for (Eigen::Index k = 0; k < im.values.cols(); ++k)
            if (k != i) row = std::max(row, std::abs(im.values(i, k)));
        diag += std::abs(im.values(i, i));
        off += row;
    }
    EXPECT_GT(diag, off);
}

TEST(JacobianRegional, ZeroOperatorAndDownstreamInputs) {
    LenoModel m = q().model;
    for (auto& l : m.operators[2].layers) l.weight.setZero(), l.bias.setZero();
    const auto zero = jacobian_regional(m, Species::N, Species::A, some_state(), q().setup.basis);
    EXPECT_EQ(zero.values.cwiseAbs().maxCoeff(), 0.0);
    const auto down = jacobian_regional(q().model, Species::A, Species::N, some_state(), q().setup.basis);
    EXPECT_EQ(down.values.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(down.pair(), "N->A");
}

TEST(JacobianRegional, ChainRuleAgainstFiniteDifferences) {
    const EigenBasis& b = q().setup.basis;
    const LenoModel& m = q().model;
    const FieldState st = some_state();
    const InteractionMatrix im = jacobian_regional(m, Species::N, Species::tau, st, b);
    const Eigen::VectorXd du = random_vector(b.num_nodes(), 9);
    auto rate = [&](double eps) {
        FieldState s = st;
        s[Species::tau] += eps * du;
        return Eigen::VectorXd(b.modes * forward(m.op(Species::N), operator_input(project_state(s, b), Species::N)));
    };
    const Eigen::VectorXd fd = (rate(1e-5) - rate(-1e-5)) / 2e-5;
    EXPECT_LE((im.values * du - fd).norm() / fd.norm(), 1e-4);
}

TEST(JacobianRegional, LinearInOutputLayerScale) {
    LenoModel m = q().model;
    const auto base = jacobian_regional(m, Species::tau, Species::A, some_state(), q().setup.basis);
    m.operators[1].layers.back().weight *= 2.5;
    const auto scaled = jacobian_regional(m, Species::tau, Species::A, some_state(), q().setup.basis);
    EXPECT_LT((scaled.values - 2.5 * base.values).cwiseAbs().maxCoeff(), 1e-12 * base.values.cwiseAbs().maxCoeff());
}

TEST(JacobianRegional, UntrainedOutputIsStageError) {
    const LenoModel m = make_model(q().setup.basis, q().setup.arch);
    EXPECT_THROW(jacobian_regional(m, Species::A, Species::A, some_state(), q().setup.basis), Error);
}

TEST(ConnectivityExport, Thresholds) {
    InteractionMatrix im;
    im.values.resize(3, 3);
    im.values << 1.0, -4.0, 2.5,  //
        0.5, 3.0, -2.0,           //
        -1.9, 4.0, 0.1;
    const auto all = connectivity_export(im, 0.0);
    EXPECT_EQ(all.size(), 9u);
    const auto top = connectivity_export(im, 1.0);
    ASSERT_EQ(top.size(), 2u);  // -4 at (0,1) and 4 at (2,1), row order breaks the tie
    EXPECT_EQ(top[0].target, 0);
    EXPECT_EQ(top[0].source, 1);
    EXPECT_EQ(top[1].target, 2);
    EXPECT_EQ(top[1].source, 1);
    const auto half = connectivity_export(im, 0.5);
    std::vector<double> w;
    for (const auto& e : half) w.push_back(e.weight);
    EXPECT_EQ(w, (std::vector<double>{-4.0, 4.0, 3.0, 2.5, -2.0}));
    EXPECT_THROW(connectivity_export(im, 1.5), Error);
}

TEST(ConnectivityExport, Deterministic) {
    const auto im = jacobian_regional(q().model, Species::tau, Species::tau, some_state(), q().setup.basis);
    const auto a = connectivity_export(im, 0.2), b = connectivity_export(im, 0.2);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].source, b[i].source);
        EXPECT_EQ(a[i].target, b[i].target);
        EXPECT_EQ(a[i].weight, b[i].weight);
    }
}

TEST(InteractionLength, WeightedMeanDistance) {
    const Mesh2D mesh = unit_square_mesh(2);  // 9 vertices on a 0.5 grid
    const Eigen::MatrixXd d = mesh_distances(mesh);
    EXPECT_NEAR(d(0, 1), 0.5, 1e-15);
    EXPECT_NEAR(d(0, 8), std::sqrt(2.0), 1e-15);  // the triangle diagonals run corner to corner
    EXPECT_EQ(d, d.transpose());
    const EigenBasis b = mesh_eigenbasis(mesh, 4);
    const Eigen::VectorXd m = b.weight * Eigen::VectorXd::Ones(9);
    const std::vector<Edge> edges{{0, 1, 1.0}, {4, 4, -1.0}, {0, 8, 0.3}};
    const double expect = (m(0) * m(1) * 0.5 + m(0) * m(8) * d(8, 0)) / (m(0) * m(1) + m(4) * m(4) + m(0) * m(8));
    EXPECT_NEAR(interaction_length(edges, d, b), expect, 1e-14);
    EXPECT_THROW(interaction_length({}, d, b), Error);
}
