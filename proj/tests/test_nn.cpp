#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd_oracle.hpp"
#include "leno/mlp.hpp"
#include "leno/model.hpp"

using namespace leno;

namespace {

// central-difference check of grad() on a random batch and adjoint
double max_grad_error(MlpParams p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (auto& l : p.layers) l.bias = l.bias.unaryExpr([&](double) { return 0.1 * normal(rng); });
    Eigen::MatrixXd x(p.input_size(), 3), c(p.output_size(), 3);
    x = x.unaryExpr([&](double) { return normal(rng); });
    c = c.unaryExpr([&](double) { return normal(rng); });
    return oracle::max_relative_error(p, x, c, flatten(grad(p, x, c)), 1e-5, 1e-8);
}

} // namespace

TEST(Mlp, IdentityLayer) {
    MlpParams p = make_mlp({3, 3}, Activation::relu, Activation::linear, 1);
    p.layers[0].weight.setIdentity();
    const Eigen::Vector3d x(0.5, -2, 7);
    EXPECT_EQ(forward(p, x), x);
}

TEST(Mlp, ReluKillsNegativeInputs) {
    MlpParams p = make_mlp({2, 4, 1}, Activation::relu, Activation::linear, 2);
    p.layers[0].weight = p.layers[0].weight.cwiseAbs();
    ForwardCache cache;
    forward_batch(p, Eigen::MatrixXd::Constant(2, 1, -1.0), &cache);
    EXPECT_EQ(cache.activations[1].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, HandEvaluated231) {
    const MlpParams p = make_mlp({2, 3, 1}, Activation::relu, Activation::linear, 99);
    const double x0 = 0.3, x1 = -0.7;
    double y = p.layers[1].bias(0);
    for (int j = 0; j < 3; ++j) {
        double h = p.layers[0].bias(j) + p.layers[0].weight(j, 0) * x0 + p.layers[0].weight(j, 1) * x1;
        if (h < 0) h = 0;
        y += p.layers[1].weight(0, j) * h;
    }
    EXPECT_NEAR(forward(p, Eigen::Vector2d(x0, x1))(0), y, 1e-15);
    EXPECT_THROW(forward(p, Eigen::Vector3d::Zero()), Error);
}

TEST(Mlp, SigmoidOutputStaysInsideUnitInterval) {
    const MlpParams p = make_mlp({1, 16, 1}, Activation::relu, Activation::sigmoid, 4);
    for (double x : {-1e3, -5.0, 0.0, 5.0, 1e3}) {
        const double y = forward(p, Eigen::VectorXd::Constant(1, x))(0);
        EXPECT_GT(y, 0);
        EXPECT_LT(y, 1);
    }
}

TEST(Grad, LinearScalar) {
    MlpParams p = make_mlp({1, 1}, Activation::relu, Activation::linear, 0);
    const MlpParams g = grad(p, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1));
    EXPECT_EQ(g.layers[0].weight(0, 0), 1.0);
    EXPECT_EQ(g.layers[0].bias(0), 1.0);
}

TEST(Grad, ZeroAdjointGivesZero) {
    const MlpParams p = make_mlp({4, 8, 2}, Activation::relu, Activation::linear, 3);
    const MlpParams g = grad(p, Eigen::MatrixXd::Random(4, 5), Eigen::MatrixXd::Zero(2, 5));
    EXPECT_EQ(flatten(g).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(grad(p, Eigen::MatrixXd::Random(4, 5), Eigen::MatrixXd::Zero(3, 5)), Error);
}

TEST(Grad, FiniteDifferencesSmallNets) {
    EXPECT_LE(max_grad_error(make_mlp({3, 5, 4, 2}, Activation::relu, Activation::linear, 5), 1), 1e-5);
    EXPECT_LE(max_grad_error(make_mlp({1, 6, 6, 1}, Activation::relu, Activation::sigmoid, 6), 2), 1e-5);
}

TEST(Grad, FiniteDifferencesTableArchitectures) {
    // the graph family at P = 8 keeps the check cheap; the full sizes run in the acceptance binary
    for (int k = 1; k <= 3; ++k)
        EXPECT_LE(max_grad_error(make_mlp(operator_layout(Architecture::graph, 8, k), Activation::relu,
                                          Activation::linear, 10 + k),
                                 k),
                  1e-5);
}

TEST(Layouts, TableSizes) {
    EXPECT_EQ(operator_layout(Architecture::graph, 48, 2), (std::vector<int>{96, 128, 128, 48}));
    EXPECT_EQ(operator_layout(Architecture::mesh, 64, 3), (std::vector<int>{192, 100, 100, 100, 64}));
    EXPECT_EQ(cognitive_layout(Architecture::graph, 48), (std::vector<int>{48, 128, 128, 1}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    const Eigen::Vector3d g(2.0, -0.01, 300.0);
    AdamState s(3);
    adam_update(x, g, s, 0.01);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(x(i)), 0.01, 1e-6);
    EXPECT_LT(x(0), 0);
    EXPECT_GT(x(1), 0);
}

TEST(Adam, ZeroGradientIsNoOp) {
    MlpParams p = make_mlp({2, 3, 1}, Activation::relu, Activation::linear, 8);
    const MlpParams before = p;
    AdamState s;
    for (int k = 0; k < 10; ++k) adam_step(p, p.zeros_like(), s, 1e-3);
    EXPECT_TRUE(p == before);
}

TEST(Adam, ConvergesOnQuadratic) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(1);
    AdamState s(1);
    for (int k = 0; k < 200; ++k) adam_update(w, Eigen::VectorXd::Constant(1, 2 * (w(0) - 3)), s, 0.1);
    EXPECT_LE(std::abs(w(0) - 3), 0.1);
    EXPECT_THROW(adam_update(w, w, s, 0.0), Error);
}

TEST(Schedule, StepDecay) {
    const LrSchedule s;
    EXPECT_EQ(lr_at(s, 0), 1e-3);
    EXPECT_EQ(lr_at(s, 999), 1e-3);
    EXPECT_EQ(lr_at(s, 1000), 5e-4);
    EXPECT_EQ(lr_at(s, 2500), 2.5e-4);
}

TEST(Init, SeedDeterminism) {
    const auto a = make_mlp({5, 7, 2}, Activation::relu, Activation::linear, 77);
    const auto b = make_mlp({5, 7, 2}, Activation::relu, Activation::linear, 77);
    const auto c = make_mlp({5, 7, 2}, Activation::relu, Activation::linear, 78);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == c);
}
