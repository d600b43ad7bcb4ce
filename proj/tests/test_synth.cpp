#include <gtest/gtest.h>

#include <cmath>

#include "benchmarks.hpp"
#include "leno/spectral.hpp"
#include "leno/synth.hpp"

using namespace leno;

namespace {

const EigenBasis& square() {
    static const EigenBasis b = mesh_eigenbasis(unit_square_mesh(8), 16);
    return b;
}

FieldState constant_state(double a, double tau, double n) {
    FieldState s;
    const int v = square().num_nodes();
    s[Species::A] = Eigen::VectorXd::Constant(v, a);
    s[Species::tau] = Eigen::VectorXd::Constant(v, tau);
    s[Species::N] = Eigen::VectorXd::Constant(v, n);
    s.cognitive = 1.0;
    return s;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-0.4 * t)); }

} // namespace

TEST(Simulate, ConstantLogistic) {
    RDParams p;
    const Trajectory tr = simulate(p, square(), constant_state(0.5, 0, 0), {0.0, 10.0});
    EXPECT_LT((tr[Species::A].back().array() - logistic(10)).abs().maxCoeff(), 1e-3);
    EXPECT_NEAR(logistic(10), 0.98201, 1e-5);
}

TEST(Simulate, ZeroStaysZero) {
    const Trajectory tr = simulate(RDParams{}, square(), constant_state(0, 0, 0), {0.0, 1.0, 5.0});
    for (Species s : kAllSpecies)
        for (const auto& f : tr[s]) EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Simulate, DiffusionConservesMass) {
    RDParams p;
    p.lambda_A = p.lambda_tau = p.lambda_N = p.lambda_tauA = p.lambda_Ntau = 0;
    const FieldState init = gen_initial_conditions(square(), 5, p);
    const Trajectory tr = simulate(p, square(), init, {0.0, 0.5, 2.0, 6.0});
    for (Species s : kAllSpecies) {
        const double m0 = square().integral_weights.dot(tr[s].front());
        for (const auto& f : tr[s]) EXPECT_NEAR(square().integral_weights.dot(f), m0, 1e-8 * m0);
    }
}

TEST(Simulate, ClearanceLowersA) {
    const FieldState init = gen_initial_conditions(square(), 9);
    const auto times = uniform_grid(0, 8, 0.5);
    SimOptions treated;
    treated.clearance_A = 0.1;
    const Trajectory base = simulate(RDParams{}, square(), init, times);
    const Trajectory cut = simulate(RDParams{}, square(), init, times, treated);
    for (std::size_t n = 0; n < times.size(); ++n)
        EXPECT_TRUE((cut[Species::A][n].array() <= base[Species::A][n].array()).all()) << "t=" << times[n];
}

TEST(Simulate, CascadeTurnsOnDownstream) {
    FieldState init = gen_initial_conditions(square(), 3);
    init[Species::tau].setZero();
    init[Species::N].setZero();
    const Trajectory tr = simulate(RDParams{}, square(), init, {0.0, 0.5, 1.0});
    for (std::size_t n = 1; n < tr.size(); ++n) {
        EXPECT_GT(tr[Species::tau][n].minCoeff(), 0);
        EXPECT_GT(tr[Species::N][n].minCoeff(), 0);
    }
}

TEST(Simulate, BlowUpReportsTime) {
    RDParams p;
    p.lambda_A = -5;  // unstable logistic: A runs away from K
    try {
        simulate(p, square(), constant_state(2.0, 0, 0), {0.0, 10.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numerical);
        EXPECT_NE(std::string(e.what()).find("at t = "), std::string::npos) << e.what();
    }
}

TEST(InitialConditions, Determinism) {
    const FieldState a = gen_initial_conditions(square(), 42), b = gen_initial_conditions(square(), 42);
    const FieldState c = gen_initial_conditions(square(), 43);
    for (Species s : kAllSpecies) EXPECT_EQ(a[s], b[s]);
    EXPECT_NE(a[Species::A], c[Species::A]);
}

TEST(InitialConditions, CutoffOneIsConstant) {
    InitialConditionOptions o;
    o.cutoff = 1;
    const FieldState f = gen_initial_conditions(square(), 1, {}, o);
    for (Species s : kAllSpecies) EXPECT_EQ(f[s].maxCoeff(), f[s].minCoeff());
}

TEST(InitialConditions, BoundsOverManySeeds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const FieldState f = gen_initial_conditions(square(), seed);
        for (Species s : kAllSpecies) {
            EXPECT_GE(f[s].minCoeff(), 0.05);
            EXPECT_LE(f[s].maxCoeff(), 0.95);
        }
    }
}

TEST(Cohort, UnitTimescaleMatchesSimulate) {
    const auto times = uniform_grid(0, 3, 0.5);
    const auto cohort = make_cohort(RDParams{}, square(), {7}, {1.0}, times);
    const Trajectory direct = simulate(RDParams{}, square(), gen_initial_conditions(square(), 7), times);
    for (Species s : kAllSpecies)
        for (std::size_t n = 0; n < times.size(); ++n) EXPECT_EQ(cohort[0][s][n], direct[s][n]);
}

TEST(Cohort, TimescaleTwoRunsTwiceAsFast) {
    CohortOptions o;
    o.ic.cutoff = 1;
    o.ic.low = 0.5;
    o.ic.high = {0.6, 0.6, 0.6};
    const auto times = uniform_grid(0, 4, 1);
    const auto fast = make_cohort(RDParams{}, square(), {1}, {2.0}, times, o);
    const double a0 = fast[0][Species::A][0](0);
    for (std::size_t n = 0; n < times.size(); ++n) {
        const double t = 2 * times[n];
        const double exact = a0 / (a0 + (1 - a0) * std::exp(-0.4 * t));
        EXPECT_NEAR(fast[0][Species::A][n](0), exact, 1e-3);
    }
}

TEST(Cohort, DistinctSeedsDistinctPatients) {
    const auto cohort = make_cohort(RDParams{}, square(), {1, 2}, {1.0, 1.0}, {0.0, 1.0});
    EXPECT_NE(cohort[0][Species::A][0], cohort[1][Species::A][0]);
    EXPECT_THROW(make_cohort(RDParams{}, square(), {1}, {0.0}, {0.0, 1.0}), Error);
}

TEST(Project, BasisVectorsAndZero) {
    const EigenBasis& b = square();
    const Eigen::VectorXd beta = project(b.modes.col(1), b).beta;
    Eigen::VectorXd e2 = Eigen::VectorXd::Zero(b.size());
    e2(1) = 1;
    EXPECT_LT((beta - e2).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(project(Eigen::VectorXd::Zero(b.num_nodes()), b).beta.cwiseAbs().maxCoeff(), 0.0);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(b.size());
    e1(0) = 1;
    const Eigen::VectorXd phi1 = reconstruct({e1, b.id}, b);
    EXPECT_LT(phi1.maxCoeff() - phi1.minCoeff(), 1e-10);
    EXPECT_THROW(project(Eigen::VectorXd::Zero(3), b), Error);
    EXPECT_THROW(reconstruct({e1, b.id + 1}, b), Error);
}

TEST(Project, RoundTripsAndLinearity) {
    const EigenBasis& b = square();
    const Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(b.size(), -1, 2);
    const Eigen::VectorXd u = reconstruct({beta, b.id}, b);
    EXPECT_LT((reconstruct(project(u, b), b) - u).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((project(u, b).beta - beta).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(b.num_nodes(), 0, 1).array().square();
    const Eigen::VectorXd lhs = project(2.5 * u - 0.5 * v, b).beta;
    const Eigen::VectorXd rhs = 2.5 * project(u, b).beta - 0.5 * project(v, b).beta;
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Project, TruncationErrorShrinksWithModes) {
    const Mesh2D mesh = unit_square_mesh(8);
    const EigenBasis full = mesh_eigenbasis(mesh, 40);
    Eigen::VectorXd u(mesh.num_vertices());
    for (int i = 0; i < u.size(); ++i) u(i) = std::sin(3 * mesh.vertices[i].x()) * mesh.vertices[i].y();
    double prev = INFINITY;
    for (int p : {5, 10, 20, 40}) {
        const Eigen::VectorXd r = u - full.modes.leftCols(p) * (full.weighted_modes.leftCols(p).transpose() * u);
        const double err = std::sqrt(r.dot(full.weight * r));
        EXPECT_LE(err, prev + 1e-14);
        prev = err;
    }
}

TEST(Residual, SimpleCases) {
    const EigenBasis& b = square();
    Eigen::VectorXd e2 = Eigen::VectorXd::Zero(b.size());
    e2(1) = 1;
    const std::vector<SpectralCoeffs> series(3, SpectralCoeffs{e2, b.id});
    const auto zero = residual_series(series, {0, 1, 2}, 0.0, b);
    for (const auto& r : zero.residuals) EXPECT_EQ(r.norm(), 0.0);
    const auto diff = residual_series(series, {0, 1, 2}, 1.0, b);
    for (const auto& r : diff.residuals) EXPECT_LT((r - b.eigenvalues(1) * e2).norm(), 1e-14);
    EXPECT_THROW(residual_series(series, {0, 1, 1}, 1.0, b), Error);
}

TEST(Residual, MatchesReactionTermOnLogistic) {
    const EigenBasis& b = square();
    const double dt = 0.01;
    const auto times = uniform_grid(0, 2, dt);
    const Trajectory tr = simulate(RDParams{}, b, constant_state(0.3, 0, 0), times);
    std::vector<SpectralCoeffs> series;
    for (const auto& f : tr[Species::A]) series.push_back(project(f, b));
    const auto res = residual_series(series, times, 1.0, b);
    for (std::size_t n = 1; n < times.size(); n += 20) {
        const double a = tr[Species::A][n](0);
        const Eigen::VectorXd f = Eigen::VectorXd::Constant(b.num_nodes(), 0.4 * a * (1 - a));
        EXPECT_LT((res.residuals[n - 1] - project(f, b).beta).norm(), 0.5 * dt);
    }
}

TEST(RolloutStep, UpdateFormula) {
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
    EXPECT_NEAR(rollout_step(one, 0.1, 1.0, one, Eigen::VectorXd::Zero(1))(0), 1 / 1.1, 1e-15);
    // the computed lambda_1 is only zero to round-off, so pin it exactly
    Eigen::VectorXd lambda = square().eigenvalues;
    lambda(0) = 0;
    Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(lambda.size(), 1, -1);
    const double first = beta(0);
    for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd next = rollout_step(beta, 0.05, 0.7, lambda, Eigen::VectorXd::Zero(lambda.size()));
        for (Eigen::Index i = 1; i < lambda.size(); ++i) EXPECT_LT(std::abs(next(i)), std::abs(beta(i)) + 1e-300);
        beta = next;
    }
    EXPECT_EQ(beta(0), first);
    EXPECT_THROW(rollout_step(one, 0.0, 1.0, one, one), Error);
}
