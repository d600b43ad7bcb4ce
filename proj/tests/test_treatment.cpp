#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "benchmarks.hpp"
#include "leno/treatment.hpp"

using namespace leno;

namespace {

TreatmentConfig short_config() {
    TreatmentConfig cfg;
    cfg.horizon = 6;
    cfg.step = 0.25;
    cfg.epochs = 15;
    return cfg;
}

FieldState start_state() { return bench::quick().setup.cohort[0].state(0); }

} // namespace

TEST(TreatmentConfig, Validation) {
    TreatmentConfig cfg;
    EXPECT_NO_THROW(cfg.validate(4.0));
    EXPECT_THROW(cfg.validate(10.0), Error);
    cfg.eta_A = -1;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = TreatmentConfig{};
    cfg.d_max_tau = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = TreatmentConfig{};
    cfg.horizon = 1.05;
    cfg.step = 0.1;
    const auto g = cfg.grid();
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_EQ(g.back(), 1.05);
}

TEST(Scenario, NamesRoundTrip) {
    for (Scenario s : kAllScenarios) EXPECT_EQ(scenario_from_name(scenario_name(s)), s);
    EXPECT_THROW(scenario_from_name("anti_B"), Error);
}

TEST(Policy, NoneIsUntreatedPrediction) {
    const auto& q = bench::quick();
    const TreatmentConfig cfg = short_config();
    const auto grid = cfg.grid();
    const TreatedRollout r = treated_rollout(q.model, q.setup.basis, make_policy(Scenario::none, cfg), start_state(), grid);
    const Trajectory treated = to_trajectory(r, q.setup.basis, true);
    const Trajectory plain = predict(q.model, q.setup.basis, start_state(), grid);
    for (Species s : kAllSpecies)
        for (std::size_t n = 0; n < grid.size(); ++n) EXPECT_EQ(treated[s][n], plain[s][n]);
    EXPECT_EQ(treated.cognitive, plain.cognitive);
}

TEST(Policy, DosesBoundedAndArmsIsolated) {
    const TreatmentConfig cfg = short_config();
    const auto grid = cfg.grid();
    const Eigen::MatrixXd a = make_policy(Scenario::anti_A, cfg).doses(grid);
    const Eigen::MatrixXd t = make_policy(Scenario::anti_tau, cfg).doses(grid);
    const Eigen::MatrixXd c = make_policy(Scenario::combo, cfg).doses(grid);
    EXPECT_EQ(a.row(1).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(t.row(0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE((c.array() > 0).all());
    EXPECT_TRUE((c.row(0).array() < cfg.d_max_A).all());
    EXPECT_TRUE((c.row(1).array() < cfg.d_max_tau).all());
    EXPECT_NEAR(c(0, 0), 0.5 * cfg.d_max_A, 1e-15);  // zero output layer: sigmoid(0)
}

TEST(Objective, ZeroDosesAndZeroPenalties) {
    const auto& q = bench::quick();
    TreatmentConfig cfg = short_config();
    const auto grid = cfg.grid();
    const TreatedRollout none = treated_rollout(q.model, q.setup.basis, make_policy(Scenario::none, cfg), start_state(), grid);
    cfg.eta_A = cfg.eta_tau = 123.0;
    EXPECT_EQ(objective(none, q.model, cfg), -none.states.back().cognitive);
    cfg.eta_A = cfg.eta_tau = 0;
    const TreatedRollout combo =
        treated_rollout(q.model, q.setup.basis, make_policy(Scenario::combo, cfg), start_state(), grid);
    EXPECT_EQ(objective(combo, q.model, cfg), -combo.states.back().cognitive);
}

TEST(Objective, ConstantDosePenalty) {
    TreatmentConfig cfg;
    cfg.eta_A = 1;
    cfg.eta_tau = 5;
    const auto grid = cfg.grid();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(grid.size()));
    d.row(0).setConstant(0.1);
    EXPECT_NEAR(dose_penalty(d, grid, cfg), 0.1, 1e-6);
}

TEST(Objective, RequiresCognitiveNetwork) {
    const auto& q = bench::quick();
    LenoModel m = q.model;
    m.cognitive_trained = false;
    const TreatmentConfig cfg = short_config();
    const TreatedRollout r = treated_rollout(m, q.setup.basis, make_policy(Scenario::none, cfg), start_state(), cfg.grid());
    EXPECT_THROW(objective(r, m, cfg), Error);
    EXPECT_THROW(optimize_policy(m, q.setup.basis, start_state(), cfg, Scenario::combo), Error);
}

TEST(PolicyGradient, MatchesFiniteDifferences) {
    const auto& q = bench::quick();
    TreatmentConfig cfg = short_config();
    cfg.eta_A = 0.3;
    cfg.eta_tau = 0.7;
    TreatmentPolicy policy = make_policy(Scenario::combo, cfg);
    // nonzero output layers so that every parameter carries gradient
    policy.net_A.layers.back().weight.setConstant(0.01);
    policy.net_tau.layers.back().weight.setConstant(-0.02);
    // zero biases put every hidden unit on the relu kink at the first dose time
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (MlpParams* net : {&policy.net_A, &policy.net_tau})
        for (auto& l : net->layers) l.bias = l.bias.unaryExpr([&](double) { return normal(rng); });
    const PolicyGradient pg = policy_gradient(q.model, q.setup.basis, policy, start_state(), cfg);
    auto value = [&](const TreatmentPolicy& p) {
        return objective(treated_rollout(q.model, q.setup.basis, p, start_state(), cfg.grid()), q.model, cfg);
    };
    EXPECT_NEAR(pg.objective, value(policy), 1e-14);
    double worst = 0;
    for (int arm = 0; arm < 2; ++arm) {
        MlpParams& net = arm == 0 ? policy.net_A : policy.net_tau;
        const Eigen::VectorXd g = flatten(arm == 0 ? pg.grad_A : pg.grad_tau);
        // round-off accumulated over the rollout swamps the difference quotient on entries far below the largest
        const double floor = 1e-4 * g.cwiseAbs().maxCoeff();
        Eigen::VectorXd theta = flatten(net);
        for (Eigen::Index i = 0; i < theta.size(); i += 97) {
            const double orig = theta(i);
            theta(i) = orig + 1e-5;
            unflatten(theta, net);
            const double up = value(policy);
            theta(i) = orig - 1e-5;
            unflatten(theta, net);
            const double down = value(policy);
            theta(i) = orig;
            unflatten(theta, net);
            const double fd = (up - down) / 2e-5;
            const double scale = std::max({std::abs(fd), std::abs(g(i)), floor});
            if (scale > 1e-8) worst = std::max(worst, std::abs(fd - g(i)) / scale);
        }
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(Optimize, TraceFiniteAndBestNotWorseThanStart) {
    const auto& q = bench::quick();
    const TreatmentConfig cfg = short_config();
    const PolicyResult r = optimize_policy(q.model, q.setup.basis, start_state(), cfg, Scenario::combo);
    ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(cfg.epochs));
    double best = INFINITY;
    for (double v : r.trace) {
        EXPECT_TRUE(std::isfinite(v));
        best = std::min(best, v);
    }
    EXPECT_LE(r.objective, best);
    EXPECT_LE(r.objective, r.trace.front());
    const double rescored =
        objective(treated_rollout(q.model, q.setup.basis, r.policy, start_state(), cfg.grid()), q.model, cfg);
    EXPECT_EQ(rescored, r.objective);
}

TEST(Optimize, DeterministicUnderSeed) {
    const auto& q = bench::quick();
    const TreatmentConfig cfg = short_config();
    const PolicyResult a = optimize_policy(q.model, q.setup.basis, start_state(), cfg, Scenario::anti_tau);
    const PolicyResult b = optimize_policy(q.model, q.setup.basis, start_state(), cfg, Scenario::anti_tau);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_TRUE(a.policy.net_tau == b.policy.net_tau);
}
