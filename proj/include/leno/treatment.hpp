#pragma once
// Treated dynamics with time-dependent clearance of A and tau, and gradient
// optimization of the dosing networks against the cognitive objective.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"
#include "mlp.hpp"
#include "model.hpp"
#include "train.hpp"

namespace leno {

enum class Scenario { none, anti_A, anti_tau, combo };
inline constexpr std::array<Scenario, 4> kAllScenarios{Scenario::none, Scenario::anti_A, Scenario::anti_tau,
                                                       Scenario::combo};

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::none: return "none";
        case Scenario::anti_A: return "anti_A";
        case Scenario::anti_tau: return "anti_tau";
        case Scenario::combo: return "combo";
    }
    return "?";
}

inline Scenario scenario_from_name(const std::string& name) {
    for (Scenario s : kAllScenarios)
        if (name == scenario_name(s)) return s;
    throw input_error("unknown scenario '" + name + "' (expected none, anti_A, anti_tau or combo)");
}

inline bool treats_A(Scenario s) { return s == Scenario::anti_A || s == Scenario::combo; }
inline bool treats_tau(Scenario s) { return s == Scenario::anti_tau || s == Scenario::combo; }

struct TreatmentConfig {
    double eta_A = 0.1, eta_tau = 0.1;
    double d_max_A = 0.5, d_max_tau = 0.5;
    double start = 0.0;     // treatment begins at the initial state's time
    double horizon = 10.0;  // absolute end time T
    double step = 0.1;      // rollout interval on [start, horizon]
    int epochs = 1000;
    LrSchedule schedule{};
    std::uint64_t seed = 7;

    void validate(double last_observed = -std::numeric_limits<double>::infinity()) const {
        if (!(eta_A >= 0) || !(eta_tau >= 0)) throw input_error("treatment: dose penalties must be nonnegative");
        if (!(d_max_A > 0) || !(d_max_tau > 0)) throw input_error("treatment: dose bounds must be positive");
        if (!(horizon > start)) throw input_error("treatment: horizon must lie after the start time");
        if (!(horizon > last_observed)) throw input_error("treatment: horizon must lie beyond the last observed time");
        if (!(step > 0) || step > horizon - start) throw input_error("treatment: bad rollout step");
        if (epochs < 1) throw input_error("treatment: epochs must be at least 1");
    }

    std::vector<double> grid() const {
        std::vector<double> t = uniform_grid(start, horizon, step);
        if (horizon - t.back() > 1e-9 * step) t.push_back(horizon);
        else t.back() = horizon;
        return t;
    }
};

/// Dose networks map normalized age (t - start) / time_scale to a fraction of
/// the dose bound. Inactive arms carry no network and emit exactly zero.
struct TreatmentPolicy {
    Scenario scenario = Scenario::none;
    MlpParams net_A, net_tau;
    double d_max_A = 0.5, d_max_tau = 0.5;
    double start = 0.0, time_scale = 1.0;

    Eigen::RowVectorXd inputs(const std::vector<double>& times) const {
        Eigen::RowVectorXd x(static_cast<Eigen::Index>(times.size()));
        for (std::size_t i = 0; i < times.size(); ++i) x(static_cast<Eigen::Index>(i)) = (times[i] - start) / time_scale;
        return x;
    }

    /// Doses at each time; rows are (d_A, d_tau).
    Eigen::MatrixXd doses(const std::vector<double>& times) const {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(times.size()));
        const Eigen::MatrixXd x = inputs(times);
        if (treats_A(scenario)) d.row(0) = d_max_A * forward_batch(net_A, x);
        if (treats_tau(scenario)) d.row(1) = d_max_tau * forward_batch(net_tau, x);
        return d;
    }
};

inline std::vector<int> dose_layout() { return {1, 128, 128, 1}; }

/// Fresh policy; the output layer starts at zero so every active arm begins at
/// half its bound.
inline TreatmentPolicy make_policy(Scenario scenario, const TreatmentConfig& cfg) {
    TreatmentPolicy p;
    p.scenario = scenario;
    p.d_max_A = cfg.d_max_A;
    p.d_max_tau = cfg.d_max_tau;
    p.start = cfg.start;
    p.time_scale = cfg.horizon - cfg.start;
    auto make = [&](std::uint64_t tag) {
        MlpParams net = make_mlp(dose_layout(), Activation::relu, Activation::sigmoid, detail::mix_seed(cfg.seed, tag));
        net.layers.back().weight.setZero();
        return net;
    };
    if (treats_A(scenario)) p.net_A = make(11);
    if (treats_tau(scenario)) p.net_tau = make(12);
    return p;
}

struct TreatedRollout {
    std::vector<double> times;
    Eigen::MatrixXd doses;  // 2 x times, (d_A, d_tau) at each time
    std::vector<JointState> states;
    RolloutTape tape;
};

/// Rollout on `times` where step n applies the doses evaluated at times[n].
inline TreatedRollout treated_rollout(const LenoModel& model, const EigenBasis& basis, const TreatmentPolicy& policy,
                                      const FieldState& init, const std::vector<double>& times) {
    check_compatible(model, basis);
    if (times.empty()) throw input_error("treated_rollout: empty time grid");
    TreatedRollout r;
    r.times = times;
    r.doses = policy.doses(times);
    std::vector<double> dts;
    std::vector<StepDoses> steps;
    for (std::size_t n = 1; n < times.size(); ++n) {
        const double gap = times[n] - times[n - 1];
        if (!(gap > 0)) throw input_error("treated_rollout: times must be strictly increasing");
        dts.push_back(gap);
        const auto k = static_cast<Eigen::Index>(n);
        steps.push_back({r.doses(0, k), r.doses(1, k)});
    }
    r.states = joint_rollout(model, basis.eigenvalues, project_state(init, basis), dts, steps, &r.tape);
    return r;
}

inline Trajectory to_trajectory(const TreatedRollout& r, const EigenBasis& basis, bool with_cognitive) {
    return states_to_trajectory(r.states, r.times, basis, with_cognitive);
}

namespace detail {

// trapezoid weights of the grid
inline Eigen::VectorXd trapezoid_weights(const std::vector<double>& t) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.size()));
    for (std::size_t n = 1; n < t.size(); ++n) {
        const double h = 0.5 * (t[n] - t[n - 1]);
        w(static_cast<Eigen::Index>(n - 1)) += h;
        w(static_cast<Eigen::Index>(n)) += h;
    }
    return w;
}

} // namespace detail

/// Dose burden: trapezoidal integral of eta_A d_A^2 + eta_tau d_tau^2.
inline double dose_penalty(const Eigen::MatrixXd& doses, const std::vector<double>& times, const TreatmentConfig& cfg) {
    const Eigen::VectorXd w = detail::trapezoid_weights(times);
    const Eigen::VectorXd f =
        (cfg.eta_A * doses.row(0).array().square() + cfg.eta_tau * doses.row(1).array().square()).matrix().transpose();
    return w.dot(f);
}

/// -C(T) plus the dose penalty.
inline double objective(const TreatedRollout& r, const LenoModel& model, const TreatmentConfig& cfg) {
    if (!model.cognitive_trained) throw stage_error("treatment objective requires a trained cognitive network");
    const double penalty = (cfg.eta_A == 0 && cfg.eta_tau == 0) ? 0.0 : dose_penalty(r.doses, r.times, cfg);
    return -r.states.back().cognitive + penalty;
}

struct PolicyGradient {
    double objective = 0;
    MlpParams grad_A, grad_tau;
};

/// Objective and its gradient with respect to the dose networks, by an
/// adjoint sweep back through the recorded rollout.
inline PolicyGradient policy_gradient(const LenoModel& model, const EigenBasis& basis, const TreatmentPolicy& policy,
                                      const FieldState& init, const TreatmentConfig& cfg) {
    const std::vector<double> times = cfg.grid();
    const TreatedRollout r = treated_rollout(model, basis, policy, init, times);
    PolicyGradient out;
    out.objective = objective(r, model, cfg);

    const Eigen::Index nt = static_cast<Eigen::Index>(times.size());
    const Eigen::VectorXd w = detail::trapezoid_weights(times);
    // dJ/d(dose) at each grid time, seeded with the penalty part
    Eigen::MatrixXd gd(2, nt);
    gd.row(0) = 2.0 * cfg.eta_A * r.doses.row(0).cwiseProduct(w.transpose());
    gd.row(1) = 2.0 * cfg.eta_tau * r.doses.row(1).cwiseProduct(w.transpose());

    const Eigen::VectorXd& lam = basis.eigenvalues;
    std::array<Eigen::VectorXd, 3> adj;
    for (auto& a : adj) a = Eigen::VectorXd::Zero(lam.size());
    double adj_c = -1.0;
    for (std::size_t n = times.size() - 1; n-- > 0;) {
        const double dt = times[n + 1] - times[n];
        const JointState& prev = r.states[n];
        const double dose[2] = {r.doses(0, static_cast<Eigen::Index>(n + 1)), r.doses(1, static_cast<Eigen::Index>(n + 1))};
        std::array<Eigen::VectorXd, 3> next_adj;
        for (auto& a : next_adj) a = Eigen::VectorXd::Zero(lam.size());
        for (Species s : kAllSpecies) {
            const int si = index_of(s);
            const Eigen::VectorXd q = adj[si].array() / (1.0 + dt * model.alpha(s) * lam.array());
            const double d = si < 2 ? dose[si] : 0.0;
            next_adj[si] += (1.0 - dt * d) * q;
            if (si < 2) gd(si, static_cast<Eigen::Index>(n + 1)) -= dt * q.dot(prev.beta[si]);
            const Eigen::VectorXd dx =
                backward_batch(model.op(s), r.tape.operators[n][si], Eigen::MatrixXd(dt * q), nullptr).col(0);
            for (int j = 0; j <= si; ++j) next_adj[j] += dx.segment(j * lam.size(), lam.size());
        }
        if (model.cognitive_trained) {
            const Eigen::MatrixXd a = Eigen::MatrixXd::Constant(1, 1, dt * adj_c);
            next_adj[2] += backward_batch(model.cognitive, r.tape.cognitive[n], a, nullptr).col(0);
        }
        adj = std::move(next_adj);
    }

    const Eigen::MatrixXd x = policy.inputs(times);
    auto arm = [&](const MlpParams& net, double d_max, int row) {
        ForwardCache cache;
        forward_batch(net, x, &cache);
        MlpParams g = net.zeros_like();
        backward_batch(net, cache, d_max * gd.row(row), &g);
        return g;
    };
    if (treats_A(policy.scenario)) out.grad_A = arm(policy.net_A, policy.d_max_A, 0);
    if (treats_tau(policy.scenario)) out.grad_tau = arm(policy.net_tau, policy.d_max_tau, 1);
    return out;
}

struct PolicyResult {
    TreatmentPolicy policy;  // best policy seen
    double objective = 0;    // its objective
    std::vector<double> trace;  // objective of the current policy at each epoch
};

/// Adam on the dose networks of the scenario's active arms; returns the
/// best-objective policy.
inline PolicyResult optimize_policy(const LenoModel& model, const EigenBasis& basis, const FieldState& init,
                                    const TreatmentConfig& cfg, Scenario scenario) {
    cfg.validate();
    if (!model.cognitive_trained) throw stage_error("treatment optimization requires a trained cognitive network");
    PolicyResult res;
    res.policy = make_policy(scenario, cfg);
    TreatmentPolicy policy = res.policy;
    if (scenario == Scenario::none) {
        res.objective = policy_gradient(model, basis, policy, init, cfg).objective;
        res.trace.assign(1, res.objective);
        return res;
    }
    res.objective = std::numeric_limits<double>::infinity();
    auto params = [&]() {
        Eigen::VectorXd a = treats_A(scenario) ? flatten(policy.net_A) : Eigen::VectorXd();
        Eigen::VectorXd t = treats_tau(scenario) ? flatten(policy.net_tau) : Eigen::VectorXd();
        Eigen::VectorXd v(a.size() + t.size());
        v << a, t;
        return v;
    };
    Eigen::VectorXd theta = params();
    AdamState adam(theta.size());
    for (int e = 0; e < cfg.epochs; ++e) {
        const PolicyGradient pg = policy_gradient(model, basis, policy, init, cfg);
        Eigen::VectorXd g(theta.size());
        Eigen::Index k = 0;
        if (treats_A(scenario)) {
            const Eigen::VectorXd ga = flatten(pg.grad_A);
            g.segment(k, ga.size()) = ga;
            k += ga.size();
        }
        if (treats_tau(scenario)) g.segment(k, theta.size() - k) = flatten(pg.grad_tau);
        if (!std::isfinite(pg.objective) || !g.allFinite()) {
            throw numerical_error("treatment optimization diverged at epoch " + std::to_string(e));
        }
        res.trace.push_back(pg.objective);
        if (pg.objective < res.objective) {
            res.objective = pg.objective;
            res.policy = policy;
        }
        adam_update(theta, g, adam, lr_at(cfg.schedule, e));
        k = 0;
        if (treats_A(scenario)) {
            Eigen::VectorXd part = theta.segment(k, policy.net_A.num_parameters());
            unflatten(part, policy.net_A);
            k += part.size();
        }
        if (treats_tau(scenario)) unflatten(Eigen::VectorXd(theta.segment(k, theta.size() - k)), policy.net_tau);
    }
    // the final update has not been scored yet
    const double last = policy_gradient(model, basis, policy, init, cfg).objective;
    if (std::isfinite(last) && last < res.objective) {
        res.objective = last;
        res.policy = policy;
    }
    return res;
}

} // namespace leno
