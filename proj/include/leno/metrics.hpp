#pragma once
// Training losses and evaluation metrics (Acc2, Acc1, E_L2, E_Res, E_Nonlinear).

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"
#include "model.hpp"
#include "synth.hpp"

namespace leno {

/// L^D: mean over steps of ||pred^n - data^n|| / ||data^n||.
inline double loss_data(const std::vector<Eigen::VectorXd>& pred, const std::vector<Eigen::VectorXd>& data) {
    if (pred.size() != data.size() || data.empty()) throw input_error("loss_data: sequences must be nonempty and aligned");
    double total = 0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        const double denom = data[n].norm();
        if (!(denom > 0)) throw input_error("loss_data: data step " + std::to_string(n) + " has zero norm");
        total += (pred[n] - data[n]).norm() / denom;
    }
    return total / static_cast<double>(data.size());
}

/// L^R: mean over steps of ||R^n - G(beta^{n-1})|| / ||R^n||.
inline double loss_residual(const std::vector<Eigen::VectorXd>& g_outputs, const std::vector<Eigen::VectorXd>& residuals) {
    if (g_outputs.size() != residuals.size() || residuals.empty()) {
        throw input_error("loss_residual: sequences must be nonempty and aligned");
    }
    double total = 0;
    for (std::size_t n = 0; n < residuals.size(); ++n) {
        const double denom = residuals[n].norm();
        if (!(denom > 0)) throw input_error("loss_residual: residual step " + std::to_string(n) + " has zero norm");
        total += (residuals[n] - g_outputs[n]).norm() / denom;
    }
    return total / static_cast<double>(residuals.size());
}

enum class Target { A, tau, N, C };
inline constexpr std::array<Target, 4> kAllTargets{Target::A, Target::tau, Target::N, Target::C};

inline const char* target_name(Target t) {
    switch (t) {
        case Target::A: return "A";
        case Target::tau: return "tau";
        case Target::N: return "N";
        case Target::C: return "C";
    }
    return "?";
}

inline Target target_of(Species s) { return static_cast<Target>(index_of(s)); }

struct Metrics {
    static constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();
    double acc2 = kAbsent;
    double acc1 = kAbsent;
    double e_l2 = kAbsent;
    double e_res = kAbsent;
    double e_nonlinear = kAbsent;  // NaN unless the ground-truth reaction term is known
    long acc1_excluded = 0;        // nodes skipped by Acc1 because the truth is exactly zero

    bool has_nonlinear() const { return !std::isnan(e_nonlinear); }
};

/// Uniform average of per-patient metrics.
inline Metrics average_metrics(const std::vector<Metrics>& per_patient) {
    if (per_patient.empty()) throw input_error("average_metrics: nothing to average");
    Metrics out{0, 0, 0, 0, 0, 0};
    for (const auto& m : per_patient) {
        out.acc2 += m.acc2;
        out.acc1 += m.acc1;
        out.e_l2 += m.e_l2;
        out.e_res += m.e_res;
        out.e_nonlinear += m.e_nonlinear;
        out.acc1_excluded += m.acc1_excluded;
    }
    const double k = static_cast<double>(per_patient.size());
    out.acc2 /= k;
    out.acc1 /= k;
    out.e_l2 /= k;
    out.e_res /= k;
    out.e_nonlinear /= k;
    return out;
}

struct EvalOptions {
    std::size_t first = 1;  // inclusive index range of evaluated time points
    std::size_t last = 0;   // inclusive; 0 means the final point
    const RDParams* truth = nullptr;   // enables E_Nonlinear
    double gamma = 1.0;                // model clock rate used to produce `pred`
};

namespace detail {

inline double m_norm(const EigenBasis& basis, const Eigen::VectorXd& v) {
    return std::sqrt(std::max(0.0, v.dot(basis.weight * v)));
}

} // namespace detail

/// Metrics of one target for one patient over the configured index range.
/// E_Res compares G at the predicted previous state with the data residual;
/// E_Nonlinear compares the reconstructed operator at the predicted state
/// against the true reaction term at the data state.
inline Metrics evaluate(Target target, const Trajectory& pred, const Trajectory& truth, const LenoModel& model,
                        const EigenBasis& basis, const EvalOptions& opt = {}) {
    if (pred.times.size() != truth.times.size()) throw input_error("evaluate: time grids differ in length");
    for (std::size_t n = 0; n < truth.times.size(); ++n)
        if (std::abs(pred.times[n] - truth.times[n]) > 1e-9 * (1 + std::abs(truth.times[n])))
            throw input_error("evaluate: time grids are not aligned");
    const std::size_t last = opt.last == 0 ? truth.times.size() - 1 : opt.last;
    if (opt.first < 1 || opt.first > last || last >= truth.times.size()) throw input_error("evaluate: bad index range");

    Metrics out{0, 0, 0, 0, opt.truth ? 0.0 : Metrics::kAbsent, 0};
    const double count = static_cast<double>(last - opt.first + 1);

    if (target == Target::C) {
        if (!pred.has_cognitive() || !truth.has_cognitive()) throw input_error("evaluate: cognitive series missing");
        const bool have_net = model.cognitive_trained;
        for (std::size_t n = opt.first; n <= last; ++n) {
            const double c = truth.cognitive[n], ct = pred.cognitive[n];
            if (c == 0.0) throw input_error("evaluate: cognitive score is exactly zero");
            const double rel = std::abs(c - ct) / std::abs(c);
            out.e_l2 += rel;
            out.acc2 += rel;
            out.acc1 += rel;
            if (have_net) {
                const double dt = opt.gamma * (truth.times[n] - truth.times[n - 1]);
                const double r = (truth.cognitive[n] - truth.cognitive[n - 1]) / dt;
                const Eigen::VectorXd bn_prev = project(pred[Species::N][n - 1], basis).beta;
                const double g = forward(model.cognitive, bn_prev)(0);
                out.e_res += std::abs(g - r) / std::abs(r);
                if (opt.truth) {
                    const Eigen::VectorXd bn = project(pred[Species::N][n], basis).beta;
                    const double gn = forward(model.cognitive, bn)(0);
                    const double f = cognitive_rate(*opt.truth, basis.integral_weights.dot(truth[Species::N][n]), c);
                    out.e_nonlinear += std::abs(gn - f) / std::abs(f);
                }
            }
        }
        out.acc2 = 1 - out.acc2 / count;
        out.acc1 = 1 - out.acc1 / count;
        out.e_l2 /= count;
        out.e_res = have_net ? out.e_res / count : Metrics::kAbsent;
        out.e_nonlinear = have_net && opt.truth ? out.e_nonlinear / count : Metrics::kAbsent;
        return out;
    }

    const Species s = static_cast<Species>(static_cast<int>(target));
    const int si = index_of(s);
    const bool have_net = model.trained[si];
    long acc1_terms = 0;
    for (std::size_t n = opt.first; n <= last; ++n) {
        const Eigen::VectorXd& u = truth[s][n];
        const Eigen::VectorXd& ut = pred[s][n];
        const Eigen::VectorXd diff = u - ut;
        out.e_l2 += detail::m_norm(basis, diff) / detail::m_norm(basis, u);
        out.acc2 += diff.norm() / u.norm();
        double acc1_sum = 0;
        long used = 0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            if (u(i) == 0.0) {
                ++out.acc1_excluded;
                continue;
            }
            acc1_sum += std::abs(diff(i) / u(i));
            ++used;
        }
        if (used > 0) {
            out.acc1 += acc1_sum / static_cast<double>(used);
            ++acc1_terms;
        }
        if (!have_net) continue;

        const double dt = opt.gamma * (truth.times[n] - truth.times[n - 1]);
        const Eigen::VectorXd bn = project(u, basis).beta;
        const Eigen::VectorXd bp = project(truth[s][n - 1], basis).beta;
        const Eigen::VectorXd r = (bn - bp) / dt + model.alpha(s) * basis.eigenvalues.cwiseProduct(bn);
        const JointState prev = project_state(pred.state(n - 1), basis);
        const Eigen::VectorXd g = forward(model.op(s), operator_input(prev, s));
        out.e_res += (g - r).norm() / r.norm();
        if (opt.truth) {
            const JointState cur = project_state(pred.state(n), basis);
            const Eigen::VectorXd learned = basis.modes * forward(model.op(s), operator_input(cur, s));
            Eigen::MatrixXd state(u.size(), 3);
            for (Species q : kAllSpecies) state.col(index_of(q)) = truth[q][n];
            const Eigen::VectorXd f = reaction_terms(*opt.truth, state).col(si);
            out.e_nonlinear += detail::m_norm(basis, learned - f) / detail::m_norm(basis, f);
        }
    }
    out.e_l2 /= count;
    out.acc2 = 1 - out.acc2 / count;
    out.acc1 = acc1_terms > 0 ? 1 - out.acc1 / static_cast<double>(acc1_terms) : Metrics::kAbsent;
    out.e_res = have_net ? out.e_res / count : Metrics::kAbsent;
    out.e_nonlinear = have_net && opt.truth ? out.e_nonlinear / count : Metrics::kAbsent;
    return out;
}

/// Cohort-level metrics: per-patient evaluation averaged uniformly.
inline Metrics evaluate_cohort(Target target, const std::vector<Trajectory>& preds, const std::vector<Trajectory>& truths,
                               const LenoModel& model, const EigenBasis& basis, const EvalOptions& opt = {}) {
    if (preds.size() != truths.size() || preds.empty()) throw input_error("evaluate_cohort: cohort size mismatch");
    std::vector<Metrics> per;
    for (std::size_t m = 0; m < preds.size(); ++m) per.push_back(evaluate(target, preds[m], truths[m], model, basis, opt));
    return average_metrics(per);
}

/// Training-window length under the first-ceil(fraction * T) rule.
inline std::size_t training_points(std::size_t total, double fraction) {
    const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-12));
    return std::min(total, std::max<std::size_t>(n, 2));
}

} // namespace leno
