#pragma once
// Sequential training of the operator networks (A, then tau, then N, then C)
// and patient-specific time-scale fitting with frozen weights.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "mlp.hpp"
#include "model.hpp"
#include "spectral.hpp"
#include "synth.hpp"

namespace leno {

enum class RolloutMode { full, teacher_forced };

inline const char* rollout_mode_name(RolloutMode m) { return m == RolloutMode::full ? "full" : "teacher_forced"; }

inline RolloutMode rollout_mode_from_name(const std::string& name) {
    if (name == "full") return RolloutMode::full;
    if (name == "teacher_forced") return RolloutMode::teacher_forced;
    throw input_error("unknown rollout mode '" + name + "' (expected full or teacher_forced)");
}

struct TrainConfig {
    int epochs = 5000;
    LrSchedule schedule;
    std::uint64_t seed = 0;
    double weight_data = 1.0;
    double weight_residual = 1.0;
    RolloutMode mode = RolloutMode::full;
    double train_fraction = 0.6;
    double alpha_init = 1.0;
    int batch_size = 0;  // patients per Adam update; 0 uses the whole cohort

    void validate() const {
        if (batch_size < 0) throw input_error("train: batch_size must be nonnegative");
        if (epochs < 1) throw input_error("train: epochs must be at least 1");
        if (!(weight_data >= 0) || !(weight_residual >= 0)) throw input_error("train: loss weights must be nonnegative");
        if (!(train_fraction > 0 && train_fraction <= 1)) throw input_error("train: train_fraction must lie in (0, 1]");
        if (!(alpha_init > 0) || !std::isfinite(alpha_init)) throw input_error("train: alpha_init must be positive");
        if (!(schedule.base_lr > 0) || schedule.decay_every < 1) throw input_error("train: bad learning-rate schedule");
    }
};

struct TrainResult {
    Metrics metrics;                // over each patient's training window, averaged
    std::vector<double> loss_trace;  // combined loss before each epoch's update
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Cohort training data for one target arranged step-major: step n holds one
// column per patient. Patients with shorter windows are padded with dt = 0,
// which leaves their state unchanged and contributes no loss.
struct StepBatch {
    std::vector<Eigen::RowVectorXd> dt;       // 1 x M per step
    std::vector<Eigen::MatrixXd> input;       // data inputs at n-1, (k P) x M
    std::vector<Eigen::MatrixXd> target;      // data coefficients at n, P x M
    std::vector<Eigen::RowVectorXd> weight;   // 1/(steps_m * M) where active, else 0
    Eigen::MatrixXd initial;                  // own-species coefficients at t_0, P x M
    std::vector<std::size_t> window;          // training points per patient
};

inline std::vector<std::size_t> training_windows(const std::vector<Trajectory>& cohort, double fraction) {
    std::vector<std::size_t> out;
    for (const auto& tr : cohort) {
        if (tr.size() < 3) throw input_error("train: patient " + tr.patient_id + " has fewer than 3 time points");
        out.push_back(training_points(tr.size(), fraction));
    }
    return out;
}

inline StepBatch make_species_batch(const std::vector<Trajectory>& cohort, const EigenBasis& basis, Species s,
                                    double fraction) {
    StepBatch b;
    b.window = training_windows(cohort, fraction);
    const Eigen::Index m = static_cast<Eigen::Index>(cohort.size());
    const int p = basis.size();
    const int blocks = index_of(s) + 1;
    std::size_t steps = 0;
    for (auto w : b.window) steps = std::max(steps, w - 1);

    std::vector<std::array<Eigen::MatrixXd, 3>> coeffs;  // per patient, P x window
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        cohort[j].validate(basis.num_nodes());
        std::array<Eigen::MatrixXd, 3> c;
        for (int q = 0; q < blocks; ++q) {
            c[q].resize(p, static_cast<Eigen::Index>(b.window[j]));
            for (std::size_t n = 0; n < b.window[j]; ++n)
                c[q].col(static_cast<Eigen::Index>(n)) = project(cohort[j].fields[q][n], basis).beta;
        }
        coeffs.push_back(std::move(c));
    }
    b.initial.resize(p, m);
    for (Eigen::Index j = 0; j < m; ++j) b.initial.col(j) = coeffs[j][index_of(s)].col(0);
    for (std::size_t n = 1; n <= steps; ++n) {
        Eigen::RowVectorXd dt = Eigen::RowVectorXd::Zero(m), w = Eigen::RowVectorXd::Zero(m);
        Eigen::MatrixXd in = Eigen::MatrixXd::Zero(blocks * p, m), tg = Eigen::MatrixXd::Zero(p, m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::size_t win = b.window[j];
            // inactive columns repeat the last active point so inputs stay in range
            const auto prev = static_cast<Eigen::Index>(std::min(n - 1, win - 1));
            const auto cur = static_cast<Eigen::Index>(std::min(n, win - 1));
            for (int q = 0; q < blocks; ++q) in.block(q * p, j, p, 1) = coeffs[j][q].col(prev);
            tg.col(j) = coeffs[j][index_of(s)].col(cur);
            if (n < win) {
                dt(j) = cohort[j].times[n] - cohort[j].times[n - 1];
                w(j) = 1.0 / (static_cast<double>(win - 1) * static_cast<double>(m));
            }
        }
        b.dt.push_back(dt);
        b.input.push_back(std::move(in));
        b.target.push_back(std::move(tg));
        b.weight.push_back(w);
    }
    return b;
}

// Restriction to a subset of patients, reweighted to a mean over the subset.
inline StepBatch select_columns(const StepBatch& b, const std::vector<Eigen::Index>& cols) {
    const double scale = static_cast<double>(b.initial.cols()) / static_cast<double>(cols.size());
    StepBatch out;
    out.initial = b.initial(Eigen::all, cols);
    for (std::size_t n = 0; n < b.dt.size(); ++n) {
        out.dt.push_back(b.dt[n](cols));
        out.input.push_back(b.input[n](Eigen::all, cols));
        out.target.push_back(b.target[n](Eigen::all, cols));
        out.weight.push_back(scale * b.weight[n](cols));
    }
    for (auto c : cols) out.window.push_back(b.window[static_cast<std::size_t>(c)]);
    return out;
}

// Adds d/dx of w * ||x - y|| / ||y|| into adj and returns the loss term.
inline double relative_error_term(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                                  double w, Eigen::Ref<Eigen::VectorXd> adj) {
    const double ny = y.norm();
    if (!(ny > 0)) throw input_error("train: a data step has zero norm");
    const Eigen::VectorXd diff = x - y;
    const double nd = diff.norm();
    if (nd > 0) adj += (w / (nd * ny)) * diff;
    return w * nd / ny;
}

struct Evaluation {
    double loss = 0;
    Eigen::VectorXd grad;  // network parameters then log alpha
};

// Combined loss and gradient for one species.
inline Evaluation species_loss(const MlpParams& net, double log_alpha, const StepBatch& b, const Eigen::VectorXd& lambda,
                               const TrainConfig& cfg, bool want_grad) {
    const double alpha = std::exp(log_alpha);
    const std::size_t steps = b.dt.size();
    const Eigen::Index p = lambda.size();
    const Eigen::Index m = b.initial.cols();

    MlpParams g = net.zeros_like();
    double dlog_alpha = 0;
    double loss = 0;

    if (cfg.weight_data > 0) {
        std::vector<ForwardCache> caches(steps);
        std::vector<Eigen::MatrixXd> states(steps + 1), denom(steps);
        states[0] = b.initial;
        for (std::size_t n = 0; n < steps; ++n) {
            Eigen::MatrixXd x = b.input[n];
            if (cfg.mode == RolloutMode::full) x.bottomRows(p) = states[n];
            const Eigen::MatrixXd out = forward_batch(net, x, want_grad ? &caches[n] : nullptr);
            denom[n] = (1.0 + alpha * (lambda * b.dt[n]).array()).matrix();
            const Eigen::MatrixXd& base = cfg.mode == RolloutMode::full ? states[n] : Eigen::MatrixXd(x.bottomRows(p));
            states[n + 1] = ((base + out * b.dt[n].asDiagonal()).array() / denom[n].array()).matrix();
        }
        Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(p, m);
        for (std::size_t n = steps; n-- > 0;) {
            if (cfg.mode == RolloutMode::teacher_forced) adj.setZero();
            for (Eigen::Index j = 0; j < m; ++j) {
                const double w = cfg.weight_data * b.weight[n](j);
                if (w == 0) continue;
                Eigen::VectorXd a = Eigen::VectorXd::Zero(p);
                loss += relative_error_term(states[n + 1].col(j), b.target[n].col(j), w, a);
                adj.col(j) += a;
            }
            if (!want_grad) continue;
            const Eigen::MatrixXd q = (adj.array() / denom[n].array()).matrix();
            dlog_alpha -= alpha * (adj.array() * states[n + 1].array() * (lambda * b.dt[n]).array() /
                                   denom[n].array()).sum();
            const Eigen::MatrixXd dx = backward_batch(net, caches[n], q * b.dt[n].asDiagonal(), &g);
            if (cfg.mode == RolloutMode::full) adj = q + dx.bottomRows(p);
        }
    }

    if (cfg.weight_residual > 0) {
        for (std::size_t n = 0; n < steps; ++n) {
            ForwardCache cache;
            const Eigen::MatrixXd out = forward_batch(net, b.input[n], want_grad ? &cache : nullptr);
            const Eigen::MatrixXd prev = b.input[n].bottomRows(p);
            Eigen::MatrixXd adj_out = Eigen::MatrixXd::Zero(p, m);
            for (Eigen::Index j = 0; j < m; ++j) {
                const double w = cfg.weight_residual * b.weight[n](j);
                if (w == 0) continue;
                const Eigen::VectorXd lam_beta = lambda.cwiseProduct(b.target[n].col(j));
                const Eigen::VectorXd r = (b.target[n].col(j) - prev.col(j)) / b.dt[n](j) + alpha * lam_beta;
                const double nr = r.norm();
                if (!(nr > 0)) throw input_error("train: a residual step has zero norm");
                const Eigen::VectorXd diff = r - out.col(j);
                const double nd = diff.norm();
                loss += w * nd / nr;
                if (!want_grad || nd == 0) continue;
                adj_out.col(j) = -(w / (nd * nr)) * diff;
                // d/dR of ||R - G|| / ||R||, chained through R's alpha dependence
                const Eigen::VectorXd dr = (w / (nd * nr)) * diff - (w * nd / (nr * nr * nr)) * r;
                dlog_alpha += alpha * dr.dot(lam_beta);
            }
            if (want_grad) backward_batch(net, cache, adj_out, &g);
        }
    }

    Evaluation e;
    e.loss = loss;
    if (want_grad) {
        const Eigen::VectorXd flat = flatten(g);
        e.grad.resize(flat.size() + 1);
        e.grad << flat, dlog_alpha;
    }
    return e;
}

// Adam over network parameters plus one trailing scalar. Each epoch visits
// the patients once, in seeded random minibatches when cfg.batch_size is set;
// the trace holds the patient-weighted mean of the minibatch losses.
template <typename LossFn>
std::vector<double> run_adam(MlpParams& net, double* scalar, const TrainConfig& cfg, const std::string& what,
                             Eigen::Index patients, std::uint64_t tag, LossFn&& loss_fn) {
    const Eigen::Index np = net.num_parameters();
    Eigen::VectorXd x(np + (scalar ? 1 : 0));
    x.head(np) = flatten(net);
    if (scalar) x(np) = *scalar;
    AdamState state(x.size());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(patients));
    for (Eigen::Index j = 0; j < patients; ++j) order[static_cast<std::size_t>(j)] = j;
    const Eigen::Index bs = cfg.batch_size == 0 ? patients : std::min<Eigen::Index>(cfg.batch_size, patients);
    std::mt19937_64 rng(mix_seed(cfg.seed, 1000 + tag));
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (bs < patients) std::shuffle(order.begin(), order.end(), rng);
        const double lr = lr_at(cfg.schedule, epoch);
        double epoch_loss = 0;
        for (Eigen::Index start = 0; start < patients; start += bs) {
            const auto first = order.begin() + start;
            const std::vector<Eigen::Index> cols(first, first + std::min(bs, patients - start));
            unflatten(x.head(np), net);
            if (scalar) *scalar = x(np);
            Evaluation e = loss_fn(net, scalar ? *scalar : 0.0, cols);
            if (!std::isfinite(e.loss) || !e.grad.allFinite()) {
                throw numerical_error("training " + what + " diverged at epoch " + std::to_string(epoch));
            }
            epoch_loss += e.loss * static_cast<double>(cols.size()) / static_cast<double>(patients);
            adam_update(x, scalar ? e.grad : Eigen::VectorXd(e.grad.head(np)), state, lr);
        }
        trace.push_back(epoch_loss);
    }
    unflatten(x.head(np), net);
    if (scalar) *scalar = x(np);
    if (!net.all_finite() || (scalar && !std::isfinite(*scalar))) {
        throw numerical_error("training " + what + " diverged at epoch " + std::to_string(cfg.epochs));
    }
    return trace;
}

// Nodal prediction of one species over a training window: rollout for the
// species itself, data for everything else.
inline Trajectory species_window_prediction(const Trajectory& truth, std::size_t window, Species s, const MlpParams& net,
                                            double alpha, const EigenBasis& basis, RolloutMode mode) {
    Trajectory pred = truth.slice(0, window);
    const int blocks = index_of(s) + 1;
    const int p = basis.size();
    Eigen::VectorXd own = project(truth[s][0], basis).beta;
    for (std::size_t n = 1; n < window; ++n) {
        Eigen::VectorXd x(blocks * p);
        for (int q = 0; q < blocks; ++q) x.segment(q * p, p) = project(truth.fields[q][n - 1], basis).beta;
        if (mode == RolloutMode::full) x.tail(p) = own;
        const double dt = truth.times[n] - truth.times[n - 1];
        own = rollout_step(x.tail(p).eval(), dt, alpha, basis.eigenvalues, forward(net, x));
        pred[s][n] = basis.modes * own;
    }
    return pred;
}

} // namespace detail

/// Trains G_s (and alpha_s) on the first part of every trajectory, leaving
/// every other network untouched. Upstream species must already be trained.
inline TrainResult train_species(Species s, const std::vector<Trajectory>& cohort, const EigenBasis& basis,
                                 LenoModel& model, const TrainConfig& cfg, const RDParams* truth = nullptr) {
    cfg.validate();
    check_compatible(model, basis);
    if (cohort.empty()) throw input_error("train: empty cohort");
    for (int q = 0; q < index_of(s); ++q) {
        if (!model.trained[q]) {
            throw stage_error(std::string("training ") + species_name(s) + " requires a trained " +
                              species_name(static_cast<Species>(q)) + " operator first");
        }
    }
    const detail::StepBatch batch = detail::make_species_batch(cohort, basis, s, cfg.train_fraction);
    MlpParams net = make_mlp(operator_layout(model.architecture, basis.size(), index_of(s) + 1), Activation::relu,
                             Activation::linear, detail::mix_seed(cfg.seed, static_cast<std::uint64_t>(index_of(s))));
    net.layers.back().weight.setZero();  // start from G = 0 rather than a random offset
    double log_alpha = std::log(cfg.alpha_init);
    TrainResult result;
    const auto patients = static_cast<Eigen::Index>(cohort.size());
    result.loss_trace = detail::run_adam(
        net, &log_alpha, cfg, species_name(s), patients, static_cast<std::uint64_t>(index_of(s)),
        [&](const MlpParams& n, double la, const std::vector<Eigen::Index>& cols) {
            if (static_cast<Eigen::Index>(cols.size()) == patients && cols.front() == 0 && cols.back() == patients - 1)
                return detail::species_loss(n, la, batch, basis.eigenvalues, cfg, true);
            return detail::species_loss(n, la, detail::select_columns(batch, cols), basis.eigenvalues, cfg, true);
        });

    const int si = index_of(s);
    model.operators[si] = std::move(net);
    model.log_alpha[si] = log_alpha;
    model.trained[si] = true;

    std::vector<Metrics> per;
    for (std::size_t j = 0; j < cohort.size(); ++j) {
        const Trajectory truth_w = cohort[j].slice(0, batch.window[j]);
        const Trajectory pred = detail::species_window_prediction(cohort[j], batch.window[j], s, model.op(s),
                                                                  model.alpha(s), basis, cfg.mode);
        EvalOptions opt;
        opt.truth = truth;
        per.push_back(evaluate(target_of(s), pred, truth_w, model, basis, opt));
    }
    result.metrics = average_metrics(per);
    return result;
}

/// Fits N4 so that C^n = C^{n-1} + dt N4(beta_N^{n-1}) follows the observed
/// cognitive scores. Requires the N operator to be trained.
inline TrainResult train_cognitive(const std::vector<Trajectory>& cohort, const EigenBasis& basis, LenoModel& model,
                                   const TrainConfig& cfg, const RDParams* truth = nullptr) {
    cfg.validate();
    check_compatible(model, basis);
    if (cohort.empty()) throw input_error("train: empty cohort");
    if (!model.trained[index_of(Species::N)]) throw stage_error("training C requires a trained N operator first");
    for (const auto& tr : cohort)
        if (!tr.has_cognitive()) throw input_error("train: patient " + tr.patient_id + " has no cognitive series");

    const auto windows = detail::training_windows(cohort, cfg.train_fraction);
    const Eigen::Index m = static_cast<Eigen::Index>(cohort.size());
    const int p = basis.size();
    std::size_t steps = 0;
    for (auto w : windows) steps = std::max(steps, w - 1);
    std::vector<Eigen::MatrixXd> inputs(steps);
    Eigen::MatrixXd dt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps), m);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps) + 1, m);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps), m);
    for (std::size_t n = 0; n < steps; ++n) inputs[n].resize(p, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& tr = cohort[j];
        tr.validate(basis.num_nodes());
        c(0, j) = tr.cognitive[0];
        for (std::size_t n = 0; n < steps; ++n) {
            const std::size_t prev = std::min(n, windows[j] - 1);
            inputs[n].col(j) = project(tr[Species::N][prev], basis).beta;
            const auto row = static_cast<Eigen::Index>(n);
            if (n + 1 < windows[j]) {
                dt(row, j) = tr.times[n + 1] - tr.times[n];
                c(row + 1, j) = tr.cognitive[n + 1];
                w(row, j) = 1.0 / (static_cast<double>(windows[j] - 1) * static_cast<double>(m));
                if (tr.cognitive[n + 1] == 0.0) throw input_error("train: cognitive score is exactly zero");
            } else {
                c(row + 1, j) = c(row, j);
            }
        }
    }
    auto loss_fn = [&](const MlpParams& net, double, const std::vector<Eigen::Index>& cols) {
        const auto k = static_cast<Eigen::Index>(cols.size());
        const double scale = static_cast<double>(m) / static_cast<double>(k);
        Eigen::MatrixXd x(p, static_cast<Eigen::Index>(steps) * k);
        for (std::size_t n = 0; n < steps; ++n) x.middleCols(static_cast<Eigen::Index>(n) * k, k) = inputs[n](Eigen::all, cols);
        ForwardCache cache;
        const Eigen::MatrixXd out = forward_batch(net, x, &cache);
        Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(1, out.cols());
        double loss = 0;
        for (Eigen::Index jj = 0; jj < k; ++jj) {
            const Eigen::Index j = cols[static_cast<std::size_t>(jj)];
            double ct = c(0, j);
            std::vector<double> dl_dc(steps, 0.0);
            for (std::size_t n = 0; n < steps; ++n) {
                const auto row = static_cast<Eigen::Index>(n);
                if (w(row, j) == 0) continue;
                const double g = out(0, row * k + jj);
                ct += dt(row, j) * g;
                if (cfg.weight_data > 0) {
                    const double diff = ct - c(row + 1, j);
                    const double wd = scale * cfg.weight_data * w(row, j) / std::abs(c(row + 1, j));
                    loss += wd * std::abs(diff);
                    dl_dc[n] = diff > 0 ? wd : diff < 0 ? -wd : 0.0;
                }
                if (cfg.weight_residual > 0) {
                    const double r = (c(row + 1, j) - c(row, j)) / dt(row, j);
                    // a flat step has no relative scale; it is matched in absolute terms
                    const double wr = scale * cfg.weight_residual * w(row, j) / (r != 0 ? std::abs(r) : 1.0);
                    loss += wr * std::abs(r - g);
                    adj(0, row * k + jj) += r - g > 0 ? -wr : r - g < 0 ? wr : 0.0;
                }
            }
            // C~^n depends on every earlier rate through dt_k
            double tail = 0;
            for (std::size_t n = steps; n-- > 0;) {
                tail += dl_dc[n];
                adj(0, static_cast<Eigen::Index>(n) * k + jj) += dt(static_cast<Eigen::Index>(n), j) * tail;
            }
        }
        detail::Evaluation e;
        e.loss = loss;
        MlpParams g = net.zeros_like();
        backward_batch(net, cache, adj, &g);
        e.grad = flatten(g);
        return e;
    };

    MlpParams net = make_mlp(cognitive_layout(model.architecture, p), Activation::relu, Activation::linear,
                             detail::mix_seed(cfg.seed, 3));
    net.layers.back().weight.setZero();
    TrainResult result;
    result.loss_trace = detail::run_adam(net, nullptr, cfg, "C", m, 3, loss_fn);
    model.cognitive = std::move(net);
    model.cognitive_trained = true;

    std::vector<Metrics> per;
    for (Eigen::Index j = 0; j < m; ++j) {
        const Trajectory truth_w = cohort[j].slice(0, windows[j]);
        Trajectory pred = truth_w;
        for (std::size_t n = 1; n < windows[j]; ++n) {
            const Eigen::VectorXd bn = project(truth_w[Species::N][n - 1], basis).beta;
            pred.cognitive[n] = pred.cognitive[n - 1] + (truth_w.times[n] - truth_w.times[n - 1]) *
                                                            forward(model.cognitive, bn)(0);
        }
        EvalOptions opt;
        opt.truth = truth;
        per.push_back(evaluate(Target::C, pred, truth_w, model, basis, opt));
    }
    result.metrics = average_metrics(per);
    return result;
}

struct TransferOptions {
    double train_fraction = 0.6;
    double gamma_min = 0.1, gamma_max = 10.0;
    int grid_points = 81;
    int refine_iterations = 80;
};

struct TransferResult {
    PatientTimeScale timescale;
    double loss = 0;  // summed L^D of A, tau and N over the fitting window
    std::array<std::optional<Metrics>, 4> fit_metrics;   // over the fitting window
    std::array<std::optional<Metrics>, 4> pred_metrics;  // over the remaining points, when any
};

namespace detail {

inline double timescale_loss(const LenoModel& model, const EigenBasis& basis, const Trajectory& tr, std::size_t window,
                             double gamma) {
    std::vector<double> dts;
    for (std::size_t n = 1; n < window; ++n) dts.push_back(gamma * (tr.times[n] - tr.times[n - 1]));
    std::vector<JointState> states;
    try {
        states = joint_rollout(model, basis.eigenvalues, project_state(tr.state(0), basis), dts);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::numerical) throw;
        return std::numeric_limits<double>::infinity();
    }
    double total = 0;
    for (Species s : kAllSpecies) {
        std::vector<Eigen::VectorXd> pred, data;
        for (std::size_t n = 1; n < window; ++n) {
            pred.push_back(states[n].beta[index_of(s)]);
            data.push_back(project(tr[s][n], basis).beta);
        }
        total += loss_data(pred, data);
    }
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Fits the rate multiplier gamma of a new patient by minimizing the data loss
/// of the frozen model's rescaled rollout: a log-spaced scan followed by a
/// golden-section refinement in log gamma.
inline TransferResult fit_timescale(const LenoModel& model, const EigenBasis& basis, const Trajectory& patient,
                                    const TransferOptions& opt = {}, const RDParams* truth = nullptr) {
    check_compatible(model, basis);
    if (!model.fully_trained()) throw stage_error("transfer requires a trained model");
    if (patient.size() < 3) throw input_error("transfer: patient " + patient.patient_id + " has fewer than 3 time points");
    if (!(opt.gamma_min > 0) || !(opt.gamma_max > opt.gamma_min) || opt.grid_points < 3)
        throw input_error("transfer: bad search range");
    patient.validate(basis.num_nodes());
    const std::size_t window = training_points(patient.size(), opt.train_fraction);

    auto f = [&](double log_gamma) { return detail::timescale_loss(model, basis, patient, window, std::exp(log_gamma)); };
    const double lo = std::log(opt.gamma_min), hi = std::log(opt.gamma_max);
    const double step = (hi - lo) / (opt.grid_points - 1);
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < opt.grid_points; ++i) {
        const double v = f(lo + step * i);
        if (v < best_val) best_val = v, best = i;
    }
    if (!std::isfinite(best_val)) throw numerical_error("transfer: every candidate timescale diverged");

    double a = lo + step * std::max(0, best - 1), b = lo + step * std::min(opt.grid_points - 1, best + 1);
    const double inv_phi = (std::sqrt(5.0) - 1) / 2;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < opt.refine_iterations; ++it) {
        if (f1 <= f2) {
            b = x2, x2 = x1, f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1, x1 = x2, f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    double log_gamma = lo + step * best;
    if (std::min(f1, f2) < best_val) {
        log_gamma = f1 <= f2 ? x1 : x2;
        best_val = std::min(f1, f2);
    }

    TransferResult out;
    out.timescale.gamma = std::exp(log_gamma);
    out.loss = best_val;
    const Trajectory pred = predict(model, basis, patient.state(0), patient.times, &out.timescale);
    EvalOptions opt_fit;
    opt_fit.last = window - 1;
    opt_fit.truth = truth;
    opt_fit.gamma = out.timescale.gamma;
    EvalOptions opt_pred = opt_fit;
    opt_pred.first = window;
    opt_pred.last = patient.size() - 1;
    for (Target t : kAllTargets) {
        if (t == Target::C && !(patient.has_cognitive() && model.cognitive_trained)) continue;
        const auto ti = static_cast<std::size_t>(t);
        out.fit_metrics[ti] = evaluate(t, pred, patient, model, basis, opt_fit);
        if (window < patient.size()) out.pred_metrics[ti] = evaluate(t, pred, patient, model, basis, opt_pred);
    }
    return out;
}

} // namespace leno
