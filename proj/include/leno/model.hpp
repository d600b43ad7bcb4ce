#pragma once
// The learned A-tau-N-C system: spectral operator networks G1..G3, the
// cognitive-rate network N4 and per-species diffusivities.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"
#include "mlp.hpp"
#include "synth.hpp"

namespace leno {

// Hidden-layer layouts: `graph` is the 128-128 family used on brain networks,
// `mesh` the deeper 100-100-100 family used on 2D meshes.
enum class Architecture { graph, mesh };

inline const char* architecture_name(Architecture a) { return a == Architecture::graph ? "graph" : "mesh"; }

inline Architecture architecture_from_name(const std::string& name) {
    if (name == "graph") return Architecture::graph;
    if (name == "mesh") return Architecture::mesh;
    throw input_error("unknown architecture '" + name + "' (expected graph or mesh)");
}

inline std::vector<int> hidden_layers(Architecture a) {
    return a == Architecture::graph ? std::vector<int>{128, 128} : std::vector<int>{100, 100, 100};
}

/// Layer sizes of G_{k}: input k*P (A, then tau, then N coefficients), output P.
inline std::vector<int> operator_layout(Architecture a, int modes, int input_blocks) {
    std::vector<int> sizes{input_blocks * modes};
    for (int h : hidden_layers(a)) sizes.push_back(h);
    sizes.push_back(modes);
    return sizes;
}

inline std::vector<int> cognitive_layout(Architecture a, int modes) {
    std::vector<int> sizes{modes};
    for (int h : hidden_layers(a)) sizes.push_back(h);
    sizes.push_back(1);
    return sizes;
}

struct LenoModel {
    int modes = 0;
    Architecture architecture = Architecture::graph;
    std::uint64_t domain_hash = 0;
    std::uint64_t basis_id = 0;
    std::array<MlpParams, 3> operators;  // G1(A), G2(A,tau), G3(A,tau,N)
    MlpParams cognitive;                 // N4(N)
    std::array<double, 3> log_alpha{0.0, 0.0, 0.0};
    std::array<bool, 3> trained{false, false, false};
    bool cognitive_trained = false;

    double alpha(Species s) const { return std::exp(log_alpha[index_of(s)]); }
    const MlpParams& op(Species s) const { return operators[index_of(s)]; }
    bool fully_trained() const { return trained[0] && trained[1] && trained[2]; }
};

inline LenoModel make_model(const EigenBasis& basis, Architecture arch) {
    LenoModel m;
    m.modes = basis.size();
    m.architecture = arch;
    m.domain_hash = basis.domain_hash;
    m.basis_id = basis.id;
    return m;
}

inline void check_compatible(const LenoModel& model, const EigenBasis& basis) {
    if (model.domain_hash != basis.domain_hash || model.modes != basis.size() || model.basis_id != basis.id) {
        throw input_error("basis mismatch: model was trained with P=" + std::to_string(model.modes) +
                          " on a different domain/basis (requested basis has P=" + std::to_string(basis.size()) + ")");
    }
}

/// Spectral state of every species plus the scalar cognitive score.
struct JointState {
    std::array<Eigen::VectorXd, 3> beta;
    double cognitive = 0.0;
};

struct StepDoses {
    double d_A = 0.0;
    double d_tau = 0.0;
};

/// Forward caches recorded by joint_rollout for reverse-mode passes.
struct RolloutTape {
    std::vector<std::array<ForwardCache, 3>> operators;
    std::vector<ForwardCache> cognitive;
};

/// Input vector of G_s: coefficients of A..s stacked in cascade order.
inline Eigen::VectorXd operator_input(const JointState& st, Species s) {
    const int k = index_of(s) + 1;
    const Eigen::Index p = st.beta[0].size();
    Eigen::VectorXd x(k * p);
    for (int j = 0; j < k; ++j) x.segment(j * p, p) = st.beta[j];
    return x;
}

/// Simultaneous semi-implicit rollout of all trained species. Step n uses
/// interval dts[n-1] and, when given, clearance rates doses[n-1]; the drive is
/// G_s(previous state) minus the clearance term. C follows explicit Euler with
/// rate N4(beta_N) when the cognitive network is trained, else stays fixed.
inline std::vector<JointState> joint_rollout(const LenoModel& model, const Eigen::VectorXd& eigenvalues,
                                             const JointState& init, const std::vector<double>& dts,
                                             std::span<const StepDoses> doses = {}, RolloutTape* tape = nullptr) {
    if (!model.fully_trained()) throw stage_error("rollout requires trained A, tau and N operators");
    if (!doses.empty() && doses.size() != dts.size()) throw input_error("rollout: one dose pair per step required");
    if (tape) {
        tape->operators.assign(dts.size(), {});
        tape->cognitive.assign(dts.size(), {});
    }
    std::vector<JointState> states;
    states.reserve(dts.size() + 1);
    states.push_back(init);
    for (std::size_t n = 0; n < dts.size(); ++n) {
        const double dt = dts[n];
        if (!(dt > 0)) throw input_error("rollout: time intervals must be positive");
        const JointState& prev = states.back();
        JointState next;
        for (Species s : kAllSpecies) {
            const int si = index_of(s);
            ForwardCache* cache = tape ? &tape->operators[n][si] : nullptr;
            Eigen::VectorXd drive = forward_batch(model.op(s), operator_input(prev, s), cache).col(0);
            if (!doses.empty()) {
                const double d = s == Species::A ? doses[n].d_A : s == Species::tau ? doses[n].d_tau : 0.0;
                if (d != 0.0) drive -= d * prev.beta[si];
            }
            next.beta[si] = rollout_step(prev.beta[si], dt, model.alpha(s), eigenvalues, drive);
        }
        next.cognitive = prev.cognitive;
        if (model.cognitive_trained) {
            ForwardCache* cache = tape ? &tape->cognitive[n] : nullptr;
            next.cognitive += dt * forward_batch(model.cognitive, Eigen::MatrixXd(prev.beta[2]), cache)(0, 0);
        }
        states.push_back(std::move(next));
    }
    return states;
}

inline JointState project_state(const FieldState& fields, const EigenBasis& basis) {
    JointState st;
    for (Species s : kAllSpecies) st.beta[index_of(s)] = project(fields[s], basis).beta;
    st.cognitive = fields.cognitive;
    return st;
}

inline Trajectory states_to_trajectory(const std::vector<JointState>& states, const std::vector<double>& times,
                                       const EigenBasis& basis, bool with_cognitive) {
    Trajectory traj;
    traj.times = times;
    for (const auto& st : states) {
        for (Species s : kAllSpecies) traj[s].push_back(basis.modes * st.beta[index_of(s)]);
        if (with_cognitive) traj.cognitive.push_back(st.cognitive);
    }
    return traj;
}

struct PatientTimeScale {
    double gamma = 1.0;   // rate multiplier on the model clock, s = gamma t + offset
    double offset = 0.0;  // shifts the absolute clock only (dosing age); the dynamics are autonomous
};

/// Forward prediction from an initial nodal state at times[0]. With a
/// timescale, every interval is multiplied by gamma.
inline Trajectory predict(const LenoModel& model, const EigenBasis& basis, const FieldState& init,
                          const std::vector<double>& times, const PatientTimeScale* timescale = nullptr) {
    check_compatible(model, basis);
    if (times.empty()) throw input_error("predict: empty time grid");
    std::vector<double> dts;
    for (std::size_t n = 1; n < times.size(); ++n) {
        const double gap = times[n] - times[n - 1];
        if (!(gap > 0)) throw input_error("predict: times must be strictly increasing");
        dts.push_back(timescale ? timescale->gamma * gap : gap);
    }
    if (timescale && !(timescale->gamma > 0)) throw input_error("predict: timescale gamma must be positive");
    const auto states = joint_rollout(model, basis.eigenvalues, project_state(init, basis), dts);
    return states_to_trajectory(states, times, basis, model.cognitive_trained);
}

} // namespace leno
