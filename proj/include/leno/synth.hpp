#pragma once
// Ground-truth A-tau-N-C reaction-diffusion generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenbasis.hpp"
#include "error.hpp"
#include "spectral.hpp"

namespace leno {

enum class Species : int { A = 0, tau = 1, N = 2 };
inline constexpr std::array<Species, 3> kAllSpecies{Species::A, Species::tau, Species::N};

inline constexpr int index_of(Species s) { return static_cast<int>(s); }

inline const char* species_name(Species s) {
    switch (s) {
        case Species::A: return "A";
        case Species::tau: return "tau";
        case Species::N: return "N";
    }
    return "?";
}

inline Species species_from_name(const std::string& name) {
    for (Species s : kAllSpecies)
        if (name == species_name(s)) return s;
    throw input_error("unknown species '" + name + "' (expected A, tau or N)");
}

struct RDParams {
    double alpha_A = 1.0, alpha_tau = 1.0, alpha_N = 1.0;
    double lambda_A = 0.4, lambda_tau = 0.2, lambda_N = 0.2, lambda_C = 0.2;
    double K_A = 1.0, K_tau = 1.0, K_N = 1.0, K_C = 1.0;
    double lambda_tauA = 0.1, lambda_Ntau = 0.1, lambda_CN = 0.005;

    std::array<double, 3> diffusivities() const { return {alpha_A, alpha_tau, alpha_N}; }
    std::array<double, 3> capacities() const { return {K_A, K_tau, K_N}; }

    void validate() const {
        for (double k : {K_A, K_tau, K_N, K_C})
            if (!(k > 0) || !std::isfinite(k)) throw input_error("RDParams: carrying capacities must be positive");
        for (double a : {alpha_A, alpha_tau, alpha_N})
            if (!(a >= 0) || !std::isfinite(a)) throw input_error("RDParams: diffusivities must be nonnegative");
        for (double r : {lambda_A, lambda_tau, lambda_N, lambda_C, lambda_tauA, lambda_Ntau, lambda_CN})
            if (!std::isfinite(r)) throw input_error("RDParams: rates must be finite");
    }
};

struct FieldState {
    std::array<Eigen::VectorXd, 3> fields;  // nodal A, tau, N
    double cognitive = 0.0;

    const Eigen::VectorXd& operator[](Species s) const { return fields[index_of(s)]; }
    Eigen::VectorXd& operator[](Species s) { return fields[index_of(s)]; }
};

struct Trajectory {
    std::string patient_id;
    std::vector<double> times;
    std::array<std::vector<Eigen::VectorXd>, 3> fields;
    std::vector<double> cognitive;  // empty when C is not observed

    std::size_t size() const { return times.size(); }
    bool has_cognitive() const { return !cognitive.empty(); }
    const std::vector<Eigen::VectorXd>& operator[](Species s) const { return fields[index_of(s)]; }
    std::vector<Eigen::VectorXd>& operator[](Species s) { return fields[index_of(s)]; }

    FieldState state(std::size_t n) const {
        FieldState st;
        for (Species s : kAllSpecies) st[s] = (*this)[s][n];
        st.cognitive = has_cognitive() ? cognitive[n] : 0.0;
        return st;
    }

    /// Time points [begin, end).
    Trajectory slice(std::size_t begin, std::size_t end) const {
        Trajectory out;
        out.patient_id = patient_id;
        out.times.assign(times.begin() + begin, times.begin() + end);
        for (Species s : kAllSpecies)
            out[s].assign((*this)[s].begin() + begin, (*this)[s].begin() + end);
        if (has_cognitive()) out.cognitive.assign(cognitive.begin() + begin, cognitive.begin() + end);
        return out;
    }

    void validate(int num_nodes) const {
        if (times.empty()) throw input_error("trajectory " + patient_id + ": no time points");
        for (std::size_t n = 1; n < times.size(); ++n)
            if (!(times[n] > times[n - 1])) throw input_error("trajectory " + patient_id + ": times not increasing");
        for (Species s : kAllSpecies) {
            if ((*this)[s].size() != times.size())
                throw input_error("trajectory " + patient_id + ": species " + species_name(s) + " length mismatch");
            for (const auto& f : (*this)[s])
                if (f.size() != num_nodes)
                    throw input_error("trajectory " + patient_id + ": field size does not match node count");
        }
        if (has_cognitive() && cognitive.size() != times.size())
            throw input_error("trajectory " + patient_id + ": cognitive series length mismatch");
    }
};

/// Ground-truth nodal reaction terms F(u) for the three fields (columns of a
/// V x 3 block).
inline Eigen::MatrixXd reaction_terms(const RDParams& p, const Eigen::MatrixXd& u) {
    Eigen::MatrixXd f(u.rows(), 3);
    const auto a = u.col(0).array();
    const auto tau = u.col(1).array();
    const auto n = u.col(2).array();
    f.col(0) = (p.lambda_A * a * (p.K_A - a)).matrix();
    f.col(1) = (p.lambda_tauA * a + p.lambda_tau * tau * (p.K_tau - tau)).matrix();
    f.col(2) = (p.lambda_Ntau * tau + p.lambda_N * n * (p.K_N - n)).matrix();
    return f;
}

inline double cognitive_rate(const RDParams& p, double integral_n, double c) {
    return p.lambda_CN * integral_n + p.lambda_C * c * (p.K_C - c);
}

struct SimOptions {
    double inner_dt = 1e-3;
    // constant linear clearance rates (-d u) on A and tau; zero for the untreated system
    double clearance_A = 0.0;
    double clearance_tau = 0.0;
};

/// Spectral semi-implicit integration (diffusion implicit per mode, reactions
/// explicit) sampled at `times`; the initial state is taken at times[0].
inline Trajectory simulate(const RDParams& params, const EigenBasis& basis, const FieldState& init,
                           const std::vector<double>& times, const SimOptions& opt = {}) {
    params.validate();
    const int nv = basis.num_nodes();
    if (times.empty()) throw input_error("simulate: empty output grid");
    if (!(opt.inner_dt > 0)) throw input_error("simulate: inner_dt must be positive");
    for (std::size_t n = 1; n < times.size(); ++n) {
        const double gap = times[n] - times[n - 1];
        if (!(gap > 0)) throw input_error("simulate: output times must be strictly increasing");
        if (opt.inner_dt > gap * (1 + 1e-12)) throw input_error("simulate: inner_dt exceeds output spacing");
    }
    Eigen::MatrixXd u(nv, 3);
    for (Species s : kAllSpecies) {
        if (init[s].size() != nv) throw input_error("simulate: initial field size does not match basis");
        if ((init[s].array() < 0).any()) throw input_error("simulate: initial fields must be nonnegative");
        u.col(index_of(s)) = init[s];
    }
    const auto alphas = params.diffusivities();
    const double blowup = 10.0 * std::max({params.K_A, params.K_tau, params.K_N, params.K_C});

    Eigen::MatrixXd beta = basis.weighted_modes.transpose() * u;
    u = basis.modes * beta;
    double c = init.cognitive;

    Trajectory traj;
    traj.times = times;
    auto record = [&] {
        for (Species s : kAllSpecies) traj[s].push_back(u.col(index_of(s)));
        traj.cognitive.push_back(c);
    };
    record();

    double t = times.front();
    for (std::size_t n = 1; n < times.size(); ++n) {
        const double gap = times[n] - times[n - 1];
        const auto steps = static_cast<long>(std::ceil(gap / opt.inner_dt - 1e-9));
        const double h = gap / static_cast<double>(steps);
        for (long k = 0; k < steps; ++k) {
            Eigen::MatrixXd f = reaction_terms(params, u);
            f.col(0) -= opt.clearance_A * u.col(0);
            f.col(1) -= opt.clearance_tau * u.col(1);
            const double integral_n = basis.integral_weights.dot(u.col(2));
            const Eigen::MatrixXd drive = basis.weighted_modes.transpose() * f;
            for (int s = 0; s < 3; ++s) {
                beta.col(s) = ((beta.col(s) + h * drive.col(s)).array() /
                               (1.0 + h * alphas[s] * basis.eigenvalues.array()))
                                  .matrix();
            }
            c += h * cognitive_rate(params, integral_n, c);
            u = basis.modes * beta;
            t = times[n - 1] + (k + 1) * h;

            if (!u.allFinite() || u.cwiseAbs().maxCoeff() > blowup || !std::isfinite(c) || std::abs(c) > blowup) {
                throw numerical_error("simulate: blow-up detected at t = " + std::to_string(t));
            }
            // only negativity is clipped: the tau and N sources push their
            // equilibria above the logistic capacity
            if ((u.array() < 0.0).any()) {
                u = u.cwiseMax(0.0);
                beta = basis.weighted_modes.transpose() * u;
            }
        }
        record();
    }
    return traj;
}

struct InitialConditionOptions {
    int cutoff = 8;                 // number of leading modes mixed into each field
    double low = 0.05;                        // lower bound as a fraction of the carrying capacity
    std::array<double, 3> high{0.95, 0.95, 0.95};  // per-species upper bounds, same units
    double c0 = -1.0;               // initial cognitive score; negative means K_C
    bool c0_at_equilibrium = false;  // start C at the rest point of its ODE for the baseline N
};

/// Stable rest point of dC/dt = lambda_CN I + lambda_C C (K_C - C) for fixed I;
/// K_C when the logistic term vanishes or no real root exists.
inline double cognitive_equilibrium(const RDParams& p, double integral_n) {
    if (p.lambda_C == 0.0) return p.K_C;
    const double disc = p.K_C * p.K_C + 4.0 * p.lambda_CN * integral_n / p.lambda_C;
    if (disc < 0) return p.K_C;
    return 0.5 * (p.K_C + std::sqrt(disc));
}

/// Seeded low-mode random fields, affinely mapped into [low*K, high*K].
inline FieldState gen_initial_conditions(const EigenBasis& basis, std::uint64_t seed, const RDParams& params = {},
                                         const InitialConditionOptions& opt = {}) {
    if (opt.cutoff < 1 || opt.cutoff > basis.size()) {
        throw input_error("gen_initial_conditions: mode cutoff must lie in [1, P]");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    const auto caps = params.capacities();
    FieldState st;
    for (Species s : kAllSpecies) {
        const double k = caps[index_of(s)];
        const double top = opt.high[index_of(s)];
        if (!(top >= opt.low + 0.1)) throw input_error("gen_initial_conditions: upper bound must exceed low + 0.1");
        // a random band of width >= 0.1 anywhere inside [low, high], so that
        // cohorts include nearly saturated as well as nearly healthy patients
        const double lo = opt.low + unif(rng) * (top - opt.low - 0.1);
        const double hi = lo + 0.1 + unif(rng) * (top - lo - 0.1);
        Eigen::VectorXd field = Eigen::VectorXd::Zero(basis.num_nodes());
        for (int i = 1; i < opt.cutoff; ++i) field += normal(rng) / std::sqrt(double(i)) * basis.modes.col(i);
        const double fmin = field.minCoeff(), fmax = field.maxCoeff();
        if (opt.cutoff == 1 || fmax - fmin < 1e-12) {
            field.setConstant(k * (opt.low + unif(rng) * (top - opt.low)));
        } else {
            field = (k * lo + k * (hi - lo) * (field.array() - fmin) / (fmax - fmin)).matrix();
        }
        st[s] = field.cwiseMax(opt.low * k).cwiseMin(top * k);
    }
    if (opt.c0_at_equilibrium) st.cognitive = cognitive_equilibrium(params, basis.integral_weights.dot(st[Species::N]));
    else st.cognitive = opt.c0 < 0 ? params.K_C : opt.c0;
    return st;
}

struct CohortOptions {
    SimOptions sim;
    InitialConditionOptions ic;
    std::string id_prefix = "P";
    // patients enter observation after a seeded onset delay drawn uniformly
    // from [0, max_onset] (model time), i.e. at different disease stages
    double max_onset = 0.0;
};

/// Patient m evolves on the rescaled clock s = gamma_m * t and is sampled on
/// the shared grid `times`.
inline std::vector<Trajectory> make_cohort(const RDParams& params, const EigenBasis& basis,
                                           const std::vector<std::uint64_t>& seeds, const std::vector<double>& gammas,
                                           const std::vector<double>& times, const CohortOptions& opt = {}) {
    if (seeds.empty()) throw input_error("make_cohort: need at least one patient");
    if (gammas.size() != seeds.size()) throw input_error("make_cohort: one timescale per patient required");
    std::vector<Trajectory> cohort;
    for (std::size_t m = 0; m < seeds.size(); ++m) {
        const double gamma = gammas[m];
        if (!(gamma > 0) || !std::isfinite(gamma)) throw input_error("make_cohort: timescales must be positive");
        const FieldState init = gen_initial_conditions(basis, seeds[m], params, opt.ic);
        double onset = 0.0;
        if (opt.max_onset > 0) {
            std::mt19937_64 rng(seeds[m] ^ 0x5bd1e995ULL);
            onset = std::uniform_real_distribution<double>(0.0, opt.max_onset)(rng);
        }
        std::vector<double> clock;
        if (onset > 0) clock.push_back(0.0);
        for (double t : times) clock.push_back(onset + gamma * (t - times.front()));
        Trajectory traj = simulate(params, basis, init, clock, opt.sim);
        if (onset > 0) traj = traj.slice(1, traj.size());
        traj.times = times;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%03zu", opt.id_prefix.c_str(), m);
        traj.patient_id = buf;
        cohort.push_back(std::move(traj));
    }
    return cohort;
}

/// Evenly spaced grid start, start+step, ..., stop (inclusive up to rounding).
inline std::vector<double> uniform_grid(double start, double stop, double step) {
    if (!(step > 0) || stop < start) throw input_error("uniform_grid: bad range");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    std::vector<double> out(count + 1);
    for (long i = 0; i <= count; ++i) out[i] = start + step * static_cast<double>(i);
    return out;
}

} // namespace leno
