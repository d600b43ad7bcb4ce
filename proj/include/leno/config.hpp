#pragma once
// Pipeline configuration: a JSON file with a closed schema. Relative paths
// resolve against the file's directory.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "hash.hpp"
#include "io.hpp"
#include "model.hpp"
#include "synth.hpp"
#include "train.hpp"
#include "treatment.hpp"

namespace leno {

struct CohortConfig {
    int patients = 20;
    std::uint64_t seed = 11;
    double start = 0, stop = 10, step = 0.5;
    double gamma = 1.0;
    double max_onset = 10;
    double ic_low = 0.05, ic_high = 0.5;
    int ic_cutoff = 8;
    double inner_dt = 1e-3;
};

struct TransferConfig {
    std::vector<double> gammas{0.5, 1.5, 2.0};
    int patients_per_gamma = 2;
    std::uint64_t seed = 500;
    TransferOptions options;
};

struct TreatConfig {
    int patient = 0;  // index into the cohort; its first state starts treatment
    TreatmentConfig treatment;

    TreatConfig() { treatment.horizon = 20.0; }
};

struct AnalysisConfig {
    int patient = 0;
    std::vector<double> stages{0.0, 0.5, 1.0};  // fractions of the patient's time span
    double threshold = 0.5;
};

struct PipelineConfig {
    std::filesystem::path mesh, graph;  // exactly one is set
    bool normalize_graph = false;
    int modes = 64;
    Architecture architecture = Architecture::mesh;
    bool train_A = true, train_tau = true, train_N = true, train_C = true;
    RDParams params;
    CohortConfig cohort;
    std::filesystem::path data;  // imported trajectories; empty means the simulate output
    TrainConfig train;
    TransferConfig transfer;
    TreatConfig treat;
    AnalysisConfig analysis;
    std::filesystem::path output = "out";
    std::uint64_t seed = 1;

    bool is_mesh() const { return !mesh.empty(); }
    bool species_enabled(Species s) const {
        return s == Species::A ? train_A : s == Species::tau ? train_tau : train_N;
    }
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw input_error("config: " + where + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items())
        if (!ok.count(item.key())) throw input_error("config: unknown key '" + where + "." + item.key() + "'");
}

template <typename T>
void read_key(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw input_error("config: '" + where + "." + key + "' has the wrong type");
    }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : std::filesystem::weakly_canonical(base / path);
}

} // namespace detail

/// Parses a config object; `base` anchors relative paths.
inline PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base) {
    using detail::check_keys;
    using detail::read_key;
    check_keys(j, {"domain", "modes", "architecture", "species", "params", "cohort", "data", "train", "transfer",
                   "treatment", "analysis", "output", "seed"},
               "");
    PipelineConfig c;
    if (!j.contains("domain")) throw input_error("config: 'domain' is required");
    const Json& d = j.at("domain");
    check_keys(d, {"mesh", "graph", "normalize"}, "domain");
    if (d.contains("mesh") == d.contains("graph")) throw input_error("config: domain needs exactly one of mesh or graph");
    std::string path;
    if (d.contains("mesh")) {
        read_key(d, "mesh", path, "domain");
        c.mesh = detail::resolve(base, path);
        c.architecture = Architecture::mesh;
        c.modes = 64;
    } else {
        read_key(d, "graph", path, "domain");
        c.graph = detail::resolve(base, path);
        c.architecture = Architecture::graph;
        c.modes = 48;
    }
    const auto& domain_file = c.is_mesh() ? c.mesh : c.graph;
    if (!std::filesystem::exists(domain_file)) throw input_error("config: domain file not found: " + domain_file.string());
    read_key(d, "normalize", c.normalize_graph, "domain");
    read_key(j, "modes", c.modes, "");
    if (j.contains("architecture")) {
        std::string a;
        read_key(j, "architecture", a, "");
        c.architecture = architecture_from_name(a);
    }
    if (j.contains("species")) {
        const Json& s = j.at("species");
        check_keys(s, {"A", "tau", "N", "C"}, "species");
        read_key(s, "A", c.train_A, "species");
        read_key(s, "tau", c.train_tau, "species");
        read_key(s, "N", c.train_N, "species");
        read_key(s, "C", c.train_C, "species");
        if ((c.train_tau && !c.train_A) || (c.train_N && !c.train_tau))
            throw input_error("config: species toggles must follow the A -> tau -> N cascade");
    }
    if (j.contains("params")) {
        const Json& p = j.at("params");
        check_keys(p, {"alpha_A", "alpha_tau", "alpha_N", "lambda_A", "lambda_tau", "lambda_N", "lambda_C", "K_A",
                       "K_tau", "K_N", "K_C", "lambda_tauA", "lambda_Ntau", "lambda_CN"},
                   "params");
        RDParams& r = c.params;
        read_key(p, "alpha_A", r.alpha_A, "params");
        read_key(p, "alpha_tau", r.alpha_tau, "params");
        read_key(p, "alpha_N", r.alpha_N, "params");
        read_key(p, "lambda_A", r.lambda_A, "params");
        read_key(p, "lambda_tau", r.lambda_tau, "params");
        read_key(p, "lambda_N", r.lambda_N, "params");
        read_key(p, "lambda_C", r.lambda_C, "params");
        read_key(p, "K_A", r.K_A, "params");
        read_key(p, "K_tau", r.K_tau, "params");
        read_key(p, "K_N", r.K_N, "params");
        read_key(p, "K_C", r.K_C, "params");
        read_key(p, "lambda_tauA", r.lambda_tauA, "params");
        read_key(p, "lambda_Ntau", r.lambda_Ntau, "params");
        read_key(p, "lambda_CN", r.lambda_CN, "params");
        r.validate();
    }
    if (j.contains("cohort")) {
        const Json& k = j.at("cohort");
        check_keys(k, {"patients", "seed", "start", "stop", "step", "gamma", "max_onset", "ic_low", "ic_high",
                       "ic_cutoff", "inner_dt"},
                   "cohort");
        CohortConfig& h = c.cohort;
        read_key(k, "patients", h.patients, "cohort");
        read_key(k, "seed", h.seed, "cohort");
        read_key(k, "start", h.start, "cohort");
        read_key(k, "stop", h.stop, "cohort");
        read_key(k, "step", h.step, "cohort");
        read_key(k, "gamma", h.gamma, "cohort");
        read_key(k, "max_onset", h.max_onset, "cohort");
        read_key(k, "ic_low", h.ic_low, "cohort");
        read_key(k, "ic_high", h.ic_high, "cohort");
        read_key(k, "ic_cutoff", h.ic_cutoff, "cohort");
        read_key(k, "inner_dt", h.inner_dt, "cohort");
        if (h.patients < 1) throw input_error("config: cohort.patients must be at least 1");
    }
    if (j.contains("data")) {
        read_key(j, "data", path, "");
        c.data = detail::resolve(base, path);
        if (!std::filesystem::exists(c.data / "cohort.csv"))
            throw input_error("config: no cohort.csv in data directory " + c.data.string());
    }
    if (j.contains("train")) {
        const Json& t = j.at("train");
        check_keys(t, {"epochs", "base_lr", "decay", "decay_every", "weight_data", "weight_residual", "mode",
                       "train_fraction", "alpha_init", "batch_size"},
                   "train");
        TrainConfig& tc = c.train;
        read_key(t, "epochs", tc.epochs, "train");
        tc.schedule.total_epochs = tc.epochs;
        read_key(t, "base_lr", tc.schedule.base_lr, "train");
        read_key(t, "decay", tc.schedule.decay, "train");
        read_key(t, "decay_every", tc.schedule.decay_every, "train");
        read_key(t, "weight_data", tc.weight_data, "train");
        read_key(t, "weight_residual", tc.weight_residual, "train");
        if (t.contains("mode")) {
            std::string m;
            read_key(t, "mode", m, "train");
            tc.mode = rollout_mode_from_name(m);
        }
        read_key(t, "train_fraction", tc.train_fraction, "train");
        read_key(t, "alpha_init", tc.alpha_init, "train");
        read_key(t, "batch_size", tc.batch_size, "train");
    }
    if (j.contains("transfer")) {
        const Json& t = j.at("transfer");
        check_keys(t, {"gammas", "patients_per_gamma", "seed", "train_fraction", "gamma_min", "gamma_max"}, "transfer");
        TransferConfig& tc = c.transfer;
        read_key(t, "gammas", tc.gammas, "transfer");
        read_key(t, "patients_per_gamma", tc.patients_per_gamma, "transfer");
        read_key(t, "seed", tc.seed, "transfer");
        read_key(t, "train_fraction", tc.options.train_fraction, "transfer");
        read_key(t, "gamma_min", tc.options.gamma_min, "transfer");
        read_key(t, "gamma_max", tc.options.gamma_max, "transfer");
        for (double g : tc.gammas)
            if (!(g > 0)) throw input_error("config: transfer.gammas must be positive");
    }
    if (j.contains("treatment")) {
        const Json& t = j.at("treatment");
        check_keys(t, {"patient", "eta_A", "eta_tau", "d_max_A", "d_max_tau", "horizon", "step", "epochs"},
                   "treatment");
        TreatConfig& tc = c.treat;
        read_key(t, "patient", tc.patient, "treatment");
        read_key(t, "eta_A", tc.treatment.eta_A, "treatment");
        read_key(t, "eta_tau", tc.treatment.eta_tau, "treatment");
        read_key(t, "d_max_A", tc.treatment.d_max_A, "treatment");
        read_key(t, "d_max_tau", tc.treatment.d_max_tau, "treatment");
        read_key(t, "horizon", tc.treatment.horizon, "treatment");
        read_key(t, "step", tc.treatment.step, "treatment");
        read_key(t, "epochs", tc.treatment.epochs, "treatment");
    }
    if (j.contains("analysis")) {
        const Json& a = j.at("analysis");
        check_keys(a, {"patient", "stages", "threshold"}, "analysis");
        read_key(a, "patient", c.analysis.patient, "analysis");
        read_key(a, "stages", c.analysis.stages, "analysis");
        read_key(a, "threshold", c.analysis.threshold, "analysis");
        for (double s : c.analysis.stages)
            if (!(s >= 0 && s <= 1)) throw input_error("config: analysis.stages must lie in [0, 1]");
    }
    if (j.contains("output")) {
        read_key(j, "output", path, "");
        c.output = detail::resolve(base, path);
    } else {
        c.output = detail::resolve(base, "out");
    }
    read_key(j, "seed", c.seed, "");
    c.train.seed = c.seed;
    c.treat.treatment.seed = c.seed;
    c.train.validate();
    return c;
}

/// Fully explicit form of a config (absolute paths, every key present).
inline Json config_to_json(const PipelineConfig& c) {
    Json j;
    if (c.is_mesh()) j["domain"] = {{"mesh", c.mesh.string()}};
    else j["domain"] = {{"graph", c.graph.string()}, {"normalize", c.normalize_graph}};
    j["modes"] = c.modes;
    j["architecture"] = architecture_name(c.architecture);
    j["species"] = {{"A", c.train_A}, {"tau", c.train_tau}, {"N", c.train_N}, {"C", c.train_C}};
    const RDParams& r = c.params;
    j["params"] = {{"alpha_A", r.alpha_A},       {"alpha_tau", r.alpha_tau},     {"alpha_N", r.alpha_N},
                   {"lambda_A", r.lambda_A},     {"lambda_tau", r.lambda_tau},   {"lambda_N", r.lambda_N},
                   {"lambda_C", r.lambda_C},     {"K_A", r.K_A},                 {"K_tau", r.K_tau},
                   {"K_N", r.K_N},               {"K_C", r.K_C},                 {"lambda_tauA", r.lambda_tauA},
                   {"lambda_Ntau", r.lambda_Ntau}, {"lambda_CN", r.lambda_CN}};
    const CohortConfig& h = c.cohort;
    j["cohort"] = {{"patients", h.patients}, {"seed", h.seed},         {"start", h.start},
                   {"stop", h.stop},         {"step", h.step},         {"gamma", h.gamma},
                   {"max_onset", h.max_onset}, {"ic_low", h.ic_low},   {"ic_high", h.ic_high},
                   {"ic_cutoff", h.ic_cutoff}, {"inner_dt", h.inner_dt}};
    if (!c.data.empty()) j["data"] = c.data.string();
    const TrainConfig& t = c.train;
    j["train"] = {{"epochs", t.epochs},
                  {"base_lr", t.schedule.base_lr},
                  {"decay", t.schedule.decay},
                  {"decay_every", t.schedule.decay_every},
                  {"weight_data", t.weight_data},
                  {"weight_residual", t.weight_residual},
                  {"mode", rollout_mode_name(t.mode)},
                  {"train_fraction", t.train_fraction},
                  {"alpha_init", t.alpha_init},
                  {"batch_size", t.batch_size}};
    j["transfer"] = {{"gammas", c.transfer.gammas},
                     {"patients_per_gamma", c.transfer.patients_per_gamma},
                     {"seed", c.transfer.seed},
                     {"train_fraction", c.transfer.options.train_fraction},
                     {"gamma_min", c.transfer.options.gamma_min},
                     {"gamma_max", c.transfer.options.gamma_max}};
    const TreatmentConfig& tr = c.treat.treatment;
    j["treatment"] = {{"patient", c.treat.patient}, {"eta_A", tr.eta_A},   {"eta_tau", tr.eta_tau},
                      {"d_max_A", tr.d_max_A},      {"d_max_tau", tr.d_max_tau}, {"horizon", tr.horizon},
                      {"step", tr.step},            {"epochs", tr.epochs}};
    j["analysis"] = {{"patient", c.analysis.patient},
                     {"stages", c.analysis.stages},
                     {"threshold", c.analysis.threshold}};
    j["output"] = c.output.string();
    j["seed"] = c.seed;
    return j;
}

/// Fingerprint of everything that affects results (the output directory does not).
inline std::string config_hash(const PipelineConfig& c) {
    Json j = config_to_json(c);
    j.erase("output");
    return hex64(Fnv1a().text(j.dump()).digest());
}

/// Loads a config file, or the config embedded in a run manifest.
inline PipelineConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw input_error("config file not found: " + path.string());
    std::ifstream in(path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw input_error("config " + path.string() + " is not valid JSON: " + e.what());
    }
    const auto base = std::filesystem::absolute(path).parent_path();
    if (j.is_object() && j.contains("manifest_version")) {
        if (!j.contains("config")) throw input_error("manifest " + path.string() + " has no config");
        return config_from_json(j.at("config"), base);
    }
    return config_from_json(j, base);
}

} // namespace leno
