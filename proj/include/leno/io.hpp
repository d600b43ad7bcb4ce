#pragma once
// CSV formats and JSON checkpoints.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "analysis.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "synth.hpp"

namespace leno {

using Json = nlohmann::json;

/// 17 significant digits, enough to read back the same double.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string hex64(std::uint64_t x) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 16);
    if (s.empty() || *end != '\0' || errno != 0) throw input_error("bad hexadecimal value '" + s + "'");
    return v;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write " + path.string());
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open " + path.string());
    return in;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw input_error(where + ": bad number '" + s + "'");
    return v;
}

// rows of numbers after a header; returns the header cells
inline std::vector<std::string> read_table(const std::filesystem::path& path, std::vector<std::vector<double>>& rows) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw input_error(path.string() + ": empty file");
    const auto header = split_csv(line);
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw input_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " columns");
        }
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(parse_double(c, path.string() + ":" + std::to_string(lineno)));
        rows.push_back(std::move(row));
    }
    return header;
}

} // namespace detail

// ---- trajectories -------------------------------------------------------

inline std::filesystem::path trajectory_file(const std::filesystem::path& dir, const std::string& id,
                                             const std::string& what) {
    return dir / (id + "_" + what + ".csv");
}

/// One file per species (`t,node_0,...`) plus `<id>_C.csv` when C is present.
inline void write_trajectory(const Trajectory& tr, const std::filesystem::path& dir) {
    for (Species s : kAllSpecies) {
        std::ofstream out = detail::open_out(trajectory_file(dir, tr.patient_id, species_name(s)));
        out << "t";
        const Eigen::Index v = tr[s].empty() ? 0 : tr[s][0].size();
        for (Eigen::Index i = 0; i < v; ++i) out << ",node_" << i;
        out << "\n";
        for (std::size_t n = 0; n < tr.size(); ++n) {
            out << fmt17(tr.times[n]);
            for (Eigen::Index i = 0; i < v; ++i) out << ',' << fmt17(tr[s][n](i));
            out << "\n";
        }
    }
    if (tr.has_cognitive()) {
        std::ofstream out = detail::open_out(trajectory_file(dir, tr.patient_id, "C"));
        out << "t,C\n";
        for (std::size_t n = 0; n < tr.size(); ++n) out << fmt17(tr.times[n]) << ',' << fmt17(tr.cognitive[n]) << "\n";
    }
}

inline Trajectory read_trajectory(const std::filesystem::path& dir, const std::string& id) {
    Trajectory tr;
    tr.patient_id = id;
    for (Species s : kAllSpecies) {
        std::vector<std::vector<double>> rows;
        const auto path = trajectory_file(dir, id, species_name(s));
        const auto header = detail::read_table(path, rows);
        if (header.empty() || header[0] != "t") throw input_error(path.string() + ": header must start with t");
        std::vector<double> times;
        for (const auto& r : rows) {
            times.push_back(r[0]);
            tr[s].push_back(Eigen::Map<const Eigen::VectorXd>(r.data() + 1, static_cast<Eigen::Index>(r.size() - 1)));
        }
        if (s == Species::A) tr.times = times;
        else if (times != tr.times) throw input_error(path.string() + ": time column differs from the A file");
    }
    const auto cpath = trajectory_file(dir, id, "C");
    if (std::filesystem::exists(cpath)) {
        std::vector<std::vector<double>> rows;
        const auto header = detail::read_table(cpath, rows);
        if (header != std::vector<std::string>{"t", "C"}) throw input_error(cpath.string() + ": header must be t,C");
        for (std::size_t n = 0; n < rows.size(); ++n) {
            if (n >= tr.times.size() || rows[n][0] != tr.times[n])
                throw input_error(cpath.string() + ": time column differs from the A file");
            tr.cognitive.push_back(rows[n][1]);
        }
    }
    tr.validate(tr.size() && !tr[Species::A].empty() ? static_cast<int>(tr[Species::A][0].size()) : 0);
    return tr;
}

// ---- metrics --------------------------------------------------------------

struct MetricsRow {
    std::string species;
    std::string phase;
    Metrics metrics;
};

inline std::string metrics_header() { return "species,phase,acc2,acc1,e_l2,e_res,e_nonlinear"; }

inline std::string metric_cell(double x) { return std::isnan(x) ? std::string() : fmt17(x); }

inline void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
    std::ofstream out = detail::open_out(path);
    out << metrics_header() << "\n";
    for (const auto& r : rows) {
        const Metrics& m = r.metrics;
        out << r.species << ',' << r.phase << ',' << metric_cell(m.acc2) << ',' << metric_cell(m.acc1) << ','
            << metric_cell(m.e_l2) << ',' << metric_cell(m.e_res) << ',' << metric_cell(m.e_nonlinear) << "\n";
    }
}

inline std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
    std::ifstream in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != metrics_header()) throw input_error(path.string() + ": not a metrics file");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = detail::split_csv(line);
        if (c.size() != 7) throw input_error(path.string() + ": metrics rows need 7 columns");
        MetricsRow r{c[0], c[1], {}};
        const std::string where = path.string();
        r.metrics.acc2 = detail::parse_double(c[2], where);
        r.metrics.acc1 = detail::parse_double(c[3], where);
        r.metrics.e_l2 = detail::parse_double(c[4], where);
        r.metrics.e_res = detail::parse_double(c[5], where);
        r.metrics.e_nonlinear = detail::parse_double(c[6], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---- matrices and edges ---------------------------------------------------

inline void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    std::ofstream out = detail::open_out(path);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << fmt17(m(r, c));
        out << "\n";
    }
}

inline Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
    std::ifstream in = detail::open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& c : detail::split_csv(line)) row.push_back(detail::parse_double(c, path.string()));
        if (!rows.empty() && row.size() != rows[0].size()) throw input_error(path.string() + ": ragged matrix");
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
    return m;
}

inline void write_edges(const std::vector<Edge>& edges, const std::vector<std::string>& labels,
                        const std::filesystem::path& path) {
    auto name = [&](int i) { return i < static_cast<int>(labels.size()) ? labels[i] : std::to_string(i); };
    std::ofstream out = detail::open_out(path);
    out << "source_region,target_region,weight\n";
    for (const auto& e : edges) out << name(e.source) << ',' << name(e.target) << ',' << fmt17(e.weight) << "\n";
}

// ---- checkpoints ----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    LenoModel model;
    std::string config_hash;
    Json final_losses = Json::object();
};

namespace detail {

inline Json mlp_to_json(const MlpParams& p) {
    Json j;
    j["hidden"] = activation_name(p.hidden);
    j["output"] = activation_name(p.output);
    j["sizes"] = p.sizes();
    Json layers = Json::array();
    for (const auto& l : p.layers) {
        std::vector<double> w(l.weight.data(), l.weight.data() + l.weight.size());
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        layers.push_back({{"weight", w}, {"bias", b}});
    }
    j["layers"] = layers;
    return j;
}

inline MlpParams mlp_from_json(const Json& j) {
    MlpParams p;
    p.hidden = activation_from_name(j.at("hidden").get<std::string>());
    p.output = activation_from_name(j.at("output").get<std::string>());
    const auto sizes = j.at("sizes").get<std::vector<int>>();
    const Json& layers = j.at("layers");
    if (sizes.empty() || layers.size() + 1 != sizes.size()) throw input_error("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto w = layers[l].at("weight").get<std::vector<double>>();
        const auto b = layers[l].at("bias").get<std::vector<double>>();
        if (w.size() != static_cast<std::size_t>(sizes[l]) * sizes[l + 1] || b.size() != static_cast<std::size_t>(sizes[l + 1]))
            throw input_error("checkpoint: layer " + std::to_string(l) + " has the wrong shape");
        DenseLayer layer{Eigen::Map<const Eigen::MatrixXd>(w.data(), sizes[l + 1], sizes[l]),
                         Eigen::Map<const Eigen::VectorXd>(b.data(), sizes[l + 1])};
        p.layers.push_back(std::move(layer));
    }
    return p;
}

} // namespace detail

inline Json checkpoint_to_json(const Checkpoint& c) {
    const LenoModel& m = c.model;
    Json j;
    j["format"] = "leno-checkpoint";
    j["version"] = kCheckpointVersion;
    j["modes"] = m.modes;
    j["architecture"] = architecture_name(m.architecture);
    j["domain_hash"] = hex64(m.domain_hash);
    j["basis_id"] = hex64(m.basis_id);
    j["log_alpha"] = std::vector<double>(m.log_alpha.begin(), m.log_alpha.end());
    j["trained"] = std::vector<bool>(m.trained.begin(), m.trained.end());
    j["cognitive_trained"] = m.cognitive_trained;
    Json ops = Json::array();
    for (const auto& op : m.operators) ops.push_back(op.layers.empty() ? Json() : detail::mlp_to_json(op));
    j["operators"] = ops;
    j["cognitive"] = m.cognitive.layers.empty() ? Json() : detail::mlp_to_json(m.cognitive);
    j["origin"] = {{"config_hash", c.config_hash}, {"final_losses", c.final_losses}};
    return j;
}

inline Checkpoint checkpoint_from_json(const Json& j) {
    if (!j.is_object() || j.value("format", "") != "leno-checkpoint") throw input_error("checkpoint: not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
        throw input_error("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    LenoModel& m = c.model;
    m.modes = j.at("modes").get<int>();
    m.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    m.domain_hash = parse_hex64(j.at("domain_hash").get<std::string>());
    m.basis_id = parse_hex64(j.at("basis_id").get<std::string>());
    const auto la = j.at("log_alpha").get<std::vector<double>>();
    const auto tr = j.at("trained").get<std::vector<bool>>();
    const Json& ops = j.at("operators");
    if (la.size() != 3 || tr.size() != 3 || ops.size() != 3) throw input_error("checkpoint: expected three species");
    for (int s = 0; s < 3; ++s) {
        m.log_alpha[s] = la[s];
        m.trained[s] = tr[s];
        if (!ops[s].is_null()) m.operators[s] = detail::mlp_from_json(ops[s]);
        if (m.trained[s] && m.operators[s].layers.empty()) throw input_error("checkpoint: trained operator has no weights");
    }
    m.cognitive_trained = j.at("cognitive_trained").get<bool>();
    if (!j.at("cognitive").is_null()) m.cognitive = detail::mlp_from_json(j.at("cognitive"));
    if (m.cognitive_trained && m.cognitive.layers.empty()) throw input_error("checkpoint: cognitive network missing");
    c.config_hash = j.at("origin").at("config_hash").get<std::string>();
    c.final_losses = j.at("origin").at("final_losses");
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    std::ofstream out = detail::open_out(path);
    out << checkpoint_to_json(c).dump(1) << "\n";
    if (!out) throw input_error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in = detail::open_in(path);
    Json j;
    try {
        j = Json::parse(in);
        return checkpoint_from_json(j);
    } catch (const Json::exception& e) {
        throw input_error("checkpoint " + path.string() + " is corrupt: " + e.what());
    }
}

} // namespace leno
