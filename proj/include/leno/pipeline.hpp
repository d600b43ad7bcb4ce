#pragma once
// Pipeline commands behind the `leno` executable. Every command reads the
// config, works inside the output directory and leaves a run manifest there.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "analysis.hpp"
#include "config.hpp"
#include "eigenbasis.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "mesh.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "synth.hpp"
#include "train.hpp"
#include "treatment.hpp"

namespace leno {

namespace fs = std::filesystem;

struct Domain {
    std::optional<Mesh2D> mesh;
    std::optional<GraphDomain> graph;
    EigenBasis basis;

    std::vector<std::string> labels() const {
        if (graph && !graph->region_labels.empty()) return graph->region_labels;
        std::vector<std::string> out;
        for (int i = 0; i < basis.num_nodes(); ++i) out.push_back(std::to_string(i));
        return out;
    }
};

inline Domain load_domain(const PipelineConfig& cfg) {
    Domain d;
    if (cfg.is_mesh()) {
        d.mesh = load_mesh(cfg.mesh.string());
        d.basis = mesh_eigenbasis(*d.mesh, cfg.modes);
    } else {
        d.graph = load_graph(cfg.graph.string(), cfg.normalize_graph);
        d.basis = graph_eigenbasis(*d.graph, cfg.modes);
    }
    return d;
}

namespace detail {

struct Run {
    const PipelineConfig& cfg;
    std::string command;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::vector<std::string> outputs;

    Run(const PipelineConfig& c, std::string cmd) : cfg(c), command(std::move(cmd)) {}

    fs::path out(const std::string& rel) {
        outputs.push_back(rel);
        return cfg.output / rel;
    }

    void finish() {
        Json m;
        m["manifest_version"] = 1;
        m["command"] = command;
        m["config_hash"] = config_hash(cfg);
        m["seed"] = cfg.seed;
        m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        m["outputs"] = outputs;
        m["config"] = config_to_json(cfg);
        std::ofstream f = open_out(cfg.output / ("manifest_" + command + ".json"));
        f << m.dump(1) << "\n";
    }
};

inline fs::path cohort_dir(const PipelineConfig& cfg) { return cfg.data.empty() ? cfg.output / "data" : cfg.data; }
inline fs::path transfer_dir(const PipelineConfig& cfg) { return cfg.output / "transfer_data"; }

inline void write_cohort(const std::vector<Trajectory>& cohort, const std::vector<double>& gammas, const fs::path& dir) {
    std::ofstream idx = open_out(dir / "cohort.csv");
    idx << "patient_id,gamma\n";
    for (std::size_t m = 0; m < cohort.size(); ++m) {
        write_trajectory(cohort[m], dir);
        idx << cohort[m].patient_id << ',' << fmt17(gammas[m]) << "\n";
    }
}

inline std::vector<Trajectory> read_cohort(const fs::path& dir, const std::string& what, int nodes,
                                           std::vector<double>* gammas = nullptr) {
    const fs::path idx = dir / "cohort.csv";
    if (!fs::exists(idx)) throw stage_error(what + " not found (" + idx.string() + "); run simulate first");
    std::ifstream in = open_in(idx);
    std::string line;
    std::getline(in, line);
    if (line != "patient_id,gamma") throw input_error(idx.string() + ": header must be patient_id,gamma");
    std::vector<Trajectory> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw input_error(idx.string() + ": expected patient_id,gamma");
        Trajectory tr = read_trajectory(dir, cells[0]);
        tr.validate(nodes);
        out.push_back(std::move(tr));
        if (gammas) gammas->push_back(parse_double(cells[1], idx.string()));
    }
    if (out.empty()) throw input_error(idx.string() + ": no patients listed");
    return out;
}

inline Checkpoint read_checkpoint(const PipelineConfig& cfg, const EigenBasis& basis) {
    const fs::path path = cfg.output / "checkpoint.json";
    if (!fs::exists(path)) throw stage_error("checkpoint not found (" + path.string() + "); run train first");
    Checkpoint c = load_checkpoint(path);
    check_compatible(c.model, basis);
    return c;
}

inline const RDParams* truth_of(const PipelineConfig& cfg) { return cfg.data.empty() ? &cfg.params : nullptr; }

inline void print_eigenvalues(const EigenBasis& basis, std::ostream& log) {
    const Eigen::Index k = std::min<Eigen::Index>(10, basis.eigenvalues.size());
    const double scale = std::max(1.0, basis.eigenvalues.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < k; ++i) {
        const double v = basis.eigenvalues(i);
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.10g", std::abs(v) < 1e-12 * scale ? 0.0 : v);
        log << (i ? "," : "") << buf;
    }
    log << "\n";
}

} // namespace detail

inline void cmd_eigs(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "eigs"};
    const Domain d = load_domain(cfg);
    {
        std::ofstream f = detail::open_out(run.out("eigenvalues.csv"));
        f << "index,lambda\n";
        for (Eigen::Index i = 0; i < d.basis.eigenvalues.size(); ++i) f << i << ',' << fmt17(d.basis.eigenvalues(i)) << "\n";
    }
    write_matrix(d.basis.modes, run.out("modes.csv"));
    detail::print_eigenvalues(d.basis, log);
    run.finish();
}

inline void cmd_simulate(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "simulate"};
    if (!cfg.data.empty()) throw input_error("simulate: config imports data from " + cfg.data.string());
    const Domain d = load_domain(cfg);
    const CohortConfig& h = cfg.cohort;
    const std::vector<double> times = uniform_grid(h.start, h.stop, h.step);
    CohortOptions co;
    co.sim.inner_dt = h.inner_dt;
    co.ic.low = h.ic_low;
    co.ic.high = {h.ic_high, h.ic_high, h.ic_high};
    co.ic.cutoff = h.ic_cutoff;
    co.max_onset = h.max_onset;
    std::vector<std::uint64_t> seeds;
    for (int m = 0; m < h.patients; ++m) seeds.push_back(h.seed + static_cast<std::uint64_t>(m));
    const std::vector<double> gammas(seeds.size(), h.gamma);
    detail::write_cohort(make_cohort(cfg.params, d.basis, seeds, gammas, times, co), gammas, detail::cohort_dir(cfg));
    run.outputs.push_back("data/");

    std::vector<std::uint64_t> tseeds;
    std::vector<double> tgammas;
    for (std::size_t g = 0; g < cfg.transfer.gammas.size(); ++g) {
        for (int k = 0; k < cfg.transfer.patients_per_gamma; ++k) {
            tseeds.push_back(cfg.transfer.seed + tseeds.size());
            tgammas.push_back(cfg.transfer.gammas[g]);
        }
    }
    if (!tseeds.empty()) {
        co.id_prefix = "T";
        detail::write_cohort(make_cohort(cfg.params, d.basis, tseeds, tgammas, times, co), tgammas,
                             detail::transfer_dir(cfg));
        run.outputs.push_back("transfer_data/");
    }
    log << "simulated " << seeds.size() << " patients and " << tseeds.size() << " transfer patients on "
        << times.size() << " time points\n";
    run.finish();
}

inline void cmd_train(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "train"};
    const Domain d = load_domain(cfg);
    const auto cohort = detail::read_cohort(detail::cohort_dir(cfg), "training data", d.basis.num_nodes());
    const RDParams* truth = detail::truth_of(cfg);
    Checkpoint ck;
    ck.model = make_model(d.basis, cfg.architecture);
    ck.config_hash = config_hash(cfg);
    std::vector<MetricsRow> rows;
    auto trace_file = [&](const std::string& name, const std::vector<double>& trace) {
        std::ofstream f = detail::open_out(run.out("loss_" + name + ".csv"));
        f << "epoch,loss\n";
        for (std::size_t e = 0; e < trace.size(); ++e) f << e << ',' << fmt17(trace[e]) << "\n";
    };
    for (Species s : kAllSpecies) {
        if (!cfg.species_enabled(s)) continue;
        const TrainResult r = train_species(s, cohort, d.basis, ck.model, cfg.train, truth);
        rows.push_back({species_name(s), "train", r.metrics});
        ck.final_losses[species_name(s)] = r.loss_trace.back();
        trace_file(species_name(s), r.loss_trace);
        log << species_name(s) << ": loss " << fmt17(r.loss_trace.back()) << ", alpha " << fmt17(ck.model.alpha(s))
            << "\n";
    }
    if (cfg.train_C && ck.model.trained[index_of(Species::N)] && cohort.front().has_cognitive()) {
        const TrainResult r = train_cognitive(cohort, d.basis, ck.model, cfg.train, truth);
        rows.push_back({"C", "train", r.metrics});
        ck.final_losses["C"] = r.loss_trace.back();
        trace_file("C", r.loss_trace);
        log << "C: loss " << fmt17(r.loss_trace.back()) << "\n";
    }
    save_checkpoint(ck, run.out("checkpoint.json"));
    write_metrics(rows, run.out("metrics_train.csv"));
    run.finish();
}

inline void cmd_predict(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "predict"};
    const Domain d = load_domain(cfg);
    const Checkpoint ck = detail::read_checkpoint(cfg, d.basis);
    if (!ck.model.fully_trained()) throw stage_error("predict requires trained A, tau and N operators; run train first");
    const auto cohort = detail::read_cohort(detail::cohort_dir(cfg), "training data", d.basis.num_nodes());
    std::vector<Trajectory> preds;
    for (const auto& tr : cohort) {
        Trajectory p = predict(ck.model, d.basis, tr.state(0), tr.times);
        p.patient_id = tr.patient_id;
        write_trajectory(p, cfg.output / "predictions");
        preds.push_back(std::move(p));
    }
    run.outputs.push_back("predictions/");
    const std::size_t total = cohort.front().size();
    const std::size_t window = training_points(total, cfg.train.train_fraction);
    std::vector<MetricsRow> rows;
    for (Target t : kAllTargets) {
        if (t == Target::C && !(ck.model.cognitive_trained && cohort.front().has_cognitive())) continue;
        EvalOptions o;
        o.truth = detail::truth_of(cfg);
        if (window < total) {
            o.first = window;
            o.last = total - 1;
            rows.push_back({target_name(t), "predict", evaluate_cohort(t, preds, cohort, ck.model, d.basis, o)});
        }
        o.first = o.last = total - 1;
        const Metrics fin = evaluate_cohort(t, preds, cohort, ck.model, d.basis, o);
        rows.push_back({target_name(t), "final", fin});
        log << target_name(t) << ": final E_L2 " << fmt17(fin.e_l2) << "\n";
    }
    write_metrics(rows, run.out("metrics_predict.csv"));
    run.finish();
}

inline void cmd_transfer(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "transfer"};
    const Domain d = load_domain(cfg);
    const Checkpoint ck = detail::read_checkpoint(cfg, d.basis);
    std::vector<double> gammas;
    const auto patients =
        detail::read_cohort(detail::transfer_dir(cfg), "transfer data", d.basis.num_nodes(), &gammas);
    std::ofstream f = detail::open_out(run.out("transfer.csv"));
    f << "patient_id,gamma_true,gamma,offset,loss\n";
    std::array<std::vector<Metrics>, 4> fit, pred;
    for (std::size_t m = 0; m < patients.size(); ++m) {
        const TransferResult r = fit_timescale(ck.model, d.basis, patients[m], cfg.transfer.options, detail::truth_of(cfg));
        f << patients[m].patient_id << ',' << fmt17(gammas[m]) << ',' << fmt17(r.timescale.gamma) << ','
          << fmt17(r.timescale.offset) << ',' << fmt17(r.loss) << "\n";
        log << patients[m].patient_id << ": gamma " << fmt17(r.timescale.gamma) << " (true " << fmt17(gammas[m]) << ")\n";
        for (std::size_t t = 0; t < 4; ++t) {
            if (r.fit_metrics[t]) fit[t].push_back(*r.fit_metrics[t]);
            if (r.pred_metrics[t]) pred[t].push_back(*r.pred_metrics[t]);
        }
    }
    std::vector<MetricsRow> rows;
    for (Target t : kAllTargets) {
        const auto ti = static_cast<std::size_t>(t);
        if (!fit[ti].empty()) rows.push_back({target_name(t), "transfer_fit", average_metrics(fit[ti])});
        if (!pred[ti].empty()) rows.push_back({target_name(t), "transfer_predict", average_metrics(pred[ti])});
    }
    write_metrics(rows, run.out("metrics_transfer.csv"));
    run.finish();
}

inline void cmd_treat(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "treat"};
    const Domain d = load_domain(cfg);
    const Checkpoint ck = detail::read_checkpoint(cfg, d.basis);
    if (!ck.model.cognitive_trained) throw stage_error("treat requires a trained cognitive network; run train with C");
    const auto cohort = detail::read_cohort(detail::cohort_dir(cfg), "training data", d.basis.num_nodes());
    if (cfg.treat.patient < 0 || cfg.treat.patient >= static_cast<int>(cohort.size()))
        throw input_error("treatment.patient is out of range");
    const Trajectory& tr = cohort[static_cast<std::size_t>(cfg.treat.patient)];
    TreatmentConfig tc = cfg.treat.treatment;
    tc.start = tr.times.front();
    tc.validate(tr.times.back());
    const FieldState init = tr.state(0);
    const std::vector<double> grid = tc.grid();

    std::ofstream obj = detail::open_out(run.out("treatment/objective.csv"));
    obj << "scenario,objective,C_T,mean_d_A,mean_d_tau\n";
    std::vector<Eigen::VectorXd> cog;
    for (Scenario s : kAllScenarios) {
        const PolicyResult pr = optimize_policy(ck.model, d.basis, init, tc, s);
        const TreatedRollout r = treated_rollout(ck.model, d.basis, pr.policy, init, grid);
        Eigen::VectorXd c(static_cast<Eigen::Index>(grid.size()));
        for (std::size_t n = 0; n < grid.size(); ++n) c(static_cast<Eigen::Index>(n)) = r.states[n].cognitive;
        cog.push_back(c);
        obj << scenario_name(s) << ',' << fmt17(pr.objective) << ',' << fmt17(c(c.size() - 1)) << ','
            << fmt17(r.doses.row(0).mean()) << ',' << fmt17(r.doses.row(1).mean()) << "\n";
        std::ofstream f = detail::open_out(run.out(std::string("treatment/doses_") + scenario_name(s) + ".csv"));
        f << "t,d_A,d_tau\n";
        for (std::size_t n = 0; n < grid.size(); ++n) {
            const auto k = static_cast<Eigen::Index>(n);
            f << fmt17(grid[n]) << ',' << fmt17(r.doses(0, k)) << ',' << fmt17(r.doses(1, k)) << "\n";
        }
        log << scenario_name(s) << ": objective " << fmt17(pr.objective) << ", C(T) " << fmt17(c(c.size() - 1)) << "\n";
    }
    std::ofstream f = detail::open_out(run.out("treatment/cognitive.csv"));
    f << "t,C_none,C_antiA,C_antiTau,C_combo\n";
    for (std::size_t n = 0; n < grid.size(); ++n) {
        f << fmt17(grid[n]);
        for (const auto& c : cog) f << ',' << fmt17(c(static_cast<Eigen::Index>(n)));
        f << "\n";
    }
    run.finish();
}

/// Collects the metrics files into one table and exports regional influence
/// matrices of each species on itself at the configured stages.
inline void cmd_report(const PipelineConfig& cfg, std::ostream& log) {
    detail::Run run{cfg, "report"};
    std::vector<MetricsRow> rows;
    for (const char* name : {"metrics_train.csv", "metrics_predict.csv", "metrics_transfer.csv"}) {
        const fs::path p = cfg.output / name;
        if (!fs::exists(p)) continue;
        const auto part = read_metrics(p);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) throw stage_error("report found no metrics files in " + cfg.output.string() + "; run train first");
    write_metrics(rows, run.out("report.csv"));
    {
        std::ofstream md = detail::open_out(run.out("report.md"));
        auto cell = [](double x) {
            if (std::isnan(x)) return std::string("-");
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3e", x);
            return std::string(buf);
        };
        md << "| Variable | Phase | Acc2 | Acc1 | E_L2 | E_Res | E_Nonlinear |\n";
        md << "|---|---|---|---|---|---|---|\n";
        for (const auto& r : rows) {
            const Metrics& m = r.metrics;
            md << "| " << r.species << " | " << r.phase << " | " << cell(m.acc2) << " | " << cell(m.acc1) << " | "
               << cell(m.e_l2) << " | " << cell(m.e_res) << " | " << cell(m.e_nonlinear) << " |\n";
        }
    }
    log << rows.size() << " metric rows\n";

    const fs::path ckpath = cfg.output / "checkpoint.json";
    if (fs::exists(ckpath)) {
        const Domain d = load_domain(cfg);
        const Checkpoint ck = detail::read_checkpoint(cfg, d.basis);
        const auto cohort = detail::read_cohort(detail::cohort_dir(cfg), "training data", d.basis.num_nodes());
        const int pi = cfg.analysis.patient;
        if (pi < 0 || pi >= static_cast<int>(cohort.size())) throw input_error("analysis.patient is out of range");
        const Trajectory& tr = cohort[static_cast<std::size_t>(pi)];
        const Eigen::MatrixXd dist = d.mesh ? mesh_distances(*d.mesh) : graph_distances(*d.graph);
        std::ofstream len = detail::open_out(run.out("analysis/interaction_length.csv"));
        len << "pair,stage,t,edges,length\n";
        for (std::size_t k = 0; k < cfg.analysis.stages.size(); ++k) {
            const auto n = static_cast<std::size_t>(std::lround(cfg.analysis.stages[k] * double(tr.size() - 1)));
            for (Species s : kAllSpecies) {
                if (!ck.model.trained[index_of(s)]) continue;
                const InteractionMatrix im =
                    jacobian_regional(ck.model, s, s, tr.state(n), d.basis, "t=" + fmt17(tr.times[n]));
                const std::string stem = std::string("analysis/") + species_name(s) + "_stage" + std::to_string(k);
                write_matrix(im.values, run.out(stem + "_matrix.csv"));
                const auto edges = connectivity_export(im, cfg.analysis.threshold);
                write_edges(edges, d.labels(), run.out(stem + "_edges.csv"));
                len << im.pair() << ',' << k << ',' << fmt17(tr.times[n]) << ',' << edges.size() << ','
                    << fmt17(interaction_length(edges, dist, d.basis)) << "\n";
            }
        }
    }
    run.finish();
}

/// Entry point of the `leno` executable.
inline int run_cli(int argc, char** argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Spectral neural-operator pipeline for reaction-diffusion biomarker dynamics"};
    std::string command, config_path, out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("command", command, "eigs | simulate | train | predict | transfer | treat | report")
        ->required()
        ->check(CLI::IsMember({"eigs", "simulate", "train", "predict", "transfer", "treat", "report"}));
    app.add_option("--config", config_path, "pipeline config (JSON), or a run manifest")->required();
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_dir, "override the output directory");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, log, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, log, err);
        return 2;
    }
    try {
        PipelineConfig cfg = load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.train.seed = *seed;
            cfg.treat.treatment.seed = *seed;
        }
        if (!out_dir.empty()) cfg.output = fs::absolute(out_dir);
        fs::create_directories(cfg.output);
        static const std::map<std::string, void (*)(const PipelineConfig&, std::ostream&)> commands{
            {"eigs", cmd_eigs},   {"simulate", cmd_simulate}, {"train", cmd_train}, {"predict", cmd_predict},
            {"transfer", cmd_transfer}, {"treat", cmd_treat}, {"report", cmd_report}};
        commands.at(command)(cfg, log);
    } catch (const Error& e) {
        err << "leno " << command << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        err << "leno " << command << ": " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace leno
