// dynclass command-line entry point: simulate / fit / predict / evaluate / bench.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dynclass/csv_io.hpp"
#include "dynclass/em.hpp"
#include "dynclass/eval.hpp"
#include "dynclass/hmm_baseline.hpp"
#include "dynclass/model_io.hpp"
#include "dynclass/predict.hpp"
#include "dynclass/rng.hpp"
#include "dynclass/simulate.hpp"
#include "dynclass/splines.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dynclass;

namespace {

json load_config(const std::string& path, const std::set<std::string>& allowed) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json cfg = json::parse(in);
    if (!cfg.is_object()) throw std::runtime_error("config: top level must be an object");
    for (const auto& [key, value] : cfg.items()) {
        (void)value;
        if (!allowed.count(key)) throw std::runtime_error("config: unknown key '" + key + "'");
    }
    return cfg;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct ManifestInfo {
    std::string command;
    std::string config_text;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_clock_seconds = 0.0;
};

void write_manifest(const ManifestInfo& info, const std::string& path) {
    json j;
    j["command"] = info.command;
    j["config_hash"] = fnv1a(info.config_text);
    j["seed"] = info.seed;
    j["inputs"] = info.inputs;
    j["outputs"] = info.outputs;
    j["artifact_version"] = "1";
    j["wall_clock_seconds"] = info.wall_clock_seconds;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("manifest: cannot open " + tmp);
        out << j.dump(2) << "\n";
    }
    fs::rename(tmp, path);
}

SimulationConfig parse_sim_config(const json& cfg) {
    SimulationConfig sim;
    if (cfg.contains("n")) sim.n = cfg["n"].get<int>();
    if (cfg.contains("num_markers")) sim.num_markers = cfg["num_markers"].get<int>();
    if (cfg.contains("scenario")) {
        const std::string s = cfg["scenario"].get<std::string>();
        if (s == "I")
            sim.scenario = Scenario::I;
        else if (s == "II")
            sim.scenario = Scenario::II;
        else if (s == "III")
            sim.scenario = Scenario::III;
        else
            throw std::runtime_error("config: scenario must be I, II, or III");
    }
    if (cfg.contains("t_max")) sim.t_max = cfg["t_max"].get<double>();
    if (cfg.contains("test_horizon")) sim.test_horizon = cfg["test_horizon"].get<double>();
    if (cfg.contains("visit_mean_train"))
        sim.visit_mean_train = cfg["visit_mean_train"].get<double>();
    if (cfg.contains("visit_mean_test")) sim.visit_mean_test = cfg["visit_mean_test"].get<double>();
    if (cfg.contains("pool_size")) sim.pool_size = cfg["pool_size"].get<int>();
    return sim;
}

FitConfig parse_fit_config(const json& cfg, int num_states) {
    FitConfig fit;
    if (cfg.contains("max_iter")) fit.max_iter = cfg["max_iter"].get<int>();
    if (cfg.contains("tol")) fit.tol = cfg["tol"].get<double>();
    if (cfg.contains("num_starts")) fit.num_starts = cfg["num_starts"].get<int>();
    if (cfg.contains("penalty")) {
        const std::string s = cfg["penalty"].get<std::string>();
        if (s == "group_adaptive_lasso")
            fit.penalty.kind = PenaltyConfig::Kind::GroupAdaptiveLasso;
        else if (s != "none")
            throw std::runtime_error("config: penalty must be none or group_adaptive_lasso");
    }
    if (cfg.contains("lambda")) fit.penalty.lambda = cfg["lambda"].get<double>();
    if (cfg.contains("cv")) fit.cv = cfg["cv"].get<bool>();
    if (cfg.contains("cv_folds")) fit.cv_folds = cfg["cv_folds"].get<int>();
    if (cfg.contains("marginal")) {
        const std::string s = cfg["marginal"].get<std::string>();
        if (s == "nw")
            fit.e_step_marginal = MarginalMode::Nw;
        else if (s == "hmm")
            fit.e_step_marginal = MarginalMode::HmmDual;
        else
            throw std::runtime_error("config: marginal must be nw or hmm");
    }
    if (cfg.contains("bandwidth")) fit.bandwidth = cfg["bandwidth"].get<double>();
    if (cfg.contains("spline_order")) fit.spline_order = cfg["spline_order"].get<int>();
    if (cfg.contains("nm_max_iter")) fit.nm_max_iter = cfg["nm_max_iter"].get<int>();
    if (cfg.contains("nm_tol")) fit.nm_tol = cfg["nm_tol"].get<double>();
    const bool progressive = cfg.contains("progressive") ? cfg["progressive"].get<bool>() : true;
    fit.structure_mask = progressive ? progressive_mask(num_states) : all_feasible_mask(num_states);
    return fit;
}

const std::set<std::string> kSimKeys{"n",          "num_markers",      "scenario",
                                     "t_max",      "test_horizon",     "visit_mean_train",
                                     "visit_mean_test", "pool_size"};
const std::set<std::string> kFitKeys{"max_iter", "tol",       "num_starts", "penalty",
                                     "lambda",   "cv",        "cv_folds",   "marginal",
                                     "bandwidth", "spline_order", "nm_max_iter", "nm_tol",
                                     "progressive", "truth_csv"};
const std::set<std::string> kPredictKeys{"forecast_horizons"};
const std::set<std::string> kEvalKeys{"truth_csv"};
const std::set<std::string> kBenchKeys{"n",          "num_markers",      "scenario",
                                       "t_max",      "test_horizon",     "visit_mean_train",
                                       "visit_mean_test", "pool_size",   "methods",
                                       "max_iter",   "tol",              "num_starts",
                                       "penalty",    "lambda",           "cv",
                                       "cv_folds",   "marginal",         "bandwidth",
                                       "spline_order", "nm_max_iter",    "nm_tol",
                                       "progressive"};

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    json cfg = config_path.empty() ? json::object() : load_config(config_path, kSimKeys);
    SimulationConfig sim = parse_sim_config(cfg);
    sim.seed = seed;
    const Study study = make_study(sim);
    fs::create_directories(out_dir);
    const std::string train = out_dir + "/train.csv";
    const std::string train_truth = out_dir + "/train_truth.csv";
    const std::string test = out_dir + "/test.csv";
    const std::string test_truth = out_dir + "/test_truth.csv";
    write_cohort_csv(study.train.data, train);
    write_truth_csv(study.train.data, study.train.truth, train_truth);
    write_cohort_csv(study.test.data, test);
    write_truth_csv(study.test.data, study.test.truth, test_truth);
    ManifestInfo m{"simulate", cfg.dump(), seed, {config_path},
                   {train, train_truth, test, test_truth}, 0.0};
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(m, out_dir + "/manifest.json");
    return 0;
}

int cmd_fit(const std::string& data_path, const std::string& config_path,
            const std::string& method, const std::string& out_path, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    json cfg = config_path.empty() ? json::object() : load_config(config_path, kFitKeys);
    Dataset data = read_cohort_csv(data_path);
    FitConfig fit_cfg = parse_fit_config(cfg, data.dims.num_states);
    fit_cfg.seed = seed;

    ModelParams params;
    std::vector<IterationTraceRow> trace;
    if (method == "proposed") {
        FitResult res = fit(data, fit_cfg);
        params = res.params;
        trace = res.trace;
        for (const auto& d : res.diagnostics) std::cerr << "note: " << d << "\n";
    } else if (method == "hmm") {
        HmmFitResult res = fit_hmm(data, fit_cfg);
        params.dims = data.dims;
        params.init = res.params.init;
        params.intensity = res.params.intensity;
        params.emission = res.params.emission;
        params.discrim.basis = make_basis(1, data.dims.t_star, fit_cfg.spline_order);
        params.discrim.eta = Matrix::Zero(data.dims.num_states - 1, params.discrim.basis.dim());
        params.discrim.beta = Matrix::Zero(data.dims.num_states - 1, data.dims.num_markers);
    } else if (method == "dknown" || method == "obs") {
        std::vector<std::vector<int>> labels;
        if (method == "dknown") {
            if (!cfg.contains("truth_csv"))
                throw std::runtime_error("config: method dknown requires truth_csv");
            labels = read_truth_csv(cfg["truth_csv"].get<std::string>(), data);
        } else {
            for (const auto& s : data.subjects) labels.push_back(s.surrogate);
        }
        const int S = data.dims.num_states;
        WeightedClassificationProblem problem;
        problem.basis = build_basis(static_cast<int>(data.subjects.size()), data.dims.t_star,
                                    fit_cfg.spline_order);
        for (size_t i = 0; i < data.subjects.size(); ++i) {
            const auto& s = data.subjects[i];
            for (int j = 0; j < s.visits(); ++j) {
                WeightedRow row;
                row.t = s.times[j];
                row.x = s.markers.row(j).transpose();
                row.weights = Vector::Zero(S);
                row.weights[labels[i][j]] = 1.0;
                problem.rows.push_back(std::move(row));
            }
        }
        DiscriminativeParams init;
        init.basis = problem.basis;
        init.eta = Matrix::Zero(S - 1, problem.basis.dim());
        init.beta = Matrix::Zero(S - 1, data.dims.num_markers);
        PenaltyConfig none;
        params.dims = data.dims;
        params.init.pi = Vector::Constant(S, 1.0 / S);
        params.intensity.structure_mask = fit_cfg.structure_mask;
        params.intensity.rho = Matrix::Zero(S, S);
        for (int k = 0; k < S; ++k)
            for (int l = 0; l < S; ++l)
                if (k != l && fit_cfg.structure_mask(k, l)) params.intensity.rho(k, l) = 0.1;
        params.intensity.fix_diagonal();
        params.emission.feasible_mask = BoolMatrix::Constant(S, S, true);
        params.emission.e = Matrix::Constant(S, S, 0.4 / (S - 1));
        for (int k = 0; k < S; ++k) params.emission.e(k, k) = 0.6;
        params.discrim = fit_weighted_multinomial(problem, none, init);
    } else {
        throw std::runtime_error("fit: unknown method " + method);
    }

    ModelMetadata meta;
    meta.seed = seed;
    meta.fit_config_hash = fit_config_hash(fit_cfg);
    save_model(params, out_path, meta);
    const std::string trace_path = out_path + ".trace.csv";
    {
        std::ofstream out(trace_path);
        out << "iteration,delta_pi,delta_rho,delta_emission,delta_eta,delta_beta,"
               "adaptive_loglik,adaptive_loglik_after\n";
        for (const auto& r : trace)
            out << r.iteration << ',' << r.delta_pi << ',' << r.delta_rho << ','
                << r.delta_emission << ',' << r.delta_eta << ',' << r.delta_beta << ','
                << r.adaptive_loglik << ',' << r.adaptive_loglik_after << "\n";
    }
    ManifestInfo m{"fit", cfg.dump() + "|method=" + method, seed, {data_path, config_path},
                   {out_path, trace_path}, 0.0};
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(m, out_path + ".manifest.json");
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& mode, const std::string& config_path,
                const std::string& out_path) {
    const auto start = std::chrono::steady_clock::now();
    json cfg = config_path.empty() ? json::object() : load_config(config_path, kPredictKeys);
    ModelParams params = load_model(model_path);
    Dataset data = read_cohort_csv(data_path);
    if (data.dims.num_markers != params.dims.num_markers)
        throw std::runtime_error("schema: model expects " +
                                 std::to_string(params.dims.num_markers) + " markers, data has " +
                                 std::to_string(data.dims.num_markers));
    const int S = params.dims.num_states;

    std::vector<PredictionRow> rows;
    if (mode == "posterior") {
        for (const auto& s : data.subjects)
            for (int j = 0; j < s.visits(); ++j) {
                const double t = std::min(s.times[j], params.dims.t_star);
                const auto pp = posterior_predict(params, s.markers.row(j).transpose(), t);
                rows.push_back({s.subject_id, s.times[j], pp.predicted, pp.probs});
            }
    } else if (mode == "viterbi") {
        for (const auto& s : data.subjects) {
            const auto v = adaptive_viterbi(params, s.times, s.markers);
            for (int j = 0; j < s.visits(); ++j)
                rows.push_back({s.subject_id, s.times[j], v.path[j], Vector()});
        }
    } else if (mode == "forecast") {
        std::vector<double> horizons{1.0};
        if (cfg.contains("forecast_horizons"))
            horizons = cfg["forecast_horizons"].get<std::vector<double>>();
        for (const auto& s : data.subjects) {
            std::vector<double> future;
            for (double h : horizons) future.push_back(s.times.back() + h);
            const auto v = forecast(params, s.times, s.markers, future);
            for (size_t j = 0; j < v.path.size(); ++j) {
                const double t = j < s.times.size() ? s.times[j]
                                                    : future[j - s.times.size()];
                rows.push_back({s.subject_id, t, v.path[j], Vector()});
            }
        }
    } else {
        throw std::runtime_error("predict: unknown mode " + mode);
    }
    write_predictions_csv(rows, S, out_path);
    ManifestInfo m{"predict", cfg.dump() + "|mode=" + mode, 0,
                   {model_path, data_path, config_path}, {out_path}, 0.0};
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(m, out_path + ".manifest.json");
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& config_path,
                 const std::string& out_path) {
    const auto start = std::chrono::steady_clock::now();
    json cfg = load_config(config_path, kEvalKeys);
    if (!cfg.contains("truth_csv")) throw std::runtime_error("config: truth_csv required");
    const std::string truth_path = cfg["truth_csv"].get<std::string>();
    const auto preds = read_predictions_csv(pred_path);

    // Truth rows keyed by (subject_id, time); forecast rows beyond the data are skipped.
    std::ifstream in(truth_path);
    if (!in) throw std::runtime_error("evaluate: cannot open " + truth_path);
    std::string line;
    std::getline(in, line);
    std::map<std::pair<std::string, double>, int> truth;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, t, d;
        std::getline(ss, id, ',');
        std::getline(ss, t, ',');
        std::getline(ss, d, ',');
        truth[{id, std::stod(t)}] = std::stoi(d);
    }

    std::vector<int> y_pred, y_true;
    std::vector<Vector> probs;
    for (const auto& r : preds) {
        const auto it = truth.find({r.subject_id, r.time});
        if (it == truth.end()) continue;
        y_pred.push_back(r.predicted_state);
        y_true.push_back(it->second);
        probs.push_back(r.probs);
    }
    if (y_pred.empty()) throw std::runtime_error("evaluate: no prediction rows match the truth");

    std::vector<MetricRow> metrics;
    metrics.push_back({"accuracy", "all", accuracy(y_pred, y_true)});
    const bool have_probs = !probs.empty() && probs.front().size() > 0 &&
                            !std::isnan(probs.front()[0]);
    if (have_probs) {
        Matrix scores(static_cast<int>(probs.size()), probs.front().size());
        for (size_t i = 0; i < probs.size(); ++i) scores.row(i) = probs[i].transpose();
        const Vector auc = one_vs_rest_auc(scores, y_true);
        for (int k = 0; k < auc.size(); ++k)
            metrics.push_back({"auc", std::to_string(k), auc[k]});
    }
    write_metrics_csv(metrics, out_path);
    ManifestInfo m{"evaluate", cfg.dump(), 0, {pred_path, truth_path}, {out_path}, 0.0};
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(m, out_path + ".manifest.json");
    return 0;
}

int cmd_bench(const std::string& config_path, int reps, const std::string& out_dir,
              std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    json cfg = config_path.empty() ? json::object() : load_config(config_path, kBenchKeys);
    BenchmarkConfig bench;
    bench.sim = parse_sim_config(cfg);
    bench.sim.seed = seed;
    bench.fit = parse_fit_config(cfg, bench.sim.num_states);
    bench.fit.seed = seed;
    bench.replications = reps;
    if (cfg.contains("methods")) bench.methods = cfg["methods"].get<std::vector<std::string>>();
    const BenchmarkResult result = run_benchmark(bench);
    fs::create_directories(out_dir);
    const std::string rows = out_dir + "/replications.csv";
    const std::string summary = out_dir + "/summary.csv";
    write_benchmark_csv(result, rows, summary);
    ManifestInfo m{"bench", cfg.dump() + "|reps=" + std::to_string(reps), seed, {config_path},
                   {rows, summary}, 0.0};
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(m, out_dir + "/manifest.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynclass: latent disease-state estimation toolkit"};
    app.require_subcommand(1);

    std::string config, data, model, out, method = "proposed", mode = "posterior";
    std::uint64_t seed = 0;
    int reps = 1, threads = 1;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic study");
    sim->add_option("--config", config);
    sim->add_option("--out", out)->required();
    sim->add_option("--seed", seed);

    auto* fit = app.add_subcommand("fit", "Fit a model to a cohort CSV");
    fit->add_option("--data", data)->required();
    fit->add_option("--config", config);
    fit->add_option("--method", method)->check(CLI::IsMember({"proposed", "hmm", "dknown", "obs"}));
    fit->add_option("--out", out)->required();
    fit->add_option("--seed", seed);
    fit->add_option("--threads", threads);

    auto* pred = app.add_subcommand("predict", "Predict latent states for a cohort CSV");
    pred->add_option("--model", model)->required();
    pred->add_option("--data", data)->required();
    pred->add_option("--mode", mode)->check(CLI::IsMember({"posterior", "viterbi", "forecast"}));
    pred->add_option("--config", config);
    pred->add_option("--out", out)->required();

    auto* eva = app.add_subcommand("evaluate", "Score predictions against a truth file");
    eva->add_option("--data", data)->required();
    eva->add_option("--config", config)->required();
    eva->add_option("--out", out)->required();

    auto* bench = app.add_subcommand("bench", "Run the replication benchmark");
    bench->add_option("--config", config);
    bench->add_option("--reps", reps);
    bench->add_option("--out", out)->required();
    bench->add_option("--seed", seed);
    bench->add_option("--threads", threads);

    CLI11_PARSE(app, argc, argv);
    try {
        if (sim->parsed()) return cmd_simulate(config, out, seed);
        if (fit->parsed()) return cmd_fit(data, config, method, out, seed);
        if (pred->parsed()) return cmd_predict(model, data, mode, config, out);
        if (eva->parsed()) return cmd_evaluate(data, config, out);
        if (bench->parsed()) return cmd_bench(config, reps, out, seed);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
