// Command-line front end: fit, predict, simulate, eval.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "riot/analysis.hpp"
#include "riot/config_json.hpp"
#include "riot/csv_io.hpp"
#include "riot/iot_solver.hpp"
#include "riot/joint_cost.hpp"
#include "riot/riot_solver.hpp"
#include "riot/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace riot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitSolver = 2;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

Vector read_vector(const fs::path& path) {
  const Matrix m = csv::read_matrix(path);
  if (m.rows() != 1 && m.cols() != 1) throw InvalidInput(path.string() + ": expected a single row or column");
  return Eigen::Map<const Vector>(m.data(), m.size());
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

Matrix column(const std::vector<double>& values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

// Kernel and hyper-parameter flags shared by fit and predict; every flag
// overrides the matching key of the JSON config.
struct ModelFlags {
  std::optional<std::string> kernel;
  std::optional<double> gamma, c0, lambda, lambda_u, lambda_v, delta, step_size, inner_tol, side_step;
  std::optional<int> degree, outer_iters, inner_iters;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, bool solver_flags) {
    app->add_option("--kernel", kernel, "linear | polynomial | sigmoid");
    app->add_option("--gamma", gamma, "kernel scale");
    app->add_option("--c0", c0, "kernel offset");
    app->add_option("--degree", degree, "polynomial degree");
    app->add_option("--lambda", lambda, "entropic regularization of the matching");
    if (!solver_flags) return;
    app->add_option("--lambda-u", lambda_u, "regularization of the user-side relaxation");
    app->add_option("--lambda-v", lambda_v, "regularization of the item-side relaxation");
    app->add_option("--delta", delta, "relaxation weight");
    app->add_option("--step-size", step_size, "gradient step size s");
    app->add_option("--outer-iters", outer_iters, "outer iterations L");
    app->add_option("--inner-iters", inner_iters, "maximum inner sweeps K");
    app->add_option("--inner-tol", inner_tol, "inner stationarity tolerance");
    app->add_option("--side-step-size", side_step, "side-cost step size for --joint-side-costs");
    app->add_option("--seed", seed, "seed recorded in the run metadata");
  }
};

struct ModelConfig {
  KernelSpec kernel;
  HyperParams hyper;
  std::uint64_t seed = 0;
  std::optional<double> side_step;

  json to_json() const {
    json doc{{"kernel", riot::to_json(kernel)}, {"hyper", riot::to_json(hyper)}, {"seed", seed}};
    if (side_step) doc["side_step_size"] = *side_step;
    return doc;
  }
};

ModelConfig resolve_model(const std::string& config_path, const ModelFlags& f) {
  ModelConfig cfg;
  if (!config_path.empty()) {
    const json doc = read_json_file(config_path);
    if (!doc.is_object()) throw InvalidInput(config_path + ": config must be a JSON object");
    for (const auto& item : doc.items()) {
      const std::string& key = item.key();
      if (key == "kernel") cfg.kernel = kernel_spec_from_json(item.value(), cfg.kernel);
      else if (key == "hyper") cfg.hyper = hyper_params_from_json(item.value(), cfg.hyper);
      else if (key == "seed" && item.value().is_number_unsigned()) cfg.seed = item.value().get<std::uint64_t>();
      else if (key == "side_step_size" && item.value().is_number()) cfg.side_step = item.value().get<double>();
      else throw InvalidInput(config_path + ": unknown or invalid config key '" + key + "'");
    }
  }
  if (f.kernel) cfg.kernel.kind = kernel_kind_from_string(*f.kernel);
  if (f.gamma) cfg.kernel.gamma = *f.gamma;
  if (f.c0) cfg.kernel.c0 = *f.c0;
  if (f.degree) cfg.kernel.degree = *f.degree;
  if (f.lambda) cfg.hyper.lambda = *f.lambda;
  if (f.lambda_u) cfg.hyper.lambda_u = *f.lambda_u;
  if (f.lambda_v) cfg.hyper.lambda_v = *f.lambda_v;
  if (f.delta) cfg.hyper.delta = *f.delta;
  if (f.step_size) cfg.hyper.step_size = *f.step_size;
  if (f.outer_iters) cfg.hyper.outer_iters = *f.outer_iters;
  if (f.inner_iters) cfg.hyper.inner_iters = *f.inner_iters;
  if (f.inner_tol) cfg.hyper.inner_tol = *f.inner_tol;
  if (f.side_step) cfg.side_step = *f.side_step;
  if (f.seed) cfg.seed = *f.seed;
  cfg.kernel.validate();
  cfg.hyper.validate();
  return cfg;
}

struct FitArgs {
  std::string method = "riot";
  bool joint = false;
  std::string config, counts, coupling, users, items, cost_u, cost_v, out, checkpoint, resume;
  bool timing = false;
  ModelFlags flags;
};

int run_fit(const FitArgs& a) {
  if (a.method != "iot" && a.method != "riot") throw InvalidInput("--method must be iot or riot");
  if (a.joint && a.method != "riot") throw InvalidInput("--joint-side-costs requires --method riot");
  if (a.counts.empty() == a.coupling.empty()) throw InvalidInput("exactly one of --counts or --coupling is required");
  const bool relaxed = a.method == "riot";
  if (relaxed && !a.joint) {
    if (a.cost_u.empty()) throw InvalidInput("--cost-u is required for --method riot (or pass --joint-side-costs)");
    if (a.cost_v.empty()) throw InvalidInput("--cost-v is required for --method riot (or pass --joint-side-costs)");
  }
  if (!relaxed && (!a.checkpoint.empty() || !a.resume.empty())) {
    throw InvalidInput("--checkpoint and --resume apply to --method riot only");
  }
  if (a.joint && !a.resume.empty()) throw InvalidInput("--resume is not supported with --joint-side-costs");

  // Read and validate everything before any computation or output.
  const ModelConfig cfg = resolve_model(a.config, a.flags);
  const CouplingMatrix pi_hat = !a.counts.empty() ? normalize_counts(MatchCounts(csv::read_counts(a.counts)))
                                                  : CouplingMatrix(csv::read_matrix(a.coupling));
  const ProfileSet users(csv::read_matrix(a.users));
  const ProfileSet items(csv::read_matrix(a.items));
  if (users.count() != pi_hat.rows() || items.count() != pi_hat.cols()) {
    throw InvalidInput("matching matrix is " + std::to_string(pi_hat.rows()) + "x" + std::to_string(pi_hat.cols()) +
                       " but --users has " + std::to_string(users.count()) + " columns and --items has " +
                       std::to_string(items.count()));
  }
  std::optional<Matrix> cost_u, cost_v;
  if (!a.cost_u.empty()) cost_u = csv::read_matrix(a.cost_u);
  if (!a.cost_v.empty()) cost_v = csv::read_matrix(a.cost_v);
  if (cost_u && (cost_u->rows() != users.count() || cost_u->cols() != users.count())) {
    throw InvalidInput("--cost-u must be " + std::to_string(users.count()) + "x" + std::to_string(users.count()));
  }
  if (cost_v && (cost_v->rows() != items.count() || cost_v->cols() != items.count())) {
    throw InvalidInput("--cost-v must be " + std::to_string(items.count()) + "x" + std::to_string(items.count()));
  }
  RiotFitOptions riot_options;
  if (!a.resume.empty()) riot_options.initial_state = riot_state_from_json(read_json_file(a.resume));
  if (a.out.empty()) throw InvalidInput("--out is required");

  json config_doc = cfg.to_json();
  config_doc["method"] = a.joint ? "joint" : a.method;
  const auto start = std::chrono::steady_clock::now();

  Matrix interaction, plan;
  std::vector<double> trace;
  int iterations = 0;
  std::optional<Matrix> learned_u, learned_v;
  std::optional<json> checkpoint;
  if (!relaxed) {
    const IotFitResult r = iot_fit(pi_hat, users, items, cfg.kernel, cfg.hyper);
    interaction = r.interaction.entries();
    plan = r.fitted_plan.entries();
    trace = r.objective_trace;
    iterations = r.iterations;
  } else if (a.joint) {
    JointFitOptions options;
    options.side_step_size = cfg.side_step;
    options.initial_cost_u = cost_u;
    options.initial_cost_v = cost_v;
    const JointFitResult r = joint_fit(pi_hat, users, items, cfg.kernel, cfg.hyper, options);
    interaction = r.interaction.entries();
    plan = r.fitted_plan.entries();
    trace = r.objective_trace;
    iterations = r.riot.iterations;
    learned_u = r.cost_u.entries();
    learned_v = r.cost_v.entries();
    checkpoint = to_json(r.riot.final_state);
  } else {
    const RiotFitResult r =
        riot_fit(pi_hat, users, items, cfg.kernel, CostMatrix(*cost_u), CostMatrix(*cost_v), cfg.hyper, riot_options);
    interaction = r.interaction.entries();
    plan = r.fitted_plan.entries();
    trace = r.objective_trace;
    iterations = r.iterations;
    checkpoint = to_json(r.final_state);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path out(a.out);
  fs::create_directories(out);
  csv::write_matrix(out / "A.csv", interaction);
  csv::write_matrix(out / "plan.csv", plan);
  csv::write_matrix(out / "trace.csv", column(trace));
  if (learned_u) csv::write_matrix(out / "C_u.csv", *learned_u);
  if (learned_v) csv::write_matrix(out / "C_v.csv", *learned_v);
  json meta{{"method", config_doc["method"]},
            {"seed", cfg.seed},
            {"config_hash", fnv1a_hex(config_doc.dump())},
            {"config", config_doc},
            {"iterations", iterations},
            {"final_objective", trace.empty() ? 0.0 : trace.back()}};
  if (a.timing) meta["wall_time_seconds"] = wall;
  write_json(out / "metadata.json", meta);
  if (!a.checkpoint.empty() && checkpoint) write_json(a.checkpoint, *checkpoint);
  return kExitOk;
}

struct PredictArgs {
  std::string config, interaction, users, items, mu, nu, marginals_from, out;
  ModelFlags flags;
};

int run_predict(const PredictArgs& a) {
  const ModelConfig cfg = resolve_model(a.config, a.flags);
  const InteractionMatrix interaction(csv::read_matrix(a.interaction));
  const ProfileSet users(csv::read_matrix(a.users));
  const ProfileSet items(csv::read_matrix(a.items));
  if (interaction.rows() != users.dim() || interaction.cols() != items.dim()) {
    throw InvalidInput("--A is " + std::to_string(interaction.rows()) + "x" + std::to_string(interaction.cols()) +
                       " but profiles have dimensions " + std::to_string(users.dim()) + " and " +
                       std::to_string(items.dim()));
  }
  std::optional<ProbabilityVector> mu, nu;
  if (!a.marginals_from.empty()) {
    if (!a.mu.empty() || !a.nu.empty()) throw InvalidInput("--marginals-from excludes --mu and --nu");
    const MarginalPair mp = marginals(CouplingMatrix(csv::read_matrix(a.marginals_from)));
    mu = mp.mu;
    nu = mp.nu;
  } else {
    if (a.mu.empty() || a.nu.empty()) throw InvalidInput("--mu and --nu (or --marginals-from) are required");
    mu = ProbabilityVector(read_vector(a.mu));
    nu = ProbabilityVector(read_vector(a.nu));
  }
  if (mu->size() != users.count() || nu->size() != items.count()) {
    throw InvalidInput("marginal sizes do not match the number of users and items");
  }
  if (a.out.empty()) throw InvalidInput("--out is required");
  const SinkhornOptions sk{cfg.hyper.sinkhorn_tol, cfg.hyper.sinkhorn_max_iters};
  const CouplingMatrix plan = predict_matching(interaction, users, items, *mu, *nu, cfg.kernel, cfg.hyper.lambda, sk);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  csv::write_matrix(out, plan.entries());
  return kExitOk;
}

struct SimulateArgs {
  int figure = 2;
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> repetitions, threads;
  bool instance = false;
};

void dump_instance(const fs::path& dir, const SynthInstance& inst) {
  csv::write_matrix(dir / "U.csv", inst.users.features());
  csv::write_matrix(dir / "V.csv", inst.items.features());
  csv::write_matrix(dir / "A0.csv", inst.interaction.entries());
  csv::write_matrix(dir / "mu0.csv", inst.mu0.values());
  csv::write_matrix(dir / "nu0.csv", inst.nu0.values());
  csv::write_matrix(dir / "C_u.csv", inst.cost_u.entries());
  csv::write_matrix(dir / "C_v.csv", inst.cost_v.entries());
  csv::write_matrix(dir / "C0.csv", inst.cost0.entries());
  csv::write_matrix(dir / "pi0.csv", inst.pi0.entries());
}

int run_simulate(const SimulateArgs& a) {
  SynthConfig cfg;
  switch (a.figure) {
    case 2: cfg = figure2_config(); break;
    case 3: cfg = figure3_config(); break;
    case 4: cfg = figure4_config(); break;
    default: throw InvalidInput("--figure must be 2, 3 or 4");
  }
  if (!a.config.empty()) cfg = synth_config_from_json(read_json_file(a.config), cfg);
  if (a.seed) cfg.seed = *a.seed;
  if (a.repetitions) cfg.repetitions = *a.repetitions;
  if (a.threads) cfg.threads = *a.threads;
  cfg.validate();
  if (a.out.empty()) throw InvalidInput("--out is required");
  const fs::path out(a.out);

  json summary;
  if (a.figure == 2) {
    const SweepResult result = robustness_sweep(cfg);
    std::ostringstream csv_text;
    write_sweep_csv(csv_text, result);
    summary = sweep_summary_json(result, cfg);
    fs::create_directories(out);
    write_text(out / "sweep.csv", csv_text.str());
  } else if (a.figure == 3) {
    const ComparisonResult r = single_instance_comparison(cfg);
    fs::create_directories(out);
    csv::write_matrix(out / "pi0.csv", r.pi0.entries());
    csv::write_matrix(out / "pi_hat.csv", r.pi_hat.entries());
    csv::write_matrix(out / "pi_riot.csv", r.pi_riot.entries());
    csv::write_matrix(out / "pi_iot.csv", r.pi_iot.entries());
    json config = to_json(cfg);
    config.erase("threads");
    summary = {{"config", config}, {"kl_hat", r.kl_hat}, {"kl_riot", r.kl_riot}, {"kl_iot", r.kl_iot}};
  } else {
    const CostRecoveryResult r = cost_recovery_experiment(cfg);
    fs::create_directories(out);
    csv::write_matrix(out / "C0.csv", r.cost0.entries());
    csv::write_matrix(out / "C_tilde_riot.csv", r.c_tilde_riot);
    csv::write_matrix(out / "C_tilde_iot.csv", r.c_tilde_iot);
    json config = to_json(cfg);
    config.erase("threads");
    summary = {{"config", config}, {"d_riot", r.d_riot}, {"d_iot", r.d_iot}};
  }
  if (a.instance) dump_instance(out, generate_instance(cfg));
  write_json(out / "summary.json", summary);
  return kExitOk;
}

struct EvalArgs {
  std::string pred, test, cost_true, cost_learned, out;
  double lambda = 1.0;
};

json bound_json(const BoundReport& b) {
  return {{"bound", b.bound_value}, {"observed", b.observed_value}, {"satisfied", b.satisfied}};
}

int run_eval(const EvalArgs& a) {
  const CouplingMatrix pred(csv::read_matrix(a.pred));
  const CouplingMatrix test(csv::read_matrix(a.test));
  if (pred.rows() != test.rows() || pred.cols() != test.cols()) {
    throw InvalidInput("--pred is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                       " but --test is " + std::to_string(test.rows()) + "x" + std::to_string(test.cols()));
  }
  if (a.cost_true.empty() != a.cost_learned.empty()) {
    throw InvalidInput("--cost-true and --cost-learned must be given together");
  }
  std::optional<CostMatrix> c0, c1;
  if (!a.cost_true.empty()) {
    c0 = CostMatrix(csv::read_matrix(a.cost_true));
    c1 = CostMatrix(csv::read_matrix(a.cost_learned));
    if (c0->rows() != pred.rows() || c0->cols() != pred.cols() || c1->rows() != pred.rows() ||
        c1->cols() != pred.cols()) {
      throw InvalidInput("cost matrices must have the shape of the couplings");
    }
    if (!(a.lambda > 0.0)) throw InvalidInput("--lambda must be positive");
  }

  const MatchingErrors e = eval_matching(pred, test);
  json report{{"rmse", e.rmse}, {"mae", e.mae}, {"kl", e.kl},
              {"coupling_gap", bound_json(coupling_gap_check(test, pred))},
              {"iot_error", bound_json(iot_error_check(test, pred))}};
  if (c0) {
    const MarginalPair mt = marginals(test);
    report["cost_shift_distance"] = cost_shift_distance(*c0, *c1);
    report["cost_error_bound"] = bound_json(cost_error_bound_check(*c0, *c1, test, pred, a.lambda));
    report["prediction_error_bound"] = bound_json(prediction_error_bound_check(*c0, *c1, mt.mu, mt.nu, a.lambda));
  }
  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    const fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, text);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust inverse optimal transport: fit, predict, simulate and evaluate matchings."};
  app.require_subcommand(1);

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "learn the interaction matrix from matching data");
  fit_cmd->add_option("--method", fit.method, "iot (fixed marginals) or riot (relaxed marginals)")
      ->check(CLI::IsMember({"iot", "riot"}));
  fit_cmd->add_flag("--joint-side-costs", fit.joint, "also learn the side costs C_u and C_v");
  fit_cmd->add_option("--config", fit.config, "JSON config with kernel, hyper, seed");
  fit_cmd->add_option("--counts", fit.counts, "matching counts CSV (m x n)");
  fit_cmd->add_option("--coupling", fit.coupling, "normalized matching matrix CSV (m x n)");
  fit_cmd->add_option("--users", fit.users, "user profiles CSV (p x m)")->required();
  fit_cmd->add_option("--items", fit.items, "item profiles CSV (q x n)")->required();
  fit_cmd->add_option("--cost-u", fit.cost_u, "user-user cost CSV (m x m)");
  fit_cmd->add_option("--cost-v", fit.cost_v, "item-item cost CSV (n x n)");
  fit_cmd->add_option("--out", fit.out, "output directory")->required();
  fit_cmd->add_option("--checkpoint", fit.checkpoint, "write the final solver state to this JSON file");
  fit_cmd->add_option("--resume", fit.resume, "start from a checkpoint written by --checkpoint");
  fit_cmd->add_flag("--timing", fit.timing, "record wall time in metadata.json");
  fit.flags.attach(fit_cmd, true);

  PredictArgs predict;
  CLI::App* predict_cmd = app.add_subcommand("predict", "predict the matching of new populations");
  predict_cmd->add_option("--config", predict.config, "JSON config with kernel and hyper");
  predict_cmd->add_option("--A", predict.interaction, "learned interaction matrix CSV (p x q)")->required();
  predict_cmd->add_option("--users", predict.users, "user profiles CSV (p x m)")->required();
  predict_cmd->add_option("--items", predict.items, "item profiles CSV (q x n)")->required();
  predict_cmd->add_option("--mu", predict.mu, "user marginal CSV");
  predict_cmd->add_option("--nu", predict.nu, "item marginal CSV");
  predict_cmd->add_option("--marginals-from", predict.marginals_from, "take both marginals from a coupling CSV");
  predict_cmd->add_option("--out", predict.out, "output CSV for the predicted plan")->required();
  predict.flags.attach(predict_cmd, false);

  SimulateArgs simulate;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "run the synthetic experiments");
  simulate_cmd->add_option("--figure", simulate.figure, "2 (robustness sweep), 3 (single instance), 4 (cost recovery)");
  simulate_cmd->add_option("--config", simulate.config, "JSON synth config overriding the figure defaults");
  simulate_cmd->add_option("--seed", simulate.seed, "master seed");
  simulate_cmd->add_option("--repetitions", simulate.repetitions, "noise draws per sigma");
  simulate_cmd->add_option("--threads", simulate.threads, "worker threads (0: RIOT_THREADS or hardware)");
  simulate_cmd->add_flag("--instance", simulate.instance, "also write the generated instance");
  simulate_cmd->add_option("--out", simulate.out, "output directory")->required();

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "compare a predicted and a test matching");
  eval_cmd->add_option("--pred", eval.pred, "predicted coupling CSV")->required();
  eval_cmd->add_option("--test", eval.test, "test coupling CSV")->required();
  eval_cmd->add_option("--cost-true", eval.cost_true, "ground-truth cost CSV");
  eval_cmd->add_option("--cost-learned", eval.cost_learned, "learned cost CSV");
  eval_cmd->add_option("--lambda", eval.lambda, "entropic regularization for the bound checks");
  eval_cmd->add_option("--out", eval.out, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*predict_cmd) return run_predict(predict);
    if (*simulate_cmd) return run_simulate(simulate);
    if (*eval_cmd) return run_eval(eval);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const SolverFailure& e) {
    json diag{{"error", e.what()}, {"diagnostics", e.diagnostics()}};
    std::cerr << diag.dump() << "\n";
    return kExitSolver;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitInput;
}
