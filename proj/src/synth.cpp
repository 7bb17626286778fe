#include "riot/synth.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <thread>

#include "riot/analysis.hpp"
#include "riot/config_json.hpp"
#include "riot/csv_io.hpp"
#include "riot/entropic_ot.hpp"
#include "riot/iot_solver.hpp"
#include "riot/riot_solver.hpp"

namespace riot {
namespace {

constexpr int kMaxInstanceAttempts = 5;
constexpr double kIncompleteFailureRate = 0.2;

enum StreamTag : std::uint64_t { kInstanceStream = 1, kSweepNoiseStream = 2, kSingleNoiseStream = 3, kRecoveryStream = 4 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Matrix normal_matrix(Rng& rng, Index rows, Index cols, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = dist(rng);
  }
  return out;
}

Vector dirichlet(Rng& rng, Index size, double concentration) {
  std::gamma_distribution<double> dist(concentration, 1.0);
  Vector v(size);
  for (Index i = 0; i < size; ++i) v[i] = dist(rng);
  return v / v.sum();
}

Matrix euclidean_distances(const Matrix& points) {
  const Index d = points.rows();
  Matrix out = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = i + 1; j < d; ++j) out(i, j) = out(j, i) = (points.row(i) - points.row(j)).norm();
  }
  return out;
}

SynthInstance draw_instance(const SynthConfig& cfg, std::uint64_t seed, int attempt) {
  Rng rng(seed);
  ProfileSet users(normal_matrix(rng, cfg.p, cfg.m));
  ProfileSet items(normal_matrix(rng, cfg.q, cfg.n));
  InteractionMatrix a0(normal_matrix(rng, cfg.p, cfg.q));
  ProbabilityVector mu0(dirichlet(rng, cfg.m, 5.0));
  ProbabilityVector nu0(dirichlet(rng, cfg.n, 5.0));
  CostMatrix cost_u(euclidean_distances(normal_matrix(rng, cfg.m, 2, cfg.side_cost_points_stddev)));
  CostMatrix cost_v(euclidean_distances(normal_matrix(rng, cfg.n, 2, cfg.side_cost_points_stddev)));
  CostMatrix cost0 = kernel_cost(users, items, a0, cfg.kernel);
  const SinkhornOptions sk{cfg.hyper.sinkhorn_tol, cfg.hyper.sinkhorn_max_iters};
  CouplingMatrix pi0 = sinkhorn(cost0, mu0, nu0, cfg.hyper.lambda, sk).plan;
  if (!(pi0.entries().array() > 0.0).all()) throw SolverFailure("ground-truth plan has zero entries");
  return {std::move(users), std::move(items), std::move(a0),    std::move(mu0), std::move(nu0),
          std::move(cost_u), std::move(cost_v), std::move(cost0), std::move(pi0), attempt};
}

HyperParams with_delta(HyperParams p, double delta) {
  p.delta = delta;
  return p;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Outcome of one (sigma, repetition) task across the whole delta grid.
struct TaskOutcome {
  std::uint64_t seed = 0;
  double kl_hat = 0.0;
  double kl_iot = 0.0;
  std::string iot_error;
  std::vector<double> kl_riot;
  std::vector<std::string> riot_error;
};

TaskOutcome run_task(const SynthConfig& cfg, const SynthInstance& inst, std::size_t sigma_index, int rep) {
  TaskOutcome out;
  const double sigma = cfg.sigma_grid[sigma_index];
  out.seed = stream_seed(cfg.seed, {kSweepNoiseStream, sigma_index, static_cast<std::uint64_t>(rep)});
  const CouplingMatrix pi_hat = add_noise(inst.pi0, sigma, out.seed);
  out.kl_hat = kl_divergence(inst.pi0, pi_hat);
  try {
    const IotFitResult iot = iot_fit(pi_hat, inst.users, inst.items, cfg.kernel, cfg.hyper);
    out.kl_iot = kl_divergence(inst.pi0, iot.fitted_plan);
    if (!std::isfinite(out.kl_iot)) out.iot_error = "non-finite KL";
  } catch (const Error& e) {
    out.iot_error = e.what();
  }
  for (double delta : cfg.delta_grid) {
    double kl = 0.0;
    std::string error;
    try {
      const RiotFitResult fit =
          riot_fit(pi_hat, inst.users, inst.items, cfg.kernel, inst.cost_u, inst.cost_v, with_delta(cfg.hyper, delta));
      kl = kl_divergence(inst.pi0, fit.fitted_plan);
      if (!std::isfinite(kl)) error = "non-finite KL";
    } catch (const Error& e) {
      error = e.what();
    }
    out.kl_riot.push_back(kl);
    out.riot_error.push_back(error);
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

nlohmann::json vector_json(const std::vector<double>& v) { return v; }

}  // namespace

std::uint64_t stream_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coordinates) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t c : coordinates) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

void SynthConfig::validate() const {
  if (m < 1 || n < 1 || p < 1 || q < 1) throw InvalidInput("synth config: m, n, p, q must be positive");
  kernel.validate();
  hyper.validate();
  if (!(side_cost_points_stddev > 0.0)) throw InvalidInput("synth config: side_cost_points_stddev must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidInput("synth config: noise_sigma must be nonnegative");
  }
  if (delta_grid.empty() || sigma_grid.empty()) throw InvalidInput("synth config: grids must be non-empty");
  for (double d : delta_grid) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidInput("synth config: delta_grid entries must be nonnegative");
  }
  for (double s : sigma_grid) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("synth config: sigma_grid entries must be nonnegative");
  }
  if (repetitions < 1) throw InvalidInput("synth config: repetitions must be at least 1");
  if (threads < 0) throw InvalidInput("synth config: threads must be nonnegative");
}

SynthConfig figure2_config() {
  SynthConfig cfg;
  cfg.hyper.outer_iters = 50;
  cfg.hyper.step_size = 10.0;
  cfg.hyper.inner_iters = 20;
  cfg.hyper.delta = 0.01;
  return cfg;
}

SynthConfig figure3_config() {
  SynthConfig cfg = figure2_config();
  cfg.noise_sigma = 8e-3;
  cfg.hyper.delta = 0.01;
  cfg.delta_grid = {0.01};
  cfg.sigma_grid = {8e-3};
  cfg.repetitions = 1;
  return cfg;
}

SynthConfig figure4_config() {
  SynthConfig cfg = figure2_config();
  cfg.noise_sigma = 0.08;
  cfg.hyper.delta = 0.001;
  cfg.hyper.outer_iters = 100;
  cfg.hyper.step_size = 1.0;
  cfg.delta_grid = {0.001};
  cfg.sigma_grid = {0.08};
  cfg.repetitions = 1;
  return cfg;
}

SynthInstance generate_instance(const SynthConfig& cfg) {
  cfg.validate();
  std::string last_error;
  for (int attempt = 1; attempt <= kMaxInstanceAttempts; ++attempt) {
    const std::uint64_t seed = stream_seed(cfg.seed, {kInstanceStream, static_cast<std::uint64_t>(attempt - 1)});
    try {
      return draw_instance(cfg, seed, attempt);
    } catch (const SolverFailure& e) {
      last_error = e.what();
    }
  }
  throw SolverFailure("could not generate a solvable instance in 5 attempts", {{"last_error", last_error}});
}

CouplingMatrix add_noise(const CouplingMatrix& pi0, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("noise sigma must be nonnegative");
  if (sigma == 0.0) return pi0;
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  Matrix noisy = pi0.entries();
  for (Index i = 0; i < noisy.rows(); ++i) {
    for (Index j = 0; j < noisy.cols(); ++j) noisy(i, j) += std::abs(dist(rng));
  }
  noisy /= noisy.sum();
  return CouplingMatrix(std::move(noisy));
}

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RIOT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

SweepResult robustness_sweep(const SynthConfig& cfg) {
  cfg.validate();
  const SynthInstance inst = generate_instance(cfg);
  const std::size_t reps = static_cast<std::size_t>(cfg.repetitions);
  const std::size_t tasks = cfg.sigma_grid.size() * reps;
  std::vector<TaskOutcome> outcomes(tasks);
  parallel_for(tasks, resolve_thread_count(cfg.threads),
               [&](std::size_t t) { outcomes[t] = run_task(cfg, inst, t / reps, static_cast<int>(t % reps)); });

  SweepResult result;
  for (std::size_t s = 0; s < cfg.sigma_grid.size(); ++s) {
    for (std::size_t d = 0; d < cfg.delta_grid.size(); ++d) {
      SweepCell cell;
      cell.sigma = cfg.sigma_grid[s];
      cell.delta = cfg.delta_grid[d];
      std::vector<double> riot, iot, hat;
      for (std::size_t r = 0; r < reps; ++r) {
        const TaskOutcome& o = outcomes[s * reps + r];
        std::string error = !o.iot_error.empty() ? "fixed-marginal fit: " + o.iot_error
                            : !o.riot_error[d].empty() ? "relaxed fit: " + o.riot_error[d]
                                                       : std::string();
        if (!error.empty()) {
          result.failures.push_back({cell.sigma, cell.delta, o.seed, std::move(error)});
          ++cell.failures;
          continue;
        }
        result.records.push_back({cell.sigma, cell.delta, o.seed, o.kl_riot[d], o.kl_iot, o.kl_hat});
        riot.push_back(o.kl_riot[d]);
        iot.push_back(o.kl_iot);
        hat.push_back(o.kl_hat);
      }
      cell.count = static_cast<int>(riot.size());
      mean_std(riot, cell.mean_kl_riot, cell.std_kl_riot);
      mean_std(iot, cell.mean_kl_iot, cell.std_kl_iot);
      mean_std(hat, cell.mean_kl_hat, cell.std_kl_hat);
      cell.incomplete = static_cast<double>(cell.failures) > kIncompleteFailureRate * static_cast<double>(reps);
      result.cells.push_back(cell);
    }
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "sigma,delta,seed,kl_riot,kl_iot,kl_hat\n";
  for (const SweepRecord& r : result.records) {
    out << csv::format_double(r.sigma) << ',' << csv::format_double(r.delta) << ',' << r.seed << ','
        << csv::format_double(r.kl_riot) << ',' << csv::format_double(r.kl_iot) << ','
        << csv::format_double(r.kl_hat) << '\n';
  }
}

nlohmann::json sweep_summary_json(const SweepResult& result, const SynthConfig& cfg) {
  nlohmann::json cells = nlohmann::json::array();
  for (const SweepCell& c : result.cells) {
    cells.push_back({{"sigma", c.sigma},
                     {"delta", c.delta},
                     {"count", c.count},
                     {"failures", c.failures},
                     {"incomplete", c.incomplete},
                     {"mean_kl_riot", c.mean_kl_riot},
                     {"std_kl_riot", c.std_kl_riot},
                     {"mean_kl_iot", c.mean_kl_iot},
                     {"std_kl_iot", c.std_kl_iot},
                     {"mean_kl_hat", c.mean_kl_hat},
                     {"std_kl_hat", c.std_kl_hat}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const SweepFailure& f : result.failures) {
    failures.push_back({{"sigma", f.sigma}, {"delta", f.delta}, {"seed", f.seed}, {"message", f.message}});
  }
  nlohmann::json config = to_json(cfg);
  config.erase("threads");
  return {{"config", config}, {"cells", cells}, {"failures", failures}};
}

ComparisonResult single_instance_comparison(const SynthConfig& cfg) {
  cfg.validate();
  const SynthInstance inst = generate_instance(cfg);
  CouplingMatrix pi_hat = add_noise(inst.pi0, cfg.noise_sigma, stream_seed(cfg.seed, {kSingleNoiseStream}));
  const RiotFitResult riot = riot_fit(pi_hat, inst.users, inst.items, cfg.kernel, inst.cost_u, inst.cost_v, cfg.hyper);
  const IotFitResult iot = iot_fit(pi_hat, inst.users, inst.items, cfg.kernel, cfg.hyper);
  ComparisonResult out{inst.pi0, pi_hat, riot.fitted_plan, iot.fitted_plan, 0.0, 0.0, 0.0};
  out.kl_hat = kl_divergence(inst.pi0, pi_hat);
  out.kl_riot = kl_divergence(inst.pi0, riot.fitted_plan);
  out.kl_iot = kl_divergence(inst.pi0, iot.fitted_plan);
  return out;
}

CostRecoveryResult cost_recovery_experiment(const SynthConfig& cfg) {
  cfg.validate();
  const SynthInstance inst = generate_instance(cfg);
  const CouplingMatrix pi_hat = add_noise(inst.pi0, cfg.noise_sigma, stream_seed(cfg.seed, {kRecoveryStream}));
  const RiotFitResult riot = riot_fit(pi_hat, inst.users, inst.items, cfg.kernel, inst.cost_u, inst.cost_v, cfg.hyper);
  const IotFitResult iot = iot_fit(pi_hat, inst.users, inst.items, cfg.kernel, cfg.hyper);
  const Matrix c_riot = kernel_cost(inst.users, inst.items, riot.interaction, cfg.kernel).entries();
  const Matrix c_iot = kernel_cost(inst.users, inst.items, iot.interaction, cfg.kernel).entries();
  return {cost_shift_distance(c_riot, inst.cost0.entries()), cost_shift_distance(c_iot, inst.cost0.entries()),
          inst.cost0, shift_align(c_riot, inst.cost0.entries()), shift_align(c_iot, inst.cost0.entries())};
}

nlohmann::json to_json(const SynthConfig& cfg) {
  return {{"m", cfg.m},
          {"n", cfg.n},
          {"p", cfg.p},
          {"q", cfg.q},
          {"kernel", to_json(cfg.kernel)},
          {"seed", cfg.seed},
          {"side_cost_points_stddev", cfg.side_cost_points_stddev},
          {"noise_sigma", cfg.noise_sigma},
          {"hyper", to_json(cfg.hyper)},
          {"delta_grid", vector_json(cfg.delta_grid)},
          {"sigma_grid", vector_json(cfg.sigma_grid)},
          {"repetitions", cfg.repetitions},
          {"threads", cfg.threads}};
}

SynthConfig synth_config_from_json(const nlohmann::json& doc, SynthConfig cfg) {
  if (!doc.is_object()) throw InvalidInput("synth config must be a JSON object");
  try {
    for (const auto& item : doc.items()) {
      const std::string& key = item.key();
      const nlohmann::json& v = item.value();
      if (key == "m") cfg.m = v.get<Index>();
      else if (key == "n") cfg.n = v.get<Index>();
      else if (key == "p") cfg.p = v.get<Index>();
      else if (key == "q") cfg.q = v.get<Index>();
      else if (key == "kernel") cfg.kernel = kernel_spec_from_json(v, cfg.kernel);
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "side_cost_points_stddev") cfg.side_cost_points_stddev = v.get<double>();
      else if (key == "noise_sigma") cfg.noise_sigma = v.get<double>();
      else if (key == "hyper") cfg.hyper = hyper_params_from_json(v, cfg.hyper);
      else if (key == "delta_grid") cfg.delta_grid = v.get<std::vector<double>>();
      else if (key == "sigma_grid") cfg.sigma_grid = v.get<std::vector<double>>();
      else if (key == "repetitions") cfg.repetitions = v.get<int>();
      else if (key == "threads") cfg.threads = v.get<int>();
      else throw InvalidInput("unknown synth config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace riot
