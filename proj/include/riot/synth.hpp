#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "riot/core_types.hpp"
#include "riot/kernel_cost.hpp"

namespace riot {

/// Deterministic 64-bit seed for an independent stream, derived from a
/// master seed and a list of stream coordinates by SplitMix64 mixing.
std::uint64_t stream_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coordinates);

using Rng = std::mt19937_64;

struct SynthConfig {
  Index m = 20;
  Index n = 20;
  Index p = 10;
  Index q = 8;
  KernelSpec kernel = KernelSpec::polynomial(0.05, 1.0, 2);
  std::uint64_t seed = 0;
  /// Standard deviation of each coordinate of the planar side-cost points.
  double side_cost_points_stddev = 2.23606797749979;
  double noise_sigma = 0.0;
  HyperParams hyper;
  std::vector<double> delta_grid{0.001, 0.01, 0.05};
  std::vector<double> sigma_grid{1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1};
  int repetitions = 50;
  /// Worker threads for sweeps; 0 reads RIOT_THREADS, then the hardware count.
  int threads = 0;

  void validate() const;
};

/// Settings of the robustness sweep (L = 50, s = 10, K = 20).
SynthConfig figure2_config();
/// Single-instance comparison at sigma = 8e-3, delta = 0.01.
SynthConfig figure3_config();
/// Cost-recovery comparison at sigma = 0.08, delta = 0.001, L = 100, s = 1.
SynthConfig figure4_config();

struct SynthInstance {
  ProfileSet users;
  ProfileSet items;
  InteractionMatrix interaction;
  ProbabilityVector mu0;
  ProbabilityVector nu0;
  CostMatrix cost_u;
  CostMatrix cost_v;
  CostMatrix cost0;
  CouplingMatrix pi0;
  /// Generation attempts consumed (1 unless the first draw failed).
  int attempts = 1;
};

/// Samples an instance from cfg.seed; retries with a new sub-seed (at most
/// five attempts) when the ground-truth plan cannot be computed.
SynthInstance generate_instance(const SynthConfig& cfg);

/// (pi0 + |eps|) / sum(pi0 + |eps|) with eps iid N(0, sigma^2).
CouplingMatrix add_noise(const CouplingMatrix& pi0, double sigma, std::uint64_t seed);

struct SweepRecord {
  double sigma = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  double kl_riot = 0.0;
  double kl_iot = 0.0;
  double kl_hat = 0.0;
};

struct SweepFailure {
  double sigma = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string message;
};

struct SweepCell {
  double sigma = 0.0;
  double delta = 0.0;
  int count = 0;
  int failures = 0;
  double mean_kl_riot = 0.0;
  double std_kl_riot = 0.0;
  double mean_kl_iot = 0.0;
  double std_kl_iot = 0.0;
  double mean_kl_hat = 0.0;
  double std_kl_hat = 0.0;
  /// More than 20% of the repetitions failed.
  bool incomplete = false;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<SweepFailure> failures;
  std::vector<SweepCell> cells;
};

/// For every sigma and repetition: fresh noise on one ground-truth instance,
/// one fixed-marginal fit, and one relaxed fit per delta. Noise draws are
/// shared across the delta grid. Output is independent of the thread count.
SweepResult robustness_sweep(const SynthConfig& cfg);

void write_sweep_csv(std::ostream& out, const SweepResult& result);
nlohmann::json sweep_summary_json(const SweepResult& result, const SynthConfig& cfg);

struct ComparisonResult {
  CouplingMatrix pi0;
  CouplingMatrix pi_hat;
  CouplingMatrix pi_riot;
  CouplingMatrix pi_iot;
  double kl_hat = 0.0;
  double kl_riot = 0.0;
  double kl_iot = 0.0;
};

/// One noisy draw at cfg.noise_sigma, a relaxed fit at cfg.hyper.delta and
/// the fixed-marginal fit, compared through KL(pi0 || .).
ComparisonResult single_instance_comparison(const SynthConfig& cfg);

struct CostRecoveryResult {
  double d_riot = 0.0;
  double d_iot = 0.0;
  CostMatrix cost0;
  /// Learned costs moved along the shift gauge to be closest to cost0.
  Matrix c_tilde_riot;
  Matrix c_tilde_iot;
};

CostRecoveryResult cost_recovery_experiment(const SynthConfig& cfg);

/// Thread count used by sweeps for the given configuration value.
int resolve_thread_count(int requested);

nlohmann::json to_json(const SynthConfig& cfg);
/// Applies the keys present in doc on top of base. Unknown keys are rejected.
SynthConfig synth_config_from_json(const nlohmann::json& doc, SynthConfig base);

}  // namespace riot
