#include <doctest.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "riot/analysis.hpp"
#include "riot/synth.hpp"

using namespace riot;

namespace {

SynthConfig small_config() {
  SynthConfig cfg = figure2_config();
  cfg.m = 6;
  cfg.n = 5;
  cfg.p = 3;
  cfg.q = 2;
  cfg.hyper.outer_iters = 5;
  cfg.sigma_grid = {0.0, 1e-2, 1e-1};
  cfg.delta_grid = {0.001, 0.01};
  cfg.repetitions = 3;
  cfg.seed = 42;
  return cfg;
}

std::string sweep_text(const SynthConfig& cfg) {
  const SweepResult r = robustness_sweep(cfg);
  std::ostringstream out;
  write_sweep_csv(out, r);
  out << sweep_summary_json(r, cfg).dump();
  return out.str();
}

}  // namespace

TEST_CASE("stream seeds are distinct and reproducible") {
  CHECK(stream_seed(1, {2, 3}) == stream_seed(1, {2, 3}));
  CHECK(stream_seed(1, {2, 3}) != stream_seed(1, {3, 2}));
  CHECK(stream_seed(1, {2, 3}) != stream_seed(2, {2, 3}));
  CHECK(stream_seed(0, {}) != stream_seed(0, {0}));
}

TEST_CASE("instance shapes and side-cost structure") {
  SynthConfig cfg;
  cfg.seed = 3;
  const SynthInstance inst = generate_instance(cfg);
  CHECK(inst.users.features().rows() == 10);
  CHECK(inst.users.features().cols() == 20);
  CHECK(inst.items.features().rows() == 8);
  CHECK(inst.items.features().cols() == 20);
  CHECK(inst.interaction.rows() == 10);
  CHECK(inst.interaction.cols() == 8);
  CHECK(inst.pi0.rows() == 20);
  CHECK(inst.pi0.cols() == 20);
  CHECK(inst.cost_u.entries().diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(inst.cost_u.entries() == inst.cost_u.entries().transpose());
  CHECK(MetricMatrix::worst_violation(inst.cost_v.entries()) <= 1e-12);
  CHECK((inst.pi0.entries().rowwise().sum() - inst.mu0.values()).lpNorm<1>() <= 1e-9);
  CHECK(inst.mu0.values().minCoeff() > 0.0);

  const SynthInstance again = generate_instance(cfg);
  CHECK(again.pi0.entries() == inst.pi0.entries());
  CHECK(again.users.features() == inst.users.features());
  cfg.seed = 4;
  CHECK(generate_instance(cfg).pi0.entries() != inst.pi0.entries());
}

TEST_CASE("noise model") {
  SynthConfig cfg;
  const SynthInstance inst = generate_instance(cfg);
  CHECK(add_noise(inst.pi0, 0.0, 9).entries() == inst.pi0.entries());

  const CouplingMatrix noisy = add_noise(inst.pi0, 8e-3, 9);
  CHECK(noisy.entries().sum() == doctest::Approx(1.0).epsilon(1e-14));
  // (pi0 + |eps|) / sum(pi0 + |eps|) with eps drawn row-major from the seeded stream.
  Rng rng(9);
  std::normal_distribution<double> eps(0.0, 8e-3);
  Matrix expected = inst.pi0.entries();
  for (Index i = 0; i < expected.rows(); ++i)
    for (Index j = 0; j < expected.cols(); ++j) expected(i, j) += std::abs(eps(rng));
  const double normalizer = expected.sum();
  expected /= normalizer;
  CHECK((noisy.entries() - expected).cwiseAbs().maxCoeff() <= 1e-16);
  CHECK((noisy.entries() * normalizer - inst.pi0.entries()).minCoeff() >= -1e-16);
  CHECK(add_noise(inst.pi0, 8e-3, 9).entries() == noisy.entries());

  const double kl_hat = kl_divergence(inst.pi0, noisy);
  CHECK(kl_hat > 0.02);
  CHECK(kl_hat < 2.0);
  CHECK_THROWS_AS(add_noise(inst.pi0, -1.0, 0), InvalidInput);
}

TEST_CASE("noise level increases the empirical divergence") {
  SynthConfig cfg;
  cfg.seed = 5;
  const SynthInstance inst = generate_instance(cfg);
  std::vector<double> means;
  for (double sigma : cfg.sigma_grid) {
    double sum = 0.0;
    for (int rep = 0; rep < 20; ++rep)
      sum += kl_divergence(inst.pi0, add_noise(inst.pi0, sigma, stream_seed(5, {99, static_cast<std::uint64_t>(rep)})));
    means.push_back(sum / 20.0);
  }
  int inversions = 0;
  for (std::size_t s = 1; s < means.size(); ++s) inversions += means[s] < means[s - 1];
  CHECK(inversions <= 1);
}

TEST_CASE("sweep bookkeeping") {
  SynthConfig cfg = small_config();
  cfg.sigma_grid = {1e-2};
  cfg.delta_grid = {0.01};
  cfg.repetitions = 1;
  const SweepResult one = robustness_sweep(cfg);
  REQUIRE(one.records.size() == 1);
  CHECK(one.cells.size() == 1);
  CHECK(one.cells[0].count == 1);
  CHECK(one.records[0].kl_hat > 0.0);
  CHECK(one.records[0].kl_riot > 0.0);
  CHECK(one.records[0].kl_iot > 0.0);
  CHECK(one.cells[0].std_kl_riot == 0.0);

  const SweepResult r = robustness_sweep(small_config());
  CHECK(r.cells.size() == 6);
  CHECK(r.records.size() + r.failures.size() == 18);
  for (const SweepCell& c : r.cells) {
    if (c.sigma == 0.0) {
      CHECK(c.mean_kl_hat == 0.0);
    }
    CHECK_FALSE(c.incomplete);
  }
  // Noise draws are shared across the relaxation grid.
  for (const SweepRecord& a : r.records)
    for (const SweepRecord& b : r.records)
      if (a.sigma == b.sigma && a.seed == b.seed) {
        CHECK(a.kl_hat == b.kl_hat);
        CHECK(a.kl_iot == b.kl_iot);
      }

  std::ostringstream csv;
  write_sweep_csv(csv, r);
  CHECK(csv.str().rfind("sigma,delta,seed,kl_riot,kl_iot,kl_hat\n", 0) == 0);
  const nlohmann::json summary = sweep_summary_json(r, small_config());
  CHECK(summary.at("cells").size() == 6);
  CHECK_FALSE(summary.at("config").contains("threads"));
}

TEST_CASE("sweep output does not depend on the thread count") {
  SynthConfig cfg = small_config();
  cfg.threads = 1;
  const std::string serial = sweep_text(cfg);
  cfg.threads = 4;
  CHECK(sweep_text(cfg) == serial);
  cfg.threads = 7;
  CHECK(sweep_text(cfg) == serial);
}

TEST_CASE("single-instance comparison and cost recovery are deterministic") {
  SynthConfig cfg = figure3_config();
  cfg.m = 8;
  cfg.n = 7;
  cfg.hyper.outer_iters = 5;
  const ComparisonResult a = single_instance_comparison(cfg), b = single_instance_comparison(cfg);
  CHECK(a.pi_riot.entries() == b.pi_riot.entries());
  CHECK(a.kl_hat == doctest::Approx(kl_divergence(a.pi0, a.pi_hat)));
  CHECK(a.kl_riot == doctest::Approx(kl_divergence(a.pi0, a.pi_riot)));

  SynthConfig c4 = figure4_config();
  c4.m = 8;
  c4.n = 7;
  c4.hyper.outer_iters = 5;
  const CostRecoveryResult r = cost_recovery_experiment(c4);
  CHECK(r.d_riot == doctest::Approx((r.c_tilde_riot - r.cost0.entries()).norm()).epsilon(1e-10));
  CHECK(r.d_iot == doctest::Approx((r.c_tilde_iot - r.cost0.entries()).norm()).epsilon(1e-10));
  CHECK(cost_shift_distance(r.c_tilde_riot, r.cost0.entries()) == doctest::Approx(r.d_riot).epsilon(1e-10));
  CHECK(cost_recovery_experiment(c4).c_tilde_iot == r.c_tilde_iot);
}

TEST_CASE("noise-free cost recovery") {
  SynthConfig cfg = figure4_config();
  cfg.m = 10;
  cfg.n = 10;
  cfg.p = 3;
  cfg.q = 3;
  cfg.kernel = KernelSpec::linear();
  cfg.noise_sigma = 0.0;
  cfg.hyper.step_size = 1000.0;
  cfg.hyper.outer_iters = 500;
  cfg.hyper.inner_iters = 100;
  cfg.seed = 1;
  CHECK(cost_recovery_experiment(cfg).d_riot <= 1e-2);
}

TEST_CASE("configuration documents") {
  SynthConfig cfg = small_config();
  cfg.threads = 3;
  const SynthConfig back = synth_config_from_json(to_json(cfg), SynthConfig{});
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS_WITH_AS(synth_config_from_json(nlohmann::json{{"bogus", 1}}, cfg), doctest::Contains("bogus"),
                       InvalidInput);
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json{{"m", "six"}}, cfg), InvalidInput);
  SynthConfig bad = cfg;
  bad.repetitions = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = cfg;
  bad.sigma_grid = {};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("thread count resolution") {
  CHECK(resolve_thread_count(3) == 3);
  setenv("RIOT_THREADS", "5", 1);
  CHECK(resolve_thread_count(0) == 5);
  setenv("RIOT_THREADS", "junk", 1);
  CHECK(resolve_thread_count(0) >= 1);
  unsetenv("RIOT_THREADS");
}
