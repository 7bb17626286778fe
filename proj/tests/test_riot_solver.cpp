#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "riot/iot_solver.hpp"
#include "riot/riot_solver.hpp"

using namespace riot;

namespace {

const SinkhornOptions kTight{1e-13, 100000};

Matrix relaxation_m(const Matrix& zk, const Vector& z, const Vector& w, double delta) {
  Matrix m(zk.rows(), zk.cols());
  for (Index i = 0; i < zk.rows(); ++i)
    for (Index j = 0; j < zk.cols(); ++j) m(i, j) = delta * (z[i] + w[j]) * zk(i, j);
  return m;
}

double p_function(double theta, const Vector& eta, const Vector& mu_hat, const Matrix& m, const Matrix& z) {
  const Vector ze = z * eta, me = m * eta;
  double s = 0.0;
  for (Index i = 0; i < ze.size(); ++i) s += mu_hat[i] * ze[i] / (me[i] - theta * ze[i]);
  return s;
}

struct Instance {
  ProfileSet users;
  ProfileSet items;
  InteractionMatrix a0;
  CouplingMatrix pi0;
  CostMatrix cost_u;
  CostMatrix cost_v;
};

Instance forward_instance(Index m, Index n, Index p, Index q, const KernelSpec& k, std::mt19937_64& rng) {
  ProfileSet u(oracle::gaussian_matrix(p, m, rng)), v(oracle::gaussian_matrix(q, n, rng));
  InteractionMatrix a(oracle::gaussian_matrix(p, q, rng));
  CouplingMatrix pi0 = sinkhorn(kernel_cost(u, v, a, k), ProbabilityVector(oracle::simplex_point(m, rng)),
                                ProbabilityVector(oracle::simplex_point(n, rng)), 1.0, kTight)
                           .plan;
  return {std::move(u), std::move(v), std::move(a), std::move(pi0), CostMatrix(oracle::planar_metric(m, rng)),
          CostMatrix(oracle::planar_metric(n, rng))};
}

}  // namespace

TEST_CASE("theta root closed forms") {
  const Matrix one = Matrix::Ones(1, 1);
  CHECK(theta_root_p(Vector::Ones(1), Vector::Ones(1), Matrix::Constant(1, 1, 0.5), one) ==
        doctest::Approx(-0.5).epsilon(1e-14));

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = oracle::uniform_matrix(4, 4, rng, 0.1, 1.0);
    const Vector eta = oracle::uniform_matrix(4, 1, rng, 0.5, 2.0);
    const Vector mu = oracle::simplex_point(4, rng);
    const double c = std::normal_distribution<double>(0.0, 2.0)(rng);
    CHECK(theta_root_p(eta, mu, c * z, z) == doctest::Approx(c - 1.0).epsilon(1e-12));
    CHECK(theta_root_q(eta, mu, c * z.transpose(), z.transpose()) == doctest::Approx(c - 1.0).epsilon(1e-12));
  }
}

TEST_CASE("theta root residual on random instances") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = oracle::uniform_matrix(4, 4, rng, 0.01, 1.0);
    const Matrix m = relaxation_m(z, oracle::gaussian_matrix(4, 1, rng, 3.0), oracle::gaussian_matrix(4, 1, rng, 3.0),
                                  0.5);
    const Vector eta = oracle::uniform_matrix(4, 1, rng, 0.1, 3.0);
    const Vector mu = oracle::simplex_point(4, rng, 0.01);
    const double theta = theta_root_p(eta, mu, m, z);
    CHECK(std::abs(p_function(theta, eta, mu, m, z) - 1.0) <= 1e-10);
    const Vector ratio = (m * eta).cwiseQuotient(z * eta);
    CHECK(theta < ratio.minCoeff());
  }
}

TEST_CASE("inner solve: K = 0 and the scalar problem") {
  std::mt19937_64 rng(3);
  const Matrix z = oracle::uniform_matrix(3, 4, rng, 0.2, 1.0);
  const Matrix m = relaxation_m(z, Vector::Ones(3), Vector::Zero(4), 0.1);
  const InnerSolveResult r0 =
      inner_xi_eta_solve(z, m, oracle::simplex_point(3, rng), oracle::simplex_point(4, rng), 0, 1e-12);
  const double s = 1.0 / std::sqrt(z.sum());
  CHECK((r0.xi - Vector::Constant(3, s)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((r0.eta - Vector::Constant(4, s)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(r0.objective_trace.size() == 1);

  const double zk = 0.3, mk = 0.7;
  const InnerSolveResult r1 = inner_xi_eta_solve(Matrix::Constant(1, 1, zk), Matrix::Constant(1, 1, mk),
                                                 Vector::Ones(1), Vector::Ones(1), 5, 1e-14);
  CHECK(r1.xi[0] * r1.eta[0] == doctest::Approx(1.0 / zk).epsilon(1e-14));
  CHECK(r1.objective_trace.back() == doctest::Approx(std::log(zk) + mk / zk).epsilon(1e-13));
}

TEST_CASE("inner solve reaches the KKT point with a monotone objective") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 3 + trial % 3;
    const Matrix z = (-oracle::uniform_matrix(n, n, rng, 0.0, 2.0)).array().exp().matrix();
    const double delta = std::uniform_real_distribution<double>(0.001, 0.1)(rng);
    const Matrix m = relaxation_m(z, oracle::gaussian_matrix(n, 1, rng), oracle::gaussian_matrix(n, 1, rng), delta);
    const Vector mu = oracle::simplex_point(n, rng), nu = oracle::simplex_point(n, rng);
    const InnerSolveResult r = inner_xi_eta_solve(z, m, mu, nu, 50, 1e-12);
    CHECK(r.kkt_residual <= 1e-8);
    CHECK(std::abs(r.theta1 - r.theta2) <= 1e-6);
    CHECK(r.xi.dot(z * r.eta) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
      CHECK(r.objective_trace[t] <= r.objective_trace[t - 1] + 1e-12);
    // Column stationarity from the second multiplier.
    const Vector col = -nu.cwiseQuotient(r.eta) + m.transpose() * r.xi - r.theta2 * (z.transpose() * r.xi);
    CHECK(col.lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("without relaxation the inner solve is matrix scaling") {
  std::mt19937_64 rng(5);
  const Matrix c = oracle::uniform_matrix(4, 5, rng, 0.0, 2.0);
  const Vector mu = oracle::simplex_point(4, rng), nu = oracle::simplex_point(5, rng);
  const Matrix z = (-c).array().exp().matrix();
  const InnerSolveResult r = inner_xi_eta_solve(z, Matrix::Zero(4, 5), mu, nu, 2000, 1e-13);
  const Matrix plan = r.xi.asDiagonal() * z * r.eta.asDiagonal();
  CHECK((plan - oracle::scaling_plan(c, mu, nu, 1.0)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(r.theta1 == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("riot objective compositions") {
  std::mt19937_64 rng(6);
  const Matrix plan = oracle::positive_coupling(3, 3, rng), pi_hat = oracle::positive_coupling(3, 3, rng);
  RiotState st{InteractionMatrix::zeros(1, 1), Vector::Ones(3), Vector::Ones(3), 0.0, Vector::Zero(3),
               Vector::Zero(3),  CouplingMatrix(plan), 0.0};
  const CostMatrix cu(oracle::planar_metric(3, rng)), cv(oracle::planar_metric(3, rng));
  HyperParams hp;
  hp.delta = 0.0;
  CHECK(riot_objective(st, CouplingMatrix(pi_hat), cu, cv, hp) == doctest::Approx(cross_entropy(pi_hat, plan)));

  hp.delta = 0.3;
  hp.lambda_u = 2.0;
  hp.lambda_v = 0.7;
  const MarginalPair model = marginals(st.current_plan), emp = marginals(CouplingMatrix(pi_hat));
  const double expected = cross_entropy(pi_hat, plan) + 0.3 * (rot_distance(cu, model.mu, emp.mu, 2.0) +
                                                               rot_distance(cv, model.nu, emp.nu, 0.7));
  CHECK(riot_objective(st, CouplingMatrix(pi_hat), cu, cv, hp) == doctest::Approx(expected).epsilon(1e-12));

  // Matching marginals and zero side costs: relaxation terms are -H(diag mass)/lambda.
  RiotState self = st;
  self.current_plan = CouplingMatrix(pi_hat);
  const CostMatrix zero(Matrix::Zero(3, 3));
  const Vector a = emp.mu.values(), b = emp.nu.values();
  const double h_u = entropy(a * a.transpose()), h_v = entropy(b * b.transpose());
  CHECK(riot_objective(self, CouplingMatrix(pi_hat), zero, zero, hp) ==
        doctest::Approx(cross_entropy(pi_hat, pi_hat) - 0.3 * (h_u / 2.0 + h_v / 0.7)).epsilon(1e-10));
}

TEST_CASE("dual update") {
  std::mt19937_64 rng(7);
  const Matrix pi = oracle::positive_coupling(4, 5, rng);
  const CouplingMatrix plan(pi);
  const MarginalPair mp = marginals(plan);
  HyperParams hp;
  const DualUpdate same = dual_update_zw(plan, mp.mu, mp.nu, CostMatrix(Matrix::Zero(4, 4)),
                                         CostMatrix(Matrix::Zero(5, 5)), hp);
  // Zero cost and matching marginals: the plan is mu mu^T, so z is (1/lambda) log mu up to a shift.
  const Vector log_mu = mp.mu.values().array().log().matrix();
  CHECK((same.z - (log_mu.array() - log_mu.mean()).matrix()).cwiseAbs().maxCoeff() <= 1e-9);
  const CouplingMatrix flat(Matrix::Constant(4, 5, 0.05));
  const MarginalPair fp = marginals(flat);
  const DualUpdate uniform = dual_update_zw(flat, fp.mu, fp.nu, CostMatrix(Matrix::Zero(4, 4)),
                                            CostMatrix(Matrix::Zero(5, 5)), hp);
  CHECK(uniform.z.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(uniform.w.cwiseAbs().maxCoeff() <= 1e-12);

  const DualUpdate one = dual_update_zw(CouplingMatrix(Matrix::Ones(1, 1)), ProbabilityVector(Vector::Ones(1)),
                                        ProbabilityVector(Vector::Ones(1)), CostMatrix(Matrix::Zero(1, 1)),
                                        CostMatrix(Matrix::Zero(1, 1)), hp);
  CHECK(one.user_side.plan(0, 0) == doctest::Approx(1.0));

  for (int trial = 0; trial < 20; ++trial) {
    const ProbabilityVector mu_hat(oracle::simplex_point(4, rng)), nu_hat(oracle::simplex_point(5, rng));
    const Matrix cu = oracle::planar_metric(4, rng), cv = oracle::planar_metric(5, rng);
    hp.lambda_u = 0.5 + trial * 0.2;
    hp.lambda_v = 1.5;
    const DualUpdate d = dual_update_zw(plan, mu_hat, nu_hat, CostMatrix(cu), CostMatrix(cv), hp);
    CHECK(std::abs(d.z.mean()) <= 1e-12);
    const double dual_u = rot_dual_objective(d.z, cu, mp.mu.values(), mu_hat.values(), hp.lambda_u);
    CHECK(dual_u == doctest::Approx(rot_distance(CostMatrix(cu), mp.mu, mu_hat, hp.lambda_u)).epsilon(1e-6));
    const double dual_v = rot_dual_objective(d.w, cv, mp.nu.values(), nu_hat.values(), hp.lambda_v);
    CHECK(dual_v == doctest::Approx(rot_distance(CostMatrix(cv), mp.nu, nu_hat, hp.lambda_v)).epsilon(1e-6));
  }
}

TEST_CASE("gradient of the block objective matches central differences") {
  std::mt19937_64 rng(8);
  const std::vector<KernelSpec> ks{KernelSpec::linear(), KernelSpec::polynomial(0.05, 1.0, 2),
                                   KernelSpec::sigmoid(0.5, 0.1)};
  for (int trial = 0; trial < 24; ++trial) {
    const KernelSpec k = ks[trial % 3];
    const Index m = 4, n = 5, p = 3, q = 2;
    const ProfileSet u(oracle::gaussian_matrix(p, m, rng)), v(oracle::gaussian_matrix(q, n, rng));
    const CouplingMatrix pi_hat(oracle::positive_coupling(m, n, rng));
    HyperParams hp;
    hp.lambda = 0.5 + 0.1 * trial;
    hp.delta = std::uniform_real_distribution<double>(0.01, 0.3)(rng);
    hp.inner_iters = 5000;
    hp.inner_tol = 1e-13;
    const Vector z = oracle::gaussian_matrix(m, 1, rng), w = oracle::gaussian_matrix(n, 1, rng);
    const InteractionMatrix a(oracle::gaussian_matrix(p, q, rng, 0.3));

    auto block = [&](const Matrix& x) {
      const CostMatrix c = kernel_cost(u, v, InteractionMatrix(x), k);
      const InnerSolveResult r = inner_xi_eta_solve(c, pi_hat, z, w, hp);
      const Matrix zk = (-hp.lambda * c.entries()).array().exp().matrix();
      return riot_block_objective(r.xi.asDiagonal() * zk * r.eta.asDiagonal(), pi_hat.entries(), z, w, hp.delta);
    };
    const CostMatrix c = kernel_cost(u, v, a, k);
    const InnerSolveResult r = inner_xi_eta_solve(c, pi_hat, z, w, hp);
    const Matrix zk = (-hp.lambda * c.entries()).array().exp().matrix();
    const RiotState st{a, r.xi, r.eta, r.theta1, z, w, CouplingMatrix(r.xi.asDiagonal() * zk * r.eta.asDiagonal()), 0};
    const Matrix grad = riot_grad_A(st, pi_hat, u, v, k, hp);
    const Matrix dir = oracle::gaussian_matrix(p, q, rng);
    const double numeric = oracle::central_difference(block, a.entries(), dir, 1e-5);
    CHECK(oracle::relative_error(grad.cwiseProduct(dir).sum(), numeric) <= 1e-3);
  }
}

TEST_CASE("gradient closed form with identity profiles and stationarity") {
  std::mt19937_64 rng(9);
  const Index m = 3, n = 4;
  const ProfileSet u(Matrix::Identity(m, m)), v(Matrix::Identity(n, n));
  const InteractionMatrix a(oracle::gaussian_matrix(m, n, rng));
  const CouplingMatrix pi_hat(oracle::positive_coupling(m, n, rng));
  HyperParams hp;
  hp.lambda = 1.7;
  hp.delta = 0.05;
  const Vector z = oracle::gaussian_matrix(m, 1, rng), w = oracle::gaussian_matrix(n, 1, rng);
  const InnerSolveResult r = inner_xi_eta_solve(CostMatrix(a.entries()), pi_hat, z, w, hp);
  const Matrix plan = r.xi.asDiagonal() * (-hp.lambda * a.entries()).array().exp().matrix() * r.eta.asDiagonal();
  const RiotState st{a, r.xi, r.eta, r.theta1, z, w, CouplingMatrix(plan), 0};
  const Matrix g = riot_grad_A(st, pi_hat, u, v, KernelSpec::linear(), hp);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      CHECK(g(i, j) == doctest::Approx(hp.lambda * (pi_hat(i, j) + (r.theta1 - hp.delta * (z[i] + w[j])) * plan(i, j)))
                           .epsilon(1e-12));

  // delta = 0, data generated by the model: the gradient vanishes.
  const Instance inst = forward_instance(5, 4, 3, 2, KernelSpec::linear(), rng);
  hp = {};
  hp.delta = 0.0;
  hp.inner_iters = 5000;
  hp.inner_tol = 1e-13;
  const CostMatrix c0 = kernel_cost(inst.users, inst.items, inst.a0, KernelSpec::linear());
  const InnerSolveResult r0 = inner_xi_eta_solve(c0, inst.pi0, Vector::Zero(5), Vector::Zero(4), hp);
  const Matrix p0 = r0.xi.asDiagonal() * (-c0.entries()).array().exp().matrix() * r0.eta.asDiagonal();
  const RiotState s0{inst.a0, r0.xi, r0.eta, r0.theta1, Vector::Zero(5), Vector::Zero(4), CouplingMatrix(p0), 0};
  CHECK(riot_grad_A(s0, inst.pi0, inst.users, inst.items, KernelSpec::linear(), hp).norm() <= 1e-5);

  RiotState broken = s0;
  broken.xi *= 2.0;
  CHECK_THROWS_AS(riot_grad_A(broken, inst.pi0, inst.users, inst.items, KernelSpec::linear(), hp), SolverFailure);
}

TEST_CASE("noise-free data is recovered") {
  std::mt19937_64 rng(10);
  const KernelSpec k = KernelSpec::linear();
  const Instance inst = forward_instance(10, 10, 3, 3, k, rng);
  HyperParams hp;
  hp.delta = 0.001;
  hp.outer_iters = 100;
  hp.step_size = 1000.0;
  const RiotFitResult fit = riot_fit(inst.pi0, inst.users, inst.items, k, inst.cost_u, inst.cost_v, hp);
  CHECK(oracle::kl(inst.pi0.entries(), fit.fitted_plan.entries()) <= 1e-3);
  CHECK(fit.objective_trace.size() <= 101);
  double best = fit.objective_trace.front();
  for (double t : fit.objective_trace) best = std::min(best, t);
  CHECK(fit.state.objective == best);
}

TEST_CASE("without relaxation the alternation follows the fixed-marginal fit") {
  std::mt19937_64 rng(11);
  const KernelSpec k = KernelSpec::polynomial(0.05, 1.0, 2);
  const Instance inst = forward_instance(6, 5, 3, 2, k, rng);
  const CouplingMatrix pi_hat(oracle::positive_coupling(6, 5, rng));
  HyperParams hp;
  hp.delta = 0.0;
  hp.outer_iters = 15;
  hp.inner_iters = 5000;
  hp.inner_tol = 1e-13;
  hp.sinkhorn_tol = 1e-13;
  hp.sinkhorn_max_iters = 100000;
  RiotFitOptions ro;
  ro.keep_history = true;
  IotFitOptions io;
  io.keep_history = true;
  const RiotFitResult r = riot_fit(pi_hat, inst.users, inst.items, k, inst.cost_u, inst.cost_v, hp, ro);
  const IotFitResult i = iot_fit(pi_hat, inst.users, inst.items, k, hp, io);
  REQUIRE(r.history.size() == i.history.size());
  for (std::size_t t = 0; t < r.history.size(); ++t) CHECK((r.history[t] - i.history[t]).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((r.fitted_plan.entries() - i.fitted_plan.entries()).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("zero outer iterations evaluates the initial point only") {
  std::mt19937_64 rng(12);
  const Instance inst = forward_instance(4, 4, 2, 2, KernelSpec::linear(), rng);
  HyperParams hp;
  hp.outer_iters = 0;
  const RiotFitResult r = riot_fit(inst.pi0, inst.users, inst.items, KernelSpec::linear(), inst.cost_u, inst.cost_v, hp);
  CHECK(r.objective_trace.size() == 1);
  CHECK(r.interaction.entries() == Matrix::Zero(2, 2));
}

TEST_CASE("checkpoint round trip and resume") {
  std::mt19937_64 rng(13);
  const KernelSpec k = KernelSpec::linear();
  const Instance inst = forward_instance(5, 4, 2, 2, k, rng);
  HyperParams hp;
  hp.outer_iters = 5;
  const RiotFitResult r = riot_fit(inst.pi0, inst.users, inst.items, k, inst.cost_u, inst.cost_v, hp);
  const nlohmann::json doc = to_json(r.final_state);
  const RiotState back = riot_state_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.interaction.entries() == r.final_state.interaction.entries());
  CHECK(back.xi == r.final_state.xi);
  CHECK(back.w == r.final_state.w);
  CHECK(back.theta == r.final_state.theta);
  CHECK(back.current_plan.entries() == r.final_state.current_plan.entries());

  RiotFitOptions opts;
  opts.initial_state = back;
  const RiotFitResult resumed = riot_fit(inst.pi0, inst.users, inst.items, k, inst.cost_u, inst.cost_v, hp, opts);
  CHECK(resumed.objective_trace.front() <= r.objective_trace.front());

  nlohmann::json bad = doc;
  bad["xi"][0] = -1.0;
  CHECK_THROWS_AS(riot_state_from_json(bad), InvalidInput);
  bad = doc;
  bad.erase("eta");
  CHECK_THROWS_AS(riot_state_from_json(bad), InvalidInput);
}

TEST_CASE("prediction") {
  std::mt19937_64 rng(14);
  const KernelSpec k = KernelSpec::polynomial(0.05, 1.0, 2);
  const ProfileSet u(oracle::gaussian_matrix(3, 5, rng)), v(oracle::gaussian_matrix(2, 4, rng));
  const ProbabilityVector mu(oracle::simplex_point(5, rng)), nu(oracle::simplex_point(4, rng));
  const CouplingMatrix prod = predict_matching(InteractionMatrix::zeros(3, 2), u, v, mu, nu, k, 1.0);
  CHECK((prod.entries() - mu.values() * nu.values().transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  const InteractionMatrix a(oracle::gaussian_matrix(3, 2, rng));
  const ProfileSet single(oracle::gaussian_matrix(3, 1, rng));
  const CouplingMatrix row = predict_matching(a, single, v, ProbabilityVector(Vector::Ones(1)), nu, k, 1.0);
  CHECK((row.entries().row(0).transpose() - nu.values()).cwiseAbs().maxCoeff() <= 1e-9);

  const CouplingMatrix train = sinkhorn(kernel_cost(u, v, a, k), mu, nu, 1.0).plan;
  const MarginalPair mp = marginals(train);
  CHECK((predict_matching(a, u, v, mp.mu, mp.nu, k, 1.0).entries() - train.entries()).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(predict_matching(a, u, v, nu, mu, k, 1.0), InvalidInput);
}
