#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "topoguard/errors.hpp"
#include "topoguard/rng.hpp"
#include "topoguard/transport.hpp"

using namespace topoguard;

namespace {

Eigen::MatrixXd random_cost(int n, int m, uint64_t seed) {
  CounterRng rng(seed, 0);
  Eigen::MatrixXd c(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) c(i, j) = rng.next_uniform() * 4.0;
  }
  return c;
}

Eigen::VectorXd random_simplex(int n, uint64_t seed, uint64_t stream) {
  CounterRng rng(seed, stream);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = 0.05 + rng.next_uniform();
  return w / w.sum();
}

Eigen::VectorXd uniform_simplex(int n) {
  return Eigen::VectorXd::Constant(n, 1.0 / n);
}

double residual_of(const Eigen::MatrixXd& t, const Eigen::VectorXd& p,
                   const Eigen::VectorXd& q) {
  double row = (t.rowwise().sum() - p).cwiseAbs().sum();
  double col = (t.colwise().sum().transpose() - q).cwiseAbs().sum();
  return std::max(row, col);
}

// Reference log-domain Sinkhorn, written independently of the library.
// Converges to the unique entropic optimum, so couplings must agree with
// the library's regardless of iteration schedule.
Eigen::MatrixXd reference_entropic_plan(const Eigen::MatrixXd& c,
                                        const Eigen::VectorXd& p,
                                        const Eigen::VectorXd& q, double eps,
                                        int iters) {
  const int n = static_cast<int>(c.rows());
  const int m = static_cast<int>(c.cols());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  auto lse = [](const Eigen::VectorXd& x) {
    double mx = x.maxCoeff();
    return mx + std::log((x.array() - mx).exp().sum());
  };
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd row = (g - c.row(i).transpose()) / eps;
      f(i) = eps * std::log(p(i)) - eps * lse(row);
    }
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd col = (f - c.col(j)) / eps;
      g(j) = eps * std::log(q(j)) - eps * lse(col);
    }
  }
  Eigen::MatrixXd t(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      t(i, j) = std::exp((f(i) + g(j) - c(i, j)) / eps);
    }
  }
  return t;
}

// Best assignment cost over all permutations. With uniform marginals on a
// square problem the unregularized optimum is a permutation matrix / n.
double best_permutation_cost(const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(c.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += c(i, perm[i]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

// 2 x 2 transport in closed form: the plan is a one-parameter family and
// the linear cost is optimized at an endpoint.
double closed_form_2x2(const Eigen::MatrixXd& c, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q) {
  double lo = std::max(0.0, p(0) - q(1));
  double hi = std::min(p(0), q(0));
  auto cost_at = [&](double t) {
    return c(0, 0) * t + c(0, 1) * (p(0) - t) + c(1, 0) * (q(0) - t) +
           c(1, 1) * (q(1) - p(0) + t);
  };
  return std::min(cost_at(lo), cost_at(hi));
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("sinkhorn meets marginals on random problems, both paths") {
  for (int trial = 0; trial < 40; ++trial) {
    int n = 2 + trial % 7;
    int m = 2 + (trial / 2) % 6;
    TransportProblem prob;
    prob.cost = random_cost(n, m, 100 + trial);
    prob.p = random_simplex(n, 200 + trial, 1);
    prob.q = random_simplex(m, 200 + trial, 2);
    prob.epsilon = (trial % 2 == 0) ? 0.1 : 0.01;  // plain and log-domain
    TransportPlan plan = sinkhorn(prob, 1e-8, 50000);
    CAPTURE(trial);
    CHECK(plan.marginal_residual <= 1e-8);
    CHECK(residual_of(plan.coupling, prob.p, prob.q) <= 1e-8 + 1e-12);
    CHECK(plan.coupling.minCoeff() >= 0.0);
    CHECK(plan.iterations_used >= 1);
    CHECK(plan.transport_cost ==
          doctest::Approx((plan.coupling.array() * prob.cost.array()).sum())
              .epsilon(1e-12));
  }
}

TEST_CASE("coupling matches an independent log-domain solver") {
  for (int trial = 0; trial < 5; ++trial) {
    int n = 3 + trial;
    TransportProblem prob;
    prob.cost = random_cost(n, n + 1, 300 + trial);
    prob.p = random_simplex(n, 400 + trial, 1);
    prob.q = random_simplex(n + 1, 400 + trial, 2);
    prob.epsilon = 0.05 + 0.03 * trial;
    TransportPlan plan = sinkhorn(prob, 1e-12, 200000);
    Eigen::MatrixXd ref = reference_entropic_plan(prob.cost, prob.p, prob.q,
                                                  prob.epsilon, 4000);
    CAPTURE(trial);
    CHECK((plan.coupling - ref).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("objective includes the entropy term and bounds the exact cost") {
  // At the entropic optimum the full objective (with its negative entropy
  // part) never exceeds the unregularized optimum.
  for (int trial = 0; trial < 30; ++trial) {
    TransportProblem prob;
    prob.cost = random_cost(3, 3, 500 + trial);
    prob.p = random_simplex(3, 600 + trial, 1);
    prob.q = random_simplex(3, 600 + trial, 2);
    prob.epsilon = 0.02 + 0.02 * (trial % 5);
    TransportPlan plan = sinkhorn(prob, 1e-10, 100000);
    double exact = exact_ot_cost(prob.cost, prob.p, prob.q);
    CAPTURE(trial);
    CHECK(plan.objective <= exact + 1e-9);
    // The plain transport cost of the smoothed plan sits at or above the
    // exact optimum up to the marginal slack.
    CHECK(plan.transport_cost >=
          exact - prob.cost.maxCoeff() * plan.marginal_residual - 1e-9);

    double entropy = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double v = plan.coupling(i, j);
        if (v > 0.0) entropy += v * (std::log(v) - 1.0);
      }
    }
    CHECK(plan.objective ==
          doctest::Approx(plan.transport_cost + prob.epsilon * entropy)
              .epsilon(1e-10));
  }
}

TEST_CASE("marginal penalty adds a constant KL term to the objective") {
  TransportProblem prob;
  prob.cost = random_cost(3, 3, 700);
  prob.p = random_simplex(3, 701, 1);
  prob.q = random_simplex(3, 701, 2);
  prob.epsilon = 0.1;
  TransportPlan base = sinkhorn(prob, 1e-9, 50000);
  prob.lambda_marginal = 2.5;
  TransportPlan shifted = sinkhorn(prob, 1e-9, 50000);
  CHECK(shifted.objective ==
        doctest::Approx(base.objective + 2.5 * marginal_kl(prob.p, prob.q))
            .epsilon(1e-9));
  CHECK((shifted.coupling - base.coupling).cwiseAbs().maxCoeff() < 1e-12);

  // The penalty is only defined when the two histograms share a length.
  prob.cost = random_cost(3, 4, 702);
  prob.q = random_simplex(4, 701, 3);
  CHECK_THROWS_AS(sinkhorn(prob, 1e-9, 1000), InvalidParameter);
}

TEST_CASE("exact solver equals a permutation-enumeration oracle") {
  for (int trial = 0; trial < 25; ++trial) {
    int n = 3 + trial % 4;  // up to 6 x 6, 720 permutations
    Eigen::MatrixXd c = random_cost(n, n, 800 + trial);
    Eigen::VectorXd u = uniform_simplex(n);
    double exact = exact_ot_cost(c, u, u);
    CAPTURE(trial);
    CHECK(exact == doctest::Approx(best_permutation_cost(c)).epsilon(1e-10));

    Eigen::MatrixXd plan = exact_ot_plan(c, u, u);
    CHECK(residual_of(plan, u, u) < 1e-12);
    CHECK(plan.minCoeff() >= -1e-15);
    CHECK((plan.array() * c.array()).sum() ==
          doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("exact solver equals the 2x2 closed form") {
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd c = random_cost(2, 2, 900 + trial);
    Eigen::VectorXd p = random_simplex(2, 950 + trial, 1);
    Eigen::VectorXd q = random_simplex(2, 950 + trial, 2);
    CAPTURE(trial);
    CHECK(exact_ot_cost(c, p, q) ==
          doctest::Approx(closed_form_2x2(c, p, q)).epsilon(1e-12));
  }
}

TEST_CASE("exact cost never exceeds marginal-preserving perturbations") {
  CounterRng rng(41, 7);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 4, m = 5;
    Eigen::MatrixXd c = random_cost(n, m, 1000 + trial);
    Eigen::VectorXd p = random_simplex(n, 1050 + trial, 1);
    Eigen::VectorXd q = random_simplex(m, 1050 + trial, 2);
    double exact = exact_ot_cost(c, p, q);

    // Walk feasible couplings by cycling mass between row and column pairs
    // starting from the product plan; every one stays feasible.
    Eigen::MatrixXd t = p * q.transpose();
    for (int step = 0; step < 50; ++step) {
      int i1 = static_cast<int>(rng.next_below(n));
      int i2 = static_cast<int>(rng.next_below(n));
      int j1 = static_cast<int>(rng.next_below(m));
      int j2 = static_cast<int>(rng.next_below(m));
      if (i1 == i2 || j1 == j2) continue;
      double cap = std::min(t(i1, j2), t(i2, j1));
      double delta = cap * rng.next_uniform();
      t(i1, j1) += delta;
      t(i2, j2) += delta;
      t(i1, j2) -= delta;
      t(i2, j1) -= delta;
      double feasible_cost = (t.array() * c.array()).sum();
      REQUIRE(residual_of(t, p, q) < 1e-12);
      CHECK(exact <= feasible_cost + 1e-12);
    }
  }
}

TEST_CASE("marginal kl hand values and guards") {
  Eigen::VectorXd p(2), q(2);
  p << 0.5, 0.5;
  q << 0.9, 0.1;
  CHECK(marginal_kl(p, q) == doctest::Approx(std::log(5.0 / 3.0)).epsilon(1e-14));
  CHECK(marginal_kl(p, q) == doctest::Approx(0.5108256237659907).epsilon(1e-12));
  CHECK(marginal_kl(p, p) == doctest::Approx(0.0).epsilon(1e-15));

  Eigen::VectorXd with_zero(3), support(3);
  with_zero << 0.0, 0.4, 0.6;
  support << 0.2, 0.4, 0.4;
  // p_i = 0 terms contribute nothing.
  CHECK(marginal_kl(with_zero, support) ==
        doctest::Approx(0.4 * std::log(1.0) + 0.6 * std::log(0.6 / 0.4))
            .epsilon(1e-14));

  Eigen::VectorXd bad_support(3);
  bad_support << 0.6, 0.4, 0.0;
  CHECK_THROWS_AS(marginal_kl(with_zero, bad_support), InvalidMarginals);
  Eigen::VectorXd two(2);
  two << 0.5, 0.5;
  CHECK_THROWS_AS(marginal_kl(with_zero, two), InvalidMarginals);
}

TEST_CASE("input validation across the transport api") {
  TransportProblem prob;
  prob.cost = random_cost(3, 3, 1100);
  prob.p = random_simplex(3, 1101, 1);
  prob.q = random_simplex(3, 1101, 2);

  TransportProblem bad = prob;
  bad.epsilon = 1e-12;
  CHECK_THROWS_AS(sinkhorn(bad), NumericUnderflow);

  bad = prob;
  bad.p(0) += 0.2;
  CHECK_THROWS_AS(sinkhorn(bad), InvalidMarginals);

  bad = prob;
  bad.p(0) = -0.1;
  bad.p(1) += 0.1;
  CHECK_THROWS_AS(sinkhorn(bad), InvalidMarginals);

  bad = prob;
  bad.cost(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sinkhorn(bad), InvalidInput);

  bad = prob;
  bad.q = random_simplex(4, 1102, 3);
  CHECK_THROWS_AS(sinkhorn(bad), InvalidMarginals);

  bad = prob;
  bad.lambda_marginal = -1.0;
  CHECK_THROWS_AS(sinkhorn(bad), InvalidParameter);

  CHECK_THROWS_AS(sinkhorn(prob, 0.0), InvalidParameter);
  CHECK_THROWS_AS(sinkhorn(prob, 1e-6, 0), InvalidParameter);

  // Iteration starvation surfaces as ConvergenceFailure with a residual.
  try {
    sinkhorn(prob, 1e-14, 1);
    FAIL("expected ConvergenceFailure");
  } catch (const ConvergenceFailure& e) {
    CHECK(e.residual() > 0.0);
    CHECK(std::isfinite(e.residual()));
  }

  Eigen::MatrixXd big = Eigen::MatrixXd::Ones(9, 9);
  CHECK_THROWS_AS(
      exact_ot_cost(big, uniform_simplex(9), uniform_simplex(9)), SizeLimit);
}

TEST_CASE("solver handles structured corner cases") {
  // Identity cost with matched marginals: optimal plan is diagonal.
  Eigen::MatrixXd c = Eigen::MatrixXd::Ones(4, 4);
  c.diagonal().setZero();
  Eigen::VectorXd u = uniform_simplex(4);
  CHECK(exact_ot_cost(c, u, u) == doctest::Approx(0.0).epsilon(1e-14));
  Eigen::MatrixXd plan = exact_ot_plan(c, u, u);
  CHECK((plan - Eigen::MatrixXd::Identity(4, 4) * 0.25).cwiseAbs().maxCoeff() <
        1e-12);

  // A single-row problem has only one feasible plan: the target marginal.
  Eigen::MatrixXd row_cost = random_cost(1, 5, 1200);
  Eigen::VectorXd one(1);
  one << 1.0;
  Eigen::VectorXd q = random_simplex(5, 1201, 1);
  CHECK(exact_ot_cost(row_cost, one, q) ==
        doctest::Approx(row_cost.row(0).dot(q)).epsilon(1e-12));
  TransportProblem prob;
  prob.cost = row_cost;
  prob.p = one;
  prob.q = q;
  prob.epsilon = 0.1;
  TransportPlan sk = sinkhorn(prob, 1e-10, 10000);
  CHECK((sk.coupling.row(0).transpose() - q).cwiseAbs().maxCoeff() < 1e-9);

  // Zero-mass coordinates in a marginal are tolerated by the log-domain
  // path and produce an empty column.
  TransportProblem zero_col;
  zero_col.cost = random_cost(3, 3, 1300);
  zero_col.p = random_simplex(3, 1301, 1);
  zero_col.q = Eigen::VectorXd(3);
  zero_col.q << 0.6, 0.4, 0.0;
  zero_col.epsilon = 0.01;
  TransportPlan zp = sinkhorn(zero_col, 1e-9, 50000);
  CHECK(zp.coupling.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(zp.marginal_residual <= 1e-9);
}

}  // TEST_SUITE
