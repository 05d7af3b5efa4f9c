//
// Copyright 2026 The Topoguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef TOPOGUARD_TRANSPORT_HPP_
#define TOPOGUARD_TRANSPORT_HPP_

#include <Eigen/Dense>

namespace topoguard {

// Entropic optimal transport instance:
//   min_T <T, cost> + epsilon * sum_ij T_ij (log T_ij - 1)
//         + lambda_marginal * KL(p || q)
// subject to T 1 = p, T^T 1 = q. The KL term does not involve T; it is a
// constant penalty folded into the reported objective.
struct TransportProblem {
  Eigen::MatrixXd cost;      // n x m, finite
  Eigen::VectorXd p;         // length n, simplex
  Eigen::VectorXd q;         // length m, simplex
  double epsilon = 0.1;
  double lambda_marginal = 0.0;
};

struct TransportPlan {
  Eigen::MatrixXd coupling;
  double objective = 0.0;        // entropic objective incl. the KL penalty
  double transport_cost = 0.0;   // <T, cost> alone
  int iterations_used = 0;
  double marginal_residual = 0.0;  // max of row/col L1 residuals
};

// Sinkhorn scaling. Log-domain iterations by default; for epsilon >= 0.05
// a plain scaling fast path is used and falls back to the log domain if
// the kernel underflows. Throws ConvergenceFailure (carrying the last
// residual) when max_iters is exhausted.
TransportPlan sinkhorn(const TransportProblem& problem, double tolerance = 1e-6,
                       int max_iters = 10000);

// KL(p || q) between histograms; terms with p_i = 0 contribute zero, and
// q_i = 0 is rejected wherever p_i > 0.
double marginal_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// Exact unregularized optimum <T*, cost> for small problems
// (n * m <= 64), solved with the transportation simplex
// (north-west-corner start, u-v pivoting, Bland anti-cycling).
double exact_ot_cost(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& q);

// Same solver, returning the optimal vertex plan.
Eigen::MatrixXd exact_ot_plan(const Eigen::MatrixXd& cost,
                              const Eigen::VectorXd& p,
                              const Eigen::VectorXd& q);

}  // namespace topoguard

#endif  // TOPOGUARD_TRANSPORT_HPP_
