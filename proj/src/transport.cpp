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

#include "topoguard/transport.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "topoguard/errors.hpp"

namespace topoguard {

namespace {

constexpr double kSimplexSumTol = 1e-9;
constexpr double kPlainPathEpsilon = 0.05;
constexpr double kMinEpsilon = 1e-9;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd validate_simplex(const Eigen::VectorXd& w, const char* name) {
  if (w.size() == 0) {
    throw InvalidMarginals(std::string(name) + " is empty");
  }
  if (!w.allFinite()) {
    throw InvalidMarginals(std::string(name) + " has non-finite entries");
  }
  Eigen::VectorXd out = w;
  for (int i = 0; i < out.size(); ++i) {
    if (out(i) < -1e-12) {
      throw InvalidMarginals(std::string(name) + " has negative entries");
    }
    if (out(i) < 0.0) out(i) = 0.0;
  }
  double s = out.sum();
  if (std::abs(s - 1.0) > kSimplexSumTol) {
    throw InvalidMarginals(std::string(name) + " does not sum to 1 (sum=" +
                           std::to_string(s) + ")");
  }
  return out / s;
}

void validate_problem(const TransportProblem& problem, Eigen::VectorXd* p,
                      Eigen::VectorXd* q) {
  if (problem.cost.rows() == 0 || problem.cost.cols() == 0) {
    throw InvalidInput("empty cost matrix");
  }
  if (!problem.cost.allFinite()) {
    throw InvalidInput("cost matrix has non-finite entries");
  }
  if (problem.p.size() != problem.cost.rows() ||
      problem.q.size() != problem.cost.cols()) {
    throw InvalidMarginals("marginal lengths must match the cost shape");
  }
  if (problem.epsilon < kMinEpsilon) {
    throw NumericUnderflow("epsilon below the supported range");
  }
  if (problem.lambda_marginal < 0.0 ||
      !std::isfinite(problem.lambda_marginal)) {
    throw InvalidParameter("lambda_marginal must be nonnegative");
  }
  if (problem.lambda_marginal > 0.0 &&
      problem.p.size() != problem.q.size()) {
    throw InvalidParameter(
        "marginal penalty needs equal-length histograms");
  }
  *p = validate_simplex(problem.p, "p");
  *q = validate_simplex(problem.q, "q");
}

double plan_residual(const Eigen::MatrixXd& t, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& q) {
  double row = (t.rowwise().sum() - p).cwiseAbs().sum();
  double col = (t.colwise().sum().transpose() - q).cwiseAbs().sum();
  return std::max(row, col);
}

double entropic_objective(const Eigen::MatrixXd& t, const Eigen::MatrixXd& cost,
                          double epsilon) {
  double linear = (t.array() * cost.array()).sum();
  double entropy = 0.0;
  for (int i = 0; i < t.rows(); ++i) {
    for (int j = 0; j < t.cols(); ++j) {
      double v = t(i, j);
      if (v > 0.0) entropy += v * (std::log(v) - 1.0);
    }
  }
  return linear + epsilon * entropy;
}

// One pass of log-domain Sinkhorn. Potentials for zero-mass marginals stay
// at -inf, which makes the corresponding plan entries exactly zero.
struct LogDomainState {
  Eigen::VectorXd f, g;
};

double log_sum_exp(const Eigen::VectorXd& x) {
  double m = x.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) != kNegInf) s += std::exp(x(i) - m);
  }
  return m + std::log(s);
}

Eigen::MatrixXd plan_from_potentials(const LogDomainState& st,
                                     const Eigen::MatrixXd& cost,
                                     double epsilon) {
  Eigen::MatrixXd t(cost.rows(), cost.cols());
  for (int i = 0; i < cost.rows(); ++i) {
    for (int j = 0; j < cost.cols(); ++j) {
      if (st.f(i) == kNegInf || st.g(j) == kNegInf) {
        t(i, j) = 0.0;
      } else {
        t(i, j) = std::exp((st.f(i) + st.g(j) - cost(i, j)) / epsilon);
      }
    }
  }
  return t;
}

TransportPlan sinkhorn_log_domain(const Eigen::MatrixXd& cost,
                                  const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& q, double epsilon,
                                  double tolerance, int max_iters) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  LogDomainState st;
  st.f = Eigen::VectorXd::Zero(n);
  st.g = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < m; ++j) {
    if (q(j) == 0.0) st.g(j) = kNegInf;
  }

  Eigen::VectorXd scratch(std::max(n, m));
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iters; ++it) {
    for (int i = 0; i < n; ++i) {
      if (p(i) == 0.0) {
        st.f(i) = kNegInf;
        continue;
      }
      Eigen::VectorXd terms(m);
      for (int j = 0; j < m; ++j) {
        terms(j) = st.g(j) == kNegInf
                       ? kNegInf
                       : (st.g(j) - cost(i, j)) / epsilon;
      }
      st.f(i) = epsilon * (std::log(p(i)) - log_sum_exp(terms));
    }
    for (int j = 0; j < m; ++j) {
      if (q(j) == 0.0) {
        st.g(j) = kNegInf;
        continue;
      }
      Eigen::VectorXd terms(n);
      for (int i = 0; i < n; ++i) {
        terms(i) = st.f(i) == kNegInf
                       ? kNegInf
                       : (st.f(i) - cost(i, j)) / epsilon;
      }
      st.g(j) = epsilon * (std::log(q(j)) - log_sum_exp(terms));
    }

    Eigen::MatrixXd t = plan_from_potentials(st, cost, epsilon);
    residual = plan_residual(t, p, q);
    if (residual <= tolerance) {
      TransportPlan plan;
      plan.coupling = std::move(t);
      plan.iterations_used = it;
      plan.marginal_residual = residual;
      return plan;
    }
  }
  throw ConvergenceFailure(
      "sinkhorn did not reach tolerance " + std::to_string(tolerance) +
          " in " + std::to_string(max_iters) + " iterations",
      residual);
}

// Plain scaling T = diag(u) K diag(v). Returns false when the kernel
// underflows so the caller can retry in the log domain.
bool sinkhorn_plain(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                    const Eigen::VectorXd& q, double epsilon, double tolerance,
                    int max_iters, TransportPlan* out, double* last_residual) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  Eigen::MatrixXd kernel = (-cost.array() / epsilon).exp().matrix();
  Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m);

  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd kv = kernel * v;
    for (int i = 0; i < n; ++i) {
      if (p(i) == 0.0) {
        u(i) = 0.0;
      } else {
        if (kv(i) <= 0.0 || !std::isfinite(kv(i))) return false;
        u(i) = p(i) / kv(i);
      }
    }
    Eigen::VectorXd ktu = kernel.transpose() * u;
    for (int j = 0; j < m; ++j) {
      if (q(j) == 0.0) {
        v(j) = 0.0;
      } else {
        if (ktu(j) <= 0.0 || !std::isfinite(ktu(j))) return false;
        v(j) = q(j) / ktu(j);
      }
    }
    if (!u.allFinite() || !v.allFinite()) return false;

    Eigen::MatrixXd t = u.asDiagonal() * kernel * v.asDiagonal();
    residual = plan_residual(t, p, q);
    if (residual <= tolerance) {
      out->coupling = std::move(t);
      out->iterations_used = it;
      out->marginal_residual = residual;
      return true;
    }
  }
  *last_residual = residual;
  throw ConvergenceFailure(
      "sinkhorn did not reach tolerance " + std::to_string(tolerance) +
          " in " + std::to_string(max_iters) + " iterations",
      residual);
}

}  // namespace

TransportPlan sinkhorn(const TransportProblem& problem, double tolerance,
                       int max_iters) {
  if (!(tolerance > 0.0)) throw InvalidParameter("tolerance must be positive");
  if (max_iters < 1) throw InvalidParameter("max_iters must be >= 1");
  Eigen::VectorXd p, q;
  validate_problem(problem, &p, &q);

  TransportPlan plan;
  bool solved = false;
  if (problem.epsilon >= kPlainPathEpsilon) {
    double residual = 0.0;
    solved = sinkhorn_plain(problem.cost, p, q, problem.epsilon, tolerance,
                            max_iters, &plan, &residual);
  }
  if (!solved) {
    plan = sinkhorn_log_domain(problem.cost, p, q, problem.epsilon, tolerance,
                               max_iters);
  }

  plan.transport_cost = (plan.coupling.array() * problem.cost.array()).sum();
  plan.objective =
      entropic_objective(plan.coupling, problem.cost, problem.epsilon);
  if (problem.lambda_marginal > 0.0) {
    plan.objective += problem.lambda_marginal * marginal_kl(p, q);
  }
  return plan;
}

double marginal_kl(const Eigen::VectorXd& p_in, const Eigen::VectorXd& q_in) {
  if (p_in.size() != q_in.size()) {
    throw InvalidMarginals("histograms must share a length");
  }
  Eigen::VectorXd p = validate_simplex(p_in, "p");
  Eigen::VectorXd q = validate_simplex(q_in, "q");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p(i) == 0.0) continue;
    if (q(i) == 0.0) {
      throw InvalidMarginals("q has no mass where p does (index " +
                             std::to_string(i) + ")");
    }
    kl += p(i) * std::log(p(i) / q(i));
  }
  return std::max(kl, 0.0);
}

namespace {

// Transportation simplex over the bipartite node set {rows} + {cols}.
// The basis always holds n + m - 1 cells forming a spanning tree.
struct SimplexState {
  int n, m;
  std::vector<int> basis_row, basis_col;  // parallel arrays of basis cells
  std::vector<double> basis_val;
};

void northwest_corner(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                      SimplexState* st) {
  int i = 0, j = 0;
  Eigen::VectorXd a = p, b = q;
  while (true) {
    double t = std::min(a(i), b(j));
    st->basis_row.push_back(i);
    st->basis_col.push_back(j);
    st->basis_val.push_back(t);
    a(i) -= t;
    b(j) -= t;
    if (i == st->n - 1 && j == st->m - 1) break;
    // Advancing exactly one index per step yields n + m - 1 connected
    // cells even when both sides exhaust at once (degenerate zero cells).
    if (a(i) <= 0.0 && i < st->n - 1) {
      ++i;
    } else {
      ++j;
    }
  }
}

// Solves u_i + v_j = c_ij over the basis tree, rooted at row 0.
void compute_duals(const SimplexState& st, const Eigen::MatrixXd& cost,
                   std::vector<double>* u, std::vector<double>* v) {
  const int n = st.n, m = st.m;
  u->assign(n, std::numeric_limits<double>::quiet_NaN());
  v->assign(m, std::numeric_limits<double>::quiet_NaN());
  (*u)[0] = 0.0;
  // Repeated sweeps are fine at this size; each pass fixes at least one node.
  bool progress = true;
  while (progress) {
    progress = false;
    for (size_t k = 0; k < st.basis_row.size(); ++k) {
      int i = st.basis_row[k], j = st.basis_col[k];
      bool ui = !std::isnan((*u)[i]), vj = !std::isnan((*v)[j]);
      if (ui && !vj) {
        (*v)[j] = cost(i, j) - (*u)[i];
        progress = true;
      } else if (!ui && vj) {
        (*u)[i] = cost(i, j) - (*v)[j];
        progress = true;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (std::isnan((*u)[i])) throw Error("simplex basis lost connectivity");
  }
  for (int j = 0; j < m; ++j) {
    if (std::isnan((*v)[j])) throw Error("simplex basis lost connectivity");
  }
}

// Finds the alternating cycle created by the entering cell: a path through
// basis cells from the entering row back to the entering column.
// Returns cell indices along the cycle, starting with the entering cell
// implicit at position 0 (+), then alternating -, +, -, ...
std::vector<size_t> find_cycle(const SimplexState& st, int enter_i,
                               int enter_j) {
  const size_t nb = st.basis_row.size();
  // DFS over alternating row/col moves. State: current node is a row
  // (looking for a basis cell in that row) or a column.
  std::vector<size_t> path;
  std::vector<char> used(nb, 0);

  std::function<bool(int, bool)> dfs = [&](int node, bool is_row) -> bool {
    for (size_t k = 0; k < nb; ++k) {
      if (used[k]) continue;
      if (is_row ? st.basis_row[k] != node : st.basis_col[k] != node) continue;
      used[k] = 1;
      path.push_back(k);
      int next = is_row ? st.basis_col[k] : st.basis_row[k];
      bool next_is_row = !is_row;
      if (next_is_row && next == enter_i) return true;  // closed the loop
      if (dfs(next, next_is_row)) return true;
      path.pop_back();
      // leave used[k] set: this edge leads nowhere useful from any branch
    }
    return false;
  };

  if (!dfs(enter_j, /*is_row=*/false)) {
    throw Error("simplex pivot cycle not found");
  }
  return path;
}

void solve_simplex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                   const Eigen::VectorXd& q, SimplexState* st) {
  st->n = static_cast<int>(cost.rows());
  st->m = static_cast<int>(cost.cols());
  northwest_corner(p, q, st);

  constexpr double kReducedCostTol = 1e-12;
  constexpr int kMaxPivots = 100000;
  std::vector<double> u, v;
  for (int pivot = 0; pivot < kMaxPivots; ++pivot) {
    compute_duals(*st, cost, &u, &v);

    // Bland's rule: first improving cell in row-major order.
    int enter_i = -1, enter_j = -1;
    for (int i = 0; i < st->n && enter_i < 0; ++i) {
      for (int j = 0; j < st->m; ++j) {
        bool in_basis = false;
        for (size_t k = 0; k < st->basis_row.size(); ++k) {
          if (st->basis_row[k] == i && st->basis_col[k] == j) {
            in_basis = true;
            break;
          }
        }
        if (in_basis) continue;
        if (cost(i, j) - u[i] - v[j] < -kReducedCostTol) {
          enter_i = i;
          enter_j = j;
          break;
        }
      }
    }
    if (enter_i < 0) return;  // optimal

    std::vector<size_t> cycle = find_cycle(*st, enter_i, enter_j);
    // Cells at even positions in the path get -theta (they alternate with
    // the entering cell's +theta).
    double theta = std::numeric_limits<double>::infinity();
    size_t leave = 0;
    for (size_t pos = 0; pos < cycle.size(); pos += 2) {
      double val = st->basis_val[cycle[pos]];
      size_t k = cycle[pos];
      // Smallest-index tie break keeps the pivot sequence finite.
      if (val < theta - 1e-15 ||
          (std::abs(val - theta) <= 1e-15 && k < leave)) {
        theta = val;
        leave = k;
      }
    }

    for (size_t pos = 0; pos < cycle.size(); ++pos) {
      st->basis_val[cycle[pos]] += (pos % 2 == 0) ? -theta : theta;
    }
    // Replace the leaving cell with the entering one.
    st->basis_row[leave] = enter_i;
    st->basis_col[leave] = enter_j;
    st->basis_val[leave] = theta;
  }
  throw ConvergenceFailure("transportation simplex exceeded pivot limit", 0.0);
}

}  // namespace

Eigen::MatrixXd exact_ot_plan(const Eigen::MatrixXd& cost,
                              const Eigen::VectorXd& p_in,
                              const Eigen::VectorXd& q_in) {
  if (cost.rows() == 0 || cost.cols() == 0) {
    throw InvalidInput("empty cost matrix");
  }
  if (cost.rows() * cost.cols() > 64) {
    throw SizeLimit("exact solver is limited to n*m <= 64");
  }
  if (!cost.allFinite()) throw InvalidInput("cost has non-finite entries");
  if (p_in.size() != cost.rows() || q_in.size() != cost.cols()) {
    throw InvalidMarginals("marginal lengths must match the cost shape");
  }
  Eigen::VectorXd p = validate_simplex(p_in, "p");
  Eigen::VectorXd q = validate_simplex(q_in, "q");

  SimplexState st;
  solve_simplex(cost, p, q, &st);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(cost.rows(), cost.cols());
  for (size_t k = 0; k < st.basis_row.size(); ++k) {
    t(st.basis_row[k], st.basis_col[k]) += st.basis_val[k];
  }
  return t;
}

double exact_ot_cost(const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& q) {
  Eigen::MatrixXd t = exact_ot_plan(cost, p, q);
  return (t.array() * cost.array()).sum();
}

}  // namespace topoguard
