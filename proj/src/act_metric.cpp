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

#include "topoguard/act_metric.hpp"

#include <cmath>
#include <limits>

#include "topoguard/errors.hpp"

namespace topoguard {

namespace {

constexpr double kZeroNormTol = 1e-300;

// Rows normalized to unit length alongside the original norms.
void normalize_rows(const Eigen::MatrixXd& m, Eigen::MatrixXd* unit,
                    Eigen::VectorXd* norms, const char* what) {
  *norms = m.rowwise().norm();
  for (int i = 0; i < norms->size(); ++i) {
    if (!((*norms)(i) > kZeroNormTol) || !std::isfinite((*norms)(i))) {
      throw DegenerateInput(std::string(what) + " row " + std::to_string(i) +
                            " has zero or non-finite norm");
    }
  }
  *unit = norms->cwiseInverse().asDiagonal() * m;
}

void check_batch(const Eigen::MatrixXd& features,
                 const std::vector<int>& labels) {
  if (features.rows() == 0) throw EmptyBatch("empty feature batch");
  if (static_cast<int>(labels.size()) != features.rows()) {
    throw InvalidInput("need one label per feature row");
  }
  if (!features.allFinite()) throw InvalidInput("non-finite features");
}

}  // namespace

double adaptive_margin(double gamma0, double alpha, double beta, double kl) {
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) {
    throw InvalidParameter("gamma0 must be positive");
  }
  if (alpha < 0.0 || !std::isfinite(alpha)) {
    throw InvalidParameter("alpha must be nonnegative");
  }
  if (beta < 0.0 || !std::isfinite(beta)) {
    throw InvalidParameter("beta must be nonnegative");
  }
  if (kl < 0.0 || !std::isfinite(kl)) {
    throw InvalidParameter("kl must be nonnegative and finite");
  }
  return gamma0 * (1.0 + alpha * std::tanh(beta * kl));
}

double diagonal_gaussian_kl(const Eigen::VectorXd& mean_p,
                            const Eigen::VectorXd& var_p,
                            const Eigen::VectorXd& mean_q,
                            const Eigen::VectorXd& var_q,
                            double variance_floor) {
  if (!(variance_floor > 0.0)) {
    throw InvalidParameter("variance floor must be positive");
  }
  const auto d = mean_p.size();
  if (var_p.size() != d || mean_q.size() != d || var_q.size() != d || d == 0) {
    throw InvalidInput("moment vectors must share a nonzero length");
  }
  double kl = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    double vp = std::max(var_p(k), variance_floor);
    double vq = std::max(var_q(k), variance_floor);
    double diff = mean_p(k) - mean_q(k);
    kl += 0.5 * std::log(vq / vp) + (vp + diff * diff) / (2.0 * vq) - 0.5;
  }
  // Exact zero for identical moments can wobble to -1e-17 in float; KL is
  // nonnegative by definition.
  return std::max(kl, 0.0);
}

void MarginState::observe(const Eigen::MatrixXd& features,
                          const std::vector<int>& labels) {
  check_batch(features, labels);
  const int n = static_cast<int>(features.rows());
  const auto d = features.cols();
  if (global_.count > 0 && global_.mean.size() != d) {
    throw InvalidInput("feature dim changed between observe() calls");
  }

  auto fold = [this](Moments* m, const Eigen::VectorXd& mean,
                     const Eigen::VectorXd& var, long count) {
    if (m->count == 0) {
      m->mean = mean;
      m->variance = var;
    } else {
      m->mean = decay_ * m->mean + (1.0 - decay_) * mean;
      m->variance = decay_ * m->variance + (1.0 - decay_) * var;
    }
    m->count += count;
  };

  std::map<int, std::vector<int>> by_label;
  for (int i = 0; i < n; ++i) by_label[labels[i]].push_back(i);

  for (const auto& [label, rows] : by_label) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (int r : rows) mean += features.row(r).transpose();
    mean /= static_cast<double>(rows.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (int r : rows) {
      var += (features.row(r).transpose() - mean).array().square().matrix();
    }
    var /= static_cast<double>(rows.size());
    fold(&stats_[label], mean, var, static_cast<long>(rows.size()));
  }

  Eigen::VectorXd gmean = features.colwise().mean().transpose();
  Eigen::VectorXd gvar =
      (features.rowwise() - gmean.transpose()).array().square().colwise().mean();
  fold(&global_, gmean, gvar, n);
}

long MarginState::sample_count(int id) const {
  auto it = stats_.find(id);
  return it == stats_.end() ? 0 : it->second.count;
}

std::vector<int> MarginState::identities() const {
  std::vector<int> ids;
  ids.reserve(stats_.size());
  for (const auto& [id, moments] : stats_) ids.push_back(id);
  return ids;
}

double MarginState::estimate_kl(int id, double variance_floor) const {
  auto it = stats_.find(id);
  if (it == stats_.end()) {
    throw MissingIdentity("identity " + std::to_string(id) + " never observed");
  }
  if (it->second.count < 2) {
    throw DegenerateInput("identity " + std::to_string(id) +
                          " has fewer than 2 accumulated samples");
  }
  if (global_.count < 2) {
    throw DegenerateInput("global moments need at least 2 samples");
  }
  return diagonal_gaussian_kl(it->second.mean, it->second.variance,
                              global_.mean, global_.variance, variance_floor);
}

double MarginState::margin(int id, const ActConfig& cfg) const {
  return adaptive_margin(cfg.gamma0, cfg.alpha, cfg.beta,
                         estimate_kl(id, cfg.variance_floor));
}

double MarginState::margin_or_default(int id, const ActConfig& cfg) const {
  auto it = stats_.find(id);
  if (it == stats_.end() || it->second.count < 2 || global_.count < 2) {
    return adaptive_margin(cfg.gamma0, cfg.alpha, cfg.beta, 0.0);
  }
  return margin(id, cfg);
}

const Eigen::VectorXd& MarginState::global_mean() const {
  if (global_.count == 0) throw DegenerateInput("no observations yet");
  return global_.mean;
}

const Eigen::VectorXd& MarginState::global_variance() const {
  if (global_.count == 0) throw DegenerateInput("no observations yet");
  return global_.variance;
}

Eigen::VectorXd MarginState::identity_mean(int id) const {
  auto it = stats_.find(id);
  if (it == stats_.end()) {
    throw MissingIdentity("identity " + std::to_string(id) + " never observed");
  }
  return it->second.mean;
}

Eigen::VectorXd MarginState::identity_variance(int id) const {
  auto it = stats_.find(id);
  if (it == stats_.end()) {
    throw MissingIdentity("identity " + std::to_string(id) + " never observed");
  }
  return it->second.variance;
}

LossValue act_id_loss(const Eigen::MatrixXd& features,
                      const std::vector<int>& labels,
                      const Eigen::MatrixXd& prototypes,
                      const MarginState& margins, const ActConfig& cfg) {
  check_batch(features, labels);
  if (prototypes.rows() == 0) throw InvalidInput("no prototypes");
  if (prototypes.cols() != features.cols()) {
    throw InvalidInput("prototype dim must match feature dim");
  }
  if (!(cfg.scale > 0.0) || !std::isfinite(cfg.scale)) {
    throw InvalidParameter("scale must be positive");
  }
  const int b = static_cast<int>(features.rows());
  const int kc = static_cast<int>(prototypes.rows());
  for (int i = 0; i < b; ++i) {
    if (labels[i] < 0 || labels[i] >= kc) {
      throw InvalidInput("label " + std::to_string(labels[i]) +
                         " outside prototype range");
    }
  }

  Eigen::MatrixXd f_unit, w_unit;
  Eigen::VectorXd f_norm, w_norm;
  normalize_rows(features, &f_unit, &f_norm, "feature");
  normalize_rows(prototypes, &w_unit, &w_norm, "prototype");

  Eigen::MatrixXd cos = f_unit * w_unit.transpose();  // B x Kc
  Eigen::MatrixXd logits = cfg.scale * cos;
  for (int i = 0; i < b; ++i) {
    logits(i, labels[i]) -=
        cfg.scale * margins.margin_or_default(labels[i], cfg);
  }

  double loss = 0.0;
  Eigen::MatrixXd softmax(b, kc);
  for (int i = 0; i < b; ++i) {
    double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp().matrix();
    double z = e.sum();
    softmax.row(i) = e / z;
    loss += -(logits(i, labels[i]) - m) + std::log(z);
  }
  loss /= b;

  // d loss / d logits = (softmax - onehot) / B; the margin shift is a
  // constant offset so d logit / d cos = scale everywhere, and the cosine
  // pulls back through the row normalization of f.
  Eigen::MatrixXd coeff = softmax;
  for (int i = 0; i < b; ++i) coeff(i, labels[i]) -= 1.0;
  coeff *= cfg.scale / b;

  Eigen::MatrixXd grad = coeff * w_unit;                       // B x d
  Eigen::VectorXd radial =
      (coeff.array() * cos.array()).rowwise().sum().matrix();
  grad -= radial.asDiagonal() * f_unit;
  grad = f_norm.cwiseInverse().asDiagonal() * grad;

  return {loss, std::move(grad)};
}

int mine_hard_positive(const Eigen::MatrixXd& features,
                       const std::vector<int>& labels, int anchor) {
  check_batch(features, labels);
  const int b = static_cast<int>(features.rows());
  if (anchor < 0 || anchor >= b) throw InvalidInput("anchor out of range");
  int best = -1;
  double best_d = -1.0;
  for (int j = 0; j < b; ++j) {
    if (j == anchor || labels[j] != labels[anchor]) continue;
    double d = cosine_dissimilarity(features.row(anchor), features.row(j));
    if (d > best_d) {
      best_d = d;
      best = j;
    }
  }
  if (best < 0) {
    throw NoPositive("anchor " + std::to_string(anchor) + " has no positive");
  }
  return best;
}

int mine_semi_hard_negative(const Eigen::MatrixXd& features,
                            const std::vector<int>& labels, int anchor,
                            int positive) {
  check_batch(features, labels);
  const int b = static_cast<int>(features.rows());
  if (anchor < 0 || anchor >= b || positive < 0 || positive >= b) {
    throw InvalidInput("anchor or positive out of range");
  }
  if (labels[positive] != labels[anchor] || positive == anchor) {
    throw InvalidInput("positive must be a distinct same-label sample");
  }
  double d_pos = cosine_dissimilarity(features.row(anchor), features.row(positive));

  int semi = -1, fallback = -1;
  double semi_d = std::numeric_limits<double>::infinity();
  double fallback_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < b; ++j) {
    if (labels[j] == labels[anchor]) continue;
    double d = cosine_dissimilarity(features.row(anchor), features.row(j));
    if (d < fallback_d) {
      fallback_d = d;
      fallback = j;
    }
    if (d > d_pos && d < semi_d) {
      semi_d = d;
      semi = j;
    }
  }
  if (fallback < 0) {
    throw NoNegative("anchor " + std::to_string(anchor) + " has no negative");
  }
  return semi >= 0 ? semi : fallback;
}

LossValue act_triplet_loss(const Eigen::MatrixXd& features,
                           const std::vector<int>& labels,
                           const MarginState& margins, const ActConfig& cfg) {
  check_batch(features, labels);
  const int b = static_cast<int>(features.rows());

  Eigen::MatrixXd f_unit;
  Eigen::VectorXd f_norm;
  normalize_rows(features, &f_unit, &f_norm, "feature");
  Eigen::MatrixXd cos = f_unit * f_unit.transpose();

  auto dissim = [&](int i, int j) { return 1.0 - cos(i, j); };

  // First pass: mining. Indices are frozen before any gradient math so the
  // backward pass treats the selection as a constant.
  struct Triplet {
    int anchor, positive, negative;
    double margin;
  };
  std::vector<Triplet> triplets;
  int valid_anchors = 0;
  for (int a = 0; a < b; ++a) {
    int pos = -1;
    double pos_d = -1.0;
    for (int j = 0; j < b; ++j) {
      if (j == a || labels[j] != labels[a]) continue;
      if (dissim(a, j) > pos_d) {
        pos_d = dissim(a, j);
        pos = j;
      }
    }
    if (pos < 0) continue;  // skipped anchor, not counted in the mean

    int semi = -1, fallback = -1;
    double semi_d = std::numeric_limits<double>::infinity();
    double fallback_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b; ++j) {
      if (labels[j] == labels[a]) continue;
      double d = dissim(a, j);
      if (d < fallback_d) {
        fallback_d = d;
        fallback = j;
      }
      if (d > pos_d && d < semi_d) {
        semi_d = d;
        semi = j;
      }
    }
    if (fallback < 0) continue;  // no negatives exist in this batch

    ++valid_anchors;
    triplets.push_back({a, pos, semi >= 0 ? semi : fallback,
                        margins.margin_or_default(labels[a], cfg)});
  }
  if (valid_anchors == 0) {
    throw EmptyBatch("no anchor has both a positive and a negative");
  }

  double loss = 0.0;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(b, features.cols());
  // d dissim(i, j) / d f_i = -(unit_j - cos_ij unit_i) / ||f_i||.
  auto add_dissim_grad = [&](int i, int j, double weight) {
    grad.row(i) -=
        weight / f_norm(i) * (f_unit.row(j) - cos(i, j) * f_unit.row(i));
    grad.row(j) -=
        weight / f_norm(j) * (f_unit.row(i) - cos(i, j) * f_unit.row(j));
  };
  for (const auto& t : triplets) {
    double arg = dissim(t.anchor, t.positive) - dissim(t.anchor, t.negative) +
                 t.margin;
    if (arg <= 0.0) continue;
    loss += arg;
    add_dissim_grad(t.anchor, t.positive, 1.0);
    add_dissim_grad(t.anchor, t.negative, -1.0);
  }
  loss /= valid_anchors;
  grad /= valid_anchors;
  return {loss, std::move(grad)};
}

LossValue act_combined_loss(const Eigen::MatrixXd& features,
                            const std::vector<int>& labels,
                            const Eigen::MatrixXd& prototypes,
                            const MarginState& margins, const ActConfig& cfg) {
  if (cfg.lambda_tri < 0.0 || !std::isfinite(cfg.lambda_tri)) {
    throw InvalidParameter("lambda_tri must be nonnegative");
  }
  LossValue id = act_id_loss(features, labels, prototypes, margins, cfg);
  LossValue tri = act_triplet_loss(features, labels, margins, cfg);
  return {id.value + cfg.lambda_tri * tri.value,
          id.feature_grad + cfg.lambda_tri * tri.feature_grad};
}

Eigen::MatrixXd sgd_step_with_decay(const Eigen::MatrixXd& features,
                                    const Eigen::MatrixXd& grad, double eta,
                                    double lambda_wd) {
  if (features.rows() != grad.rows() || features.cols() != grad.cols()) {
    throw InvalidInput("feature and gradient shapes must match");
  }
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw InvalidParameter("eta must be positive");
  }
  double shrink = eta * lambda_wd;
  if (!(shrink > 0.0) || !(shrink < 1.0)) {
    throw InvalidParameter("eta * lambda_wd must lie in (0, 1)");
  }
  if (!grad.allFinite() || !features.allFinite()) {
    throw InvalidInput("non-finite features or gradient");
  }
  Eigen::MatrixXd next = features - eta * (grad + lambda_wd * features);
  for (int i = 0; i < next.rows(); ++i) {
    double bound = (1.0 - shrink) * features.row(i).norm() +
                   eta * grad.row(i).norm();
    if (next.row(i).norm() > bound + 1e-9 * (1.0 + bound)) {
      throw Error("decayed step bound violated on row " + std::to_string(i));
    }
  }
  return next;
}

double cosine_dissimilarity(const Eigen::VectorXd& u,
                            const Eigen::VectorXd& v) {
  if (u.size() != v.size() || u.size() == 0) {
    throw InvalidInput("vectors must share a nonzero length");
  }
  double nu = u.norm(), nv = v.norm();
  if (!(nu > kZeroNormTol) || !(nv > kZeroNormTol)) {
    throw DegenerateInput("cosine of a zero vector");
  }
  return 1.0 - u.dot(v) / (nu * nv);
}

Eigen::MatrixXd pairwise_cosine_dissimilarity(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd unit;
  Eigen::VectorXd norms;
  normalize_rows(features, &unit, &norms, "feature");
  Eigen::MatrixXd d =
      (1.0 - (unit * unit.transpose()).array()).max(0.0).min(2.0).matrix();
  d.diagonal().setZero();
  return d;
}

}  // namespace topoguard
