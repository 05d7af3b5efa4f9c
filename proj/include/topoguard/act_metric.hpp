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

#ifndef TOPOGUARD_ACT_METRIC_HPP_
#define TOPOGUARD_ACT_METRIC_HPP_

#include <map>
#include <vector>

#include <Eigen/Dense>

namespace topoguard {

struct ActConfig {
  double gamma0 = 0.4;        // base angular margin
  double alpha = 0.2;         // relative margin headroom
  double beta = 1.0;          // KL sensitivity
  double scale = 30.0;        // logit scale s
  double lambda_tri = 1.0;    // triplet weight inside the combined loss
  double ema_decay = 0.9;
  double variance_floor = 1e-6;
};

// gamma0 * (1 + alpha * tanh(beta * kl)); monotone in kl, bounded in
// [gamma0, gamma0 * (1 + alpha)).
double adaptive_margin(double gamma0, double alpha, double beta, double kl);

// KL(N(mean_p, diag var_p) || N(mean_q, diag var_q)), variances floored.
double diagonal_gaussian_kl(const Eigen::VectorXd& mean_p,
                            const Eigen::VectorXd& var_p,
                            const Eigen::VectorXd& mean_q,
                            const Eigen::VectorXd& var_q,
                            double variance_floor);

// Running per-identity and global feature moments.
//
// Each observe() folds the batch statistics into exponential moving
// averages (first call initializes them directly). KL of an identity
// against the global distribution feeds the adaptive margin.
class MarginState {
 public:
  MarginState() = default;
  explicit MarginState(double ema_decay) : decay_(ema_decay) {}

  void observe(const Eigen::MatrixXd& features, const std::vector<int>& labels);

  bool has_identity(int id) const { return stats_.count(id) != 0; }
  long sample_count(int id) const;
  std::vector<int> identities() const;

  double estimate_kl(int id, double variance_floor = 1e-6) const;
  double margin(int id, const ActConfig& cfg) const;
  // Margin for a possibly-unseen identity: falls back to gamma0 until the
  // identity has at least two accumulated samples.
  double margin_or_default(int id, const ActConfig& cfg) const;

  const Eigen::VectorXd& global_mean() const;
  const Eigen::VectorXd& global_variance() const;
  Eigen::VectorXd identity_mean(int id) const;
  Eigen::VectorXd identity_variance(int id) const;

 private:
  struct Moments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    long count = 0;
  };
  double decay_ = 0.9;
  std::map<int, Moments> stats_;
  Moments global_;
};

struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd feature_grad;  // same shape as the feature batch
};

// Margin-shifted angular identity loss. Cosine logits against class
// prototypes are scaled by cfg.scale; the true-class logit is shifted by
// its identity's adaptive margin. Gradients are w.r.t. features only;
// prototypes and margins are treated as constants.
LossValue act_id_loss(const Eigen::MatrixXd& features,
                      const std::vector<int>& labels,
                      const Eigen::MatrixXd& prototypes,
                      const MarginState& margins, const ActConfig& cfg);

// Index of the farthest same-label sample (cosine dissimilarity); ties
// break toward the smallest index.
int mine_hard_positive(const Eigen::MatrixXd& features,
                       const std::vector<int>& labels, int anchor);

// Nearest negative strictly farther than the mined positive; if none
// qualifies, the nearest negative overall. Ties break toward the smallest
// index.
int mine_semi_hard_negative(const Eigen::MatrixXd& features,
                            const std::vector<int>& labels, int anchor,
                            int positive);

// Mined triplet hinge with the per-identity adaptive margin. Anchors
// without a positive are skipped and do not count toward the mean.
// Gradients hold the mining fixed (straight-through).
LossValue act_triplet_loss(const Eigen::MatrixXd& features,
                           const std::vector<int>& labels,
                           const MarginState& margins, const ActConfig& cfg);

// id loss + lambda_tri * triplet loss, gradients summed accordingly.
LossValue act_combined_loss(const Eigen::MatrixXd& features,
                            const std::vector<int>& labels,
                            const Eigen::MatrixXd& prototypes,
                            const MarginState& margins, const ActConfig& cfg);

// One decayed gradient step per row: f - eta * (grad + lambda_wd * f).
// Checks the per-row norm recurrence
//   ||f_new|| <= (1 - eta lambda_wd) ||f|| + eta ||grad||
// on every call. Requires 0 < eta * lambda_wd < 1.
Eigen::MatrixXd sgd_step_with_decay(const Eigen::MatrixXd& features,
                                    const Eigen::MatrixXd& grad, double eta,
                                    double lambda_wd);

// 1 - cos(u, v); rejects zero vectors.
double cosine_dissimilarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

// All-pairs cosine dissimilarity, zero diagonal.
Eigen::MatrixXd pairwise_cosine_dissimilarity(const Eigen::MatrixXd& features);

}  // namespace topoguard

#endif  // TOPOGUARD_ACT_METRIC_HPP_
