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

#ifndef TOPOGUARD_GEO_ATTENTION_HPP_
#define TOPOGUARD_GEO_ATTENTION_HPP_

#include <Eigen/Dense>

namespace topoguard {

// Row-vector convention throughout: features are N x d with one node per
// row, and a projection W acts as X * W.
struct AttentionParams {
  Eigen::MatrixXd w_query;
  Eigen::MatrixXd w_key;
  Eigen::MatrixXd w_value;
  Eigen::MatrixXd theta;           // context projection
  double bias_temperature = 1.0;   // scales the log-affinity bias
  double affinity_floor = 1e-9;    // keeps log() finite for tiny affinities
};

// Context C = S X Theta^T with S the L1-row-normalized affinity: each
// node's context is an affinity-weighted mixture of projected neighbors.
Eigen::MatrixXd compute_context(const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& affinity,
                                const Eigen::MatrixXd& theta);

// B_ij = temperature * log(max(A_ij, floor)). Never -inf thanks to the
// floor; distant camera pairs get a strongly negative additive bias.
Eigen::MatrixXd geometry_bias(const Eigen::MatrixXd& affinity,
                              double temperature, double floor_value);

// Numerically stable row softmax (max subtraction). Rejects non-finite
// logits rather than producing NaN rows.
Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits);

// softmax((X Wq)(C Wk)^T / sqrt(d) + bias); rows sum to 1.
Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& features,
                                  const Eigen::MatrixXd& context,
                                  const AttentionParams& params,
                                  const Eigen::MatrixXd& bias);

// Residual refinement: X_hat = Attn (X Wv) + X.
Eigen::MatrixXd apply_attention(const Eigen::MatrixXd& attn,
                                const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& w_value);

// Full pipeline over one affinity graph: context, bias, weights, residual.
Eigen::MatrixXd refine_features(const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& affinity,
                                const AttentionParams& params);

// Largest singular value by power iteration on M^T M. Deterministic start
// vector; converges when the estimate moves less than tol between rounds.
double spectral_norm_power_iteration(const Eigen::MatrixXd& m,
                                     int max_iters = 1000, double tol = 1e-10);

// W scaled by min(1, target / ||W||_2): a no-op for already-small W, never
// an up-scaling.
Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& w, double target);

}  // namespace topoguard

#endif  // TOPOGUARD_GEO_ATTENTION_HPP_
