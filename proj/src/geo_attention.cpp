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

#include "topoguard/geo_attention.hpp"

#include <cmath>

#include "topoguard/camera_graph.hpp"
#include "topoguard/errors.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

Eigen::MatrixXd compute_context(const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& affinity,
                                const Eigen::MatrixXd& theta) {
  if (affinity.rows() != affinity.cols()) {
    throw InvalidInput("affinity must be square");
  }
  if (features.rows() != affinity.rows()) {
    throw InvalidInput("feature rows must match affinity size");
  }
  if (theta.cols() != features.cols()) {
    throw InvalidInput("theta column count must match feature dim");
  }
  Eigen::MatrixXd s = row_normalize(affinity);
  return s * features * theta.transpose();
}

Eigen::MatrixXd geometry_bias(const Eigen::MatrixXd& affinity,
                              double temperature, double floor_value) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidParameter("bias temperature must be positive");
  }
  if (!(floor_value > 0.0)) {
    throw InvalidParameter("affinity floor must be positive");
  }
  if (!affinity.allFinite() || (affinity.array() < 0.0).any()) {
    throw InvalidInput("affinity entries must be finite and nonnegative");
  }
  return (affinity.array().max(floor_value).log() * temperature).matrix();
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) {
    throw InvalidInput("row_softmax: empty matrix");
  }
  if (!logits.allFinite()) {
    throw NumericOverflow("row_softmax: non-finite logits");
  }
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& features,
                                  const Eigen::MatrixXd& context,
                                  const AttentionParams& params,
                                  const Eigen::MatrixXd& bias) {
  const auto d = features.cols();
  if (context.rows() != features.rows()) {
    throw InvalidInput("context rows must match feature rows");
  }
  if (params.w_query.rows() != d || params.w_key.rows() != context.cols()) {
    throw InvalidInput("projection shapes do not match inputs");
  }
  if (params.w_query.cols() != params.w_key.cols()) {
    throw InvalidInput("query and key projections must share output dim");
  }
  if (bias.rows() != features.rows() || bias.cols() != features.rows()) {
    throw InvalidInput("bias must be N x N");
  }
  Eigen::MatrixXd q = features * params.w_query;
  Eigen::MatrixXd k = context * params.w_key;
  Eigen::MatrixXd logits =
      q * k.transpose() / std::sqrt(static_cast<double>(d)) + bias;
  return row_softmax(logits);
}

Eigen::MatrixXd apply_attention(const Eigen::MatrixXd& attn,
                                const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& w_value) {
  if (attn.rows() != attn.cols() || attn.rows() != features.rows()) {
    throw InvalidInput("attention matrix must be N x N over the feature rows");
  }
  if (w_value.rows() != features.cols()) {
    throw InvalidInput("value projection rows must match feature dim");
  }
  return attn * (features * w_value) + features;
}

Eigen::MatrixXd refine_features(const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& affinity,
                                const AttentionParams& params) {
  Eigen::MatrixXd context = compute_context(features, affinity, params.theta);
  Eigen::MatrixXd bias =
      geometry_bias(affinity, params.bias_temperature, params.affinity_floor);
  Eigen::MatrixXd attn = attention_weights(features, context, params, bias);
  return apply_attention(attn, features, params.w_value);
}

double spectral_norm_power_iteration(const Eigen::MatrixXd& m, int max_iters,
                                     double tol) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw InvalidInput("spectral norm of an empty matrix");
  }
  if (!m.allFinite()) {
    throw InvalidInput("spectral norm of a non-finite matrix");
  }
  if (max_iters < 1 || !(tol > 0.0)) {
    throw InvalidParameter("need max_iters >= 1 and tol > 0");
  }
  // Fixed pseudo-random start so runs are reproducible and the start is
  // almost surely not orthogonal to the top singular vector.
  CounterRng rng(0x70706f77ULL, static_cast<uint64_t>(m.cols()));
  Eigen::VectorXd v(m.cols());
  for (int i = 0; i < v.size(); ++i) v(i) = rng.gaussian_at(i);
  double vnorm = v.norm();
  if (vnorm == 0.0) v.setOnes();
  v.normalize();

  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd mv = m * v;
    double estimate = mv.norm();
    if (estimate <= 1e-300) return 0.0;
    Eigen::VectorXd next = m.transpose() * mv;
    double nn = next.norm();
    if (nn <= 1e-300) return estimate;
    v = next / nn;
    if (std::abs(estimate - sigma) <= tol * std::max(1.0, estimate)) {
      return estimate;
    }
    sigma = estimate;
  }
  return sigma;
}

Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& w, double target) {
  if (!(target > 0.0) || !std::isfinite(target)) {
    throw InvalidParameter("spectral target must be positive and finite");
  }
  if (!w.allFinite()) {
    throw InvalidInput("spectral_normalize: non-finite entries");
  }
  if (w.rows() == 0 || w.cols() == 0) return w;
  // SVD gives the exact norm here; the power-iteration routine above serves
  // as an independent cross-check in tests.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
  double norm = svd.singularValues()(0);
  if (norm <= target) return w;
  return w * (target / norm);
}

}  // namespace topoguard
