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

#include "topoguard/temporal_graph.hpp"

#include <cmath>

#include "topoguard/camera_graph.hpp"
#include "topoguard/errors.hpp"

namespace topoguard {

namespace {

void check_config(const TgnConfig& cfg, int d) {
  const auto in = cfg.message.w1.cols();
  if (in != 2 * d + 2) {
    throw InvalidInput("message MLP input must be 2d+2");
  }
  if (cfg.message.w2.cols() != cfg.message.w1.rows()) {
    throw InvalidInput("message MLP layer shapes do not chain");
  }
  if (cfg.message.w2.rows() != d) {
    throw InvalidInput("message MLP must output d values");
  }
  if (cfg.aggregate.rows() != d || cfg.aggregate.cols() != 2 * d) {
    throw InvalidInput("aggregator must be d x 2d");
  }
  if (cfg.use_bias) {
    if (cfg.message.b1.size() != cfg.message.w1.rows() ||
        cfg.message.b2.size() != d) {
      throw InvalidInput("message MLP bias sizes do not match layers");
    }
    if (cfg.aggregate_bias.size() != d) {
      throw InvalidInput("aggregator bias size must be d");
    }
  }
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) {
    throw InvalidParameter("tau must be positive");
  }
  if (cfg.neighbor_threshold < 0.0 || cfg.neighbor_threshold > 1.0) {
    throw InvalidParameter("neighbor threshold must lie in [0, 1]");
  }
}

}  // namespace

Eigen::VectorXd compute_message(const TgnConfig& cfg,
                                const Eigen::VectorXd& src,
                                const Eigen::VectorXd& dst, double affinity,
                                double dt) {
  if (src.size() != dst.size() || src.size() == 0) {
    throw InvalidInput("src and dst features must share a nonzero length");
  }
  const int d = static_cast<int>(src.size());
  check_config(cfg, d);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * d + 2);
  x.head(d) = src;
  x.segment(d, d) = dst;
  if (cfg.use_edge_descriptor) {
    x(2 * d) = affinity;
    x(2 * d + 1) = dt;
  }

  Eigen::VectorXd hidden = cfg.message.w1 * x;
  if (cfg.use_bias) hidden += cfg.message.b1;
  hidden = hidden.cwiseMax(0.0);
  Eigen::VectorXd out = cfg.message.w2 * hidden;
  if (cfg.use_bias) out += cfg.message.b2;
  return out;
}

Eigen::VectorXd aggregate_messages(const TgnConfig& cfg,
                                   const Eigen::MatrixXd& messages,
                                   const Eigen::VectorXd& prior) {
  const int d = static_cast<int>(prior.size());
  check_config(cfg, d);
  if (messages.rows() == 0) {
    throw EmptyBatch("aggregate_messages: no messages");
  }
  if (messages.cols() != d) {
    throw InvalidInput("message width must match prior length");
  }
  Eigen::VectorXd joint(2 * d);
  joint.head(d) = messages.colwise().mean();
  joint.tail(d) = prior;
  Eigen::VectorXd a = cfg.aggregate * joint;
  if (cfg.use_bias) a += cfg.aggregate_bias;
  return a;
}

Eigen::MatrixXd tgn_step(const Eigen::MatrixXd& snapshot,
                         const Eigen::VectorXd& timestamps,
                         const Eigen::MatrixXd& affinity, const TgnConfig& cfg,
                         const AttentionParams& attn) {
  const int n = static_cast<int>(snapshot.rows());
  const int d = static_cast<int>(snapshot.cols());
  if (n == 0) throw EmptyBatch("tgn_step: empty snapshot");
  check_config(cfg, d);
  if (timestamps.size() != n) {
    throw InvalidInput("need one timestamp per node");
  }
  if (affinity.rows() != n || affinity.cols() != n) {
    throw InvalidInput("affinity must be N x N over the snapshot rows");
  }

  // The unit diagonal guarantees each node is its own neighbor for any
  // threshold <= 1, so the mean below is never over an empty set.
  Eigen::MatrixXd aggregates(n, d);
  std::vector<int> neighbors;
  for (int i = 0; i < n; ++i) {
    neighbors.clear();
    for (int j = 0; j < n; ++j) {
      if (affinity(i, j) >= cfg.neighbor_threshold) neighbors.push_back(j);
    }
    if (neighbors.empty()) {
      throw DegenerateInput("node " + std::to_string(i) + " has no neighbors");
    }
    Eigen::MatrixXd messages(static_cast<int>(neighbors.size()), d);
    for (size_t k = 0; k < neighbors.size(); ++k) {
      int j = neighbors[k];
      double dt = timestamps(i) - timestamps(j);
      messages.row(k) =
          compute_message(cfg, snapshot.row(j), snapshot.row(i), affinity(i, j), dt)
              .transpose();
    }
    aggregates.row(i) =
        aggregate_messages(cfg, messages, snapshot.row(i)).transpose();
  }

  AttentionParams clamped = attn;
  clamped.w_value = spectral_normalize(attn.w_value, 1.0);
  Eigen::MatrixXd context = compute_context(snapshot, affinity, clamped.theta);
  Eigen::MatrixXd bias = geometry_bias(affinity, clamped.bias_temperature,
                                       clamped.affinity_floor);
  Eigen::MatrixXd weights = attention_weights(snapshot, context, clamped, bias);
  return weights * (aggregates * clamped.w_value) + snapshot;
}

double tgn_stability_constant(const TgnConfig& cfg) {
  if (cfg.aggregate.rows() == 0 ||
      cfg.aggregate.cols() != 2 * cfg.aggregate.rows()) {
    throw InvalidInput("aggregator must be d x 2d");
  }
  const int d = static_cast<int>(cfg.aggregate.rows());
  auto top_sv = [](const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues()(0);
  };
  double l_message = top_sv(cfg.message.w1) * top_sv(cfg.message.w2);
  double l_agg_message = top_sv(cfg.aggregate.leftCols(d));
  double l_agg_prior = top_sv(cfg.aggregate.rightCols(d));
  return 1.0 + l_agg_message * l_message + l_agg_prior;
}

}  // namespace topoguard
