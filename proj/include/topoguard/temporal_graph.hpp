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

#ifndef TOPOGUARD_TEMPORAL_GRAPH_HPP_
#define TOPOGUARD_TEMPORAL_GRAPH_HPP_

#include <Eigen/Dense>

#include "topoguard/geo_attention.hpp"

namespace topoguard {

// y = W2 relu(W1 x + b1) + b2. Biases are only applied when the owning
// config enables them; they default to zero.
struct TwoLayerMlp {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

// Temporal update over camera-node features.
//
// Each node i gathers messages from neighbors j with A_ij at or above the
// threshold (the unit diagonal keeps i itself in the set), aggregates the
// mean message with its prior state through a single perceptron, and the
// aggregate matrix is pushed through geometry-conditioned attention with a
// residual back to the previous snapshot.
struct TgnConfig {
  double tau = 1.0;                 // snapshot spacing, seconds
  TwoLayerMlp message;              // (2d+2) -> h -> d
  Eigen::MatrixXd aggregate;        // d x 2d, acts on [mean_message; prior]
  Eigen::VectorXd aggregate_bias;   // d, used only when use_bias
  bool use_bias = false;
  // When false the (affinity, delta-t) edge slot is fed as zeros, making
  // the update a pure function of node features; the contraction and
  // zero-fixed-point guarantees below assume this setting.
  bool use_edge_descriptor = true;
  double neighbor_threshold = 0.05;
};

// Message from node j (src) to node i (dst) along an edge carrying
// (affinity, dt). src/dst must both have length d, matching the MLP shape.
Eigen::VectorXd compute_message(const TgnConfig& cfg,
                                const Eigen::VectorXd& src,
                                const Eigen::VectorXd& dst, double affinity,
                                double dt);

// Mean of the given messages (rows) combined with the prior through the
// aggregation perceptron: a = W_agg [mean; prior] (+ bias).
Eigen::VectorXd aggregate_messages(const TgnConfig& cfg,
                                   const Eigen::MatrixXd& messages,
                                   const Eigen::VectorXd& prior);

// One temporal step:
//   F_temp = Attn(F) * (A_agg Wv) + F
// where A_agg stacks the per-node aggregates and Attn is the geometry
// conditioned attention built from the snapshot itself. The value
// projection is spectrally clamped to 1 before use.
Eigen::MatrixXd tgn_step(const Eigen::MatrixXd& snapshot,
                         const Eigen::VectorXd& timestamps,
                         const Eigen::MatrixXd& affinity, const TgnConfig& cfg,
                         const AttentionParams& attn);

// Stability constant C = 1 + L_a * L_m + L'_a from layer spectral norms:
// L_m is the product over message layers, L_a / L'_a are the norms of the
// aggregator blocks acting on the message and prior slots. When the value
// projection is clamped to 1 and edge descriptors are disabled,
// ||tgn_step(F)||_F <= C ||F||_F.
double tgn_stability_constant(const TgnConfig& cfg);

}  // namespace topoguard

#endif  // TOPOGUARD_TEMPORAL_GRAPH_HPP_
