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

#ifndef TOPOGUARD_TRAINER_HPP_
#define TOPOGUARD_TRAINER_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "topoguard/act_metric.hpp"
#include "topoguard/dp_core.hpp"
#include "topoguard/embedding_io.hpp"
#include "topoguard/gallery_index.hpp"
#include "topoguard/synthetic.hpp"

namespace topoguard {

struct TrainConfig {
  int epochs = 30;
  // 0 trains on the full batch every epoch. A positive value chunks a
  // per-epoch shuffle; pick it large enough that every chunk still holds
  // a positive pair, or the triplet term raises EmptyBatch.
  int batch_size = 0;
  double learning_rate = 0.05;
  double weight_decay = 1e-3;
  // Output dimension of the linear encoder; 0 keeps the input dimension.
  int encode_dim = 0;
  ActConfig act;
  // Weight of the transport regularizer in the reported objective. The
  // transport term carries no gradient; only the metric-learning losses
  // drive the encoder.
  double lambda_ot = 0.1;
  double lambda_aux = 0.0;  // reserved, currently multiplies zero
  double ot_epsilon = 0.1;
  uint64_t seed = 0;
  // Release mechanism: encoded gallery rows are clipped to this radius,
  // giving L2 sensitivity 2 * clip_radius, then noised when dp_epsilon > 0.
  double clip_radius = 1.0;
  double dp_epsilon = 0.0;  // 0 releases clipped but noiseless embeddings
  double dp_delta = 1e-5;
  // Noise scale is recalibrated every this many epochs (and once at the
  // end) while dp_epsilon > 0.
  int recalibrate_every = 10;
};

struct TotalLoss {
  double value = 0.0;     // act + lambda_ot * ot + lambda_aux * 0
  double id_value = 0.0;
  double triplet_value = 0.0;
  double act_value = 0.0;
  double ot_value = 0.0;  // entropic transport objective, metric only
  Eigen::MatrixXd feature_grad;
};

// Combined training objective on one encoded batch. The gradient equals
// the metric-loss gradient; the transport term is evaluated on the batch's
// pairwise cosine dissimilarity with uniform marginals and reported in the
// value only.
TotalLoss total_loss(const Eigen::MatrixXd& features,
                     const std::vector<int>& labels,
                     const Eigen::MatrixXd& prototypes,
                     const MarginState& margins, const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double id_loss = 0.0;
  double triplet_loss = 0.0;
  double ot_loss = 0.0;
  double total_loss = 0.0;
  // Compactness of the L2-normalized encoded features.
  double compactness = 0.0;
  // Noise scale in effect after this epoch; 0 while privatization is off.
  double noise_sigma = 0.0;
  std::map<int, double> margins;
};

struct TrainResult {
  Eigen::MatrixXd encoder;  // encode_dim x input_dim
  std::vector<EpochStats> history;
  MarginState margins;
  Eigen::MatrixXd encoded;     // clean encoded dataset, one row per sample
  EmbeddingBatch privatized;   // clipped (+noised) release embeddings
  GalleryIndex index;          // exact index over the release embeddings
  DpParams dp;
  long steps_total = 0;
  long steps_bound_ok = 0;  // steps where the decayed-update norm bound held

  nlohmann::json history_json() const;
};

// Gradient-descent training of a single linear encoder on the combined
// objective, followed by the release stage: clip, optionally noise, and
// index the encoded gallery. The release stage runs even with 0 epochs.
//
// Per epoch: class prototypes are re-estimated as normalized class means,
// the margin state observes the encoded batch, and the encoder takes one
// decayed gradient step per chunk. Loss turning non-finite raises
// TrainingFailure.
TrainResult train_toy(const EmbeddingBatch& data, const TrainConfig& cfg);

struct PipelineConfig {
  SyntheticSpec synth;
  TrainConfig train;
  // Blend factor for the optional camera-attention refinement applied to
  // the raw features before training; 0 skips the stage.
  double refine_blend = 0.0;
  // Privacy accounting for the release spend.
  double budget_epsilon = 10.0;
  double budget_delta = 1e-3;
  double delta_prime = 1e-6;
  // Sweep stage settings.
  std::vector<double> sweep_epsilons = {
      std::numeric_limits<double>::infinity(), 8.0, 2.0, 0.5};
  int sweep_seeds = 3;
  int eval_k = 10;
  std::string out_dir = "out";

  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Runs generate -> optional refinement -> train -> release -> evaluate ->
// sweep, writing every artifact plus manifest.json under cfg.out_dir. A
// stage failure still writes the manifest (with the failed stage named)
// before the error propagates.
nlohmann::json run_pipeline(const PipelineConfig& cfg);

}  // namespace topoguard

#endif  // TOPOGUARD_TRAINER_HPP_
