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

#ifndef TOPOGUARD_AUDIT_HPP_
#define TOPOGUARD_AUDIT_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "topoguard/dp_core.hpp"
#include "topoguard/embedding_io.hpp"

namespace topoguard {

// Advantage of a membership attack from its precision: 2 * (precision - 1/2).
double mia_advantage(double precision);

struct MiaReport {
  double precision = 0.0;
  double advantage = 0.0;
  double noise_sigma = 0.0;
  int trials = 0;  // held-out samples scored
};

// Threshold membership-inference attack.
//
// Both sets are split in half (seeded shuffle): the attacker picks the
// distance-to-member-centroid threshold that maximizes balanced accuracy
// on the training halves, and precision is measured on the held-out
// halves. When params.noise_sigma > 0 every embedding is privatized first
// (noise seed = params.rng_seed XOR audit_seed, so sweeping audit seeds
// varies both the split and the noise).
MiaReport run_mia_audit(const Eigen::MatrixXd& members,
                        const Eigen::MatrixXd& nonmembers,
                        const DpParams& params, uint64_t audit_seed);

struct SweepPoint {
  double epsilon = 0.0;       // +inf means no noise
  double noise_sigma = 0.0;
  double rank1_mean = 0.0, rank1_std = 0.0;
  double map_mean = 0.0, map_std = 0.0;
  double minp_mean = 0.0, minp_std = 0.0;
  int seeds = 0;
};

// Retrieval quality as a function of the privacy budget: for each epsilon
// the gallery is privatized under `num_seeds` distinct noise seeds, an
// exact index is built, and Rank-1 / mAP / mINP are averaged. Queries stay
// clean (the release model privatizes the gallery). The epsilon = inf row
// is the noiseless baseline and is computed once.
std::vector<SweepPoint> privacy_utility_sweep(
    const EmbeddingBatch& gallery, const EmbeddingBatch& queries,
    const std::vector<double>& epsilons, double delta, double clip_radius,
    int num_seeds, uint64_t base_seed, int k);

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepPoint>& rows);
nlohmann::json sweep_to_json(const std::vector<SweepPoint>& rows);

struct ClusterStats {
  int label = 0;
  long count = 0;
  double intra_mean = 0.0;    // mean distance of members to own centroid
  double nearest_gap = 0.0;   // distance to the closest other centroid
};

struct CompactnessReport {
  double q = 0.0;  // mean over clusters of (intra_mean - nearest_gap)
  std::vector<ClusterStats> clusters;
  nlohmann::json to_json() const;
};

// Mean over clusters of (mean intra-cluster distance to centroid) minus
// (distance to the nearest other centroid). Lower is better; needs at
// least two clusters.
CompactnessReport compactness_report(const Eigen::MatrixXd& features,
                                     const std::vector<int>& labels);
double compactness(const Eigen::MatrixXd& features,
                   const std::vector<int>& labels);

// Rectified gradient-weighted attention map:
//   relu(sum_k (grad_k ⊙ attn_k) / N^2) over matched head pairs.
Eigen::MatrixXd attention_saliency(const std::vector<Eigen::MatrixXd>& heads,
                                   const std::vector<Eigen::MatrixXd>& grads);

// PAC-Bayes style bound: emp_risk + sqrt((kl + ln(2 sqrt(n) / delta)) / (2n)).
double pac_generalization_bound(double emp_risk, double kl, long n,
                                double delta);

}  // namespace topoguard

#endif  // TOPOGUARD_AUDIT_HPP_
