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

#ifndef TOPOGUARD_DP_CORE_HPP_
#define TOPOGUARD_DP_CORE_HPP_

#include <cstdint>

#include <Eigen/Dense>

namespace topoguard {

// Gaussian mechanism over embedding vectors. Replacing one individual's
// embedding moves the clipped value by at most 2 * clip_radius in L2, so
// that is the sensitivity the noise is calibrated against.
struct DpParams {
  double clip_radius = 1.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double sensitivity = 0.0;   // 2 * clip_radius when calibrated
  double noise_sigma = 0.0;   // 0 disables noise (clip only)
  uint64_t rng_seed = 0;

  // Fills sensitivity and noise_sigma from (clip_radius, epsilon, delta).
  static DpParams calibrate(double clip_radius, double epsilon, double delta,
                            uint64_t rng_seed);
};

// Projects f onto the L2 ball of the given radius (identity inside it).
Eigen::VectorXd clip_to_radius(const Eigen::VectorXd& f, double radius);
Eigen::MatrixXd clip_rows(const Eigen::MatrixXd& features, double radius);

// L2 sensitivity of one clipped embedding under replacement: 2 * radius.
double sensitivity_bound(double radius);

// Gaussian mechanism noise scale:
//   sigma = sqrt(2 ln(1.25 / delta)) * sensitivity / epsilon.
double calibrate_sigma(double sensitivity, double epsilon, double delta);

// Clip then add iid N(0, sigma^2) per coordinate. Noise is drawn from the
// counter RNG at (params.rng_seed, stream), so a fixed (seed, stream) pair
// always produces the same output and distinct streams are independent.
// Stream conventionally carries the embedding's ordinal.
Eigen::VectorXd privatize(const Eigen::VectorXd& f, const DpParams& params,
                          uint64_t stream);

// Row-wise privatize: row i uses stream first_stream + i.
Eigen::MatrixXd privatize_rows(const Eigen::MatrixXd& features,
                               const DpParams& params,
                               uint64_t first_stream = 0);

}  // namespace topoguard

#endif  // TOPOGUARD_DP_CORE_HPP_
