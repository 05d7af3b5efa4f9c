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

#include "topoguard/dp_core.hpp"

#include <cmath>

#include "topoguard/errors.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

DpParams DpParams::calibrate(double clip_radius, double epsilon, double delta,
                             uint64_t rng_seed) {
  DpParams params;
  params.clip_radius = clip_radius;
  params.epsilon = epsilon;
  params.delta = delta;
  params.sensitivity = sensitivity_bound(clip_radius);
  params.noise_sigma = calibrate_sigma(params.sensitivity, epsilon, delta);
  params.rng_seed = rng_seed;
  return params;
}

Eigen::VectorXd clip_to_radius(const Eigen::VectorXd& f, double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidParameter("clip radius must be positive and finite");
  }
  if (!f.allFinite()) throw InvalidInput("clip: non-finite embedding");
  double norm = f.norm();
  if (norm <= radius) return f;
  return f * (radius / norm);
}

Eigen::MatrixXd clip_rows(const Eigen::MatrixXd& features, double radius) {
  Eigen::MatrixXd out(features.rows(), features.cols());
  for (int i = 0; i < features.rows(); ++i) {
    out.row(i) = clip_to_radius(features.row(i), radius).transpose();
  }
  return out;
}

double sensitivity_bound(double radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidParameter("clip radius must be positive and finite");
  }
  return 2.0 * radius;
}

double calibrate_sigma(double sensitivity, double epsilon, double delta) {
  if (!(sensitivity > 0.0) || !std::isfinite(sensitivity)) {
    throw InvalidParameter("sensitivity must be positive and finite");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidParameter("epsilon must be positive and finite");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw InvalidParameter("delta must lie in (0, 1)");
  }
  return std::sqrt(2.0 * std::log(1.25 / delta)) * sensitivity / epsilon;
}

Eigen::VectorXd privatize(const Eigen::VectorXd& f, const DpParams& params,
                          uint64_t stream) {
  if (params.noise_sigma < 0.0 || !std::isfinite(params.noise_sigma)) {
    throw InvalidParameter("noise sigma must be nonnegative and finite");
  }
  Eigen::VectorXd clipped = clip_to_radius(f, params.clip_radius);
  if (params.noise_sigma == 0.0) return clipped;
  CounterRng rng(params.rng_seed, stream);
  for (int k = 0; k < clipped.size(); ++k) {
    clipped(k) += params.noise_sigma * rng.gaussian_at(static_cast<uint64_t>(k));
  }
  return clipped;
}

Eigen::MatrixXd privatize_rows(const Eigen::MatrixXd& features,
                               const DpParams& params, uint64_t first_stream) {
  Eigen::MatrixXd out(features.rows(), features.cols());
  for (int i = 0; i < features.rows(); ++i) {
    out.row(i) =
        privatize(features.row(i), params, first_stream + static_cast<uint64_t>(i))
            .transpose();
  }
  return out;
}

}  // namespace topoguard
