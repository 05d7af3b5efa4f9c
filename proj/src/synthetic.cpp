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

#include "topoguard/synthetic.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "topoguard/errors.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

namespace {

constexpr uint64_t kCentroidStream = 0x0100;
constexpr uint64_t kSampleStream = 0x0200;
constexpr uint64_t kCameraStream = 0x0300;

Eigen::MatrixXd draw_centroids(const SyntheticSpec& spec) {
  CounterRng rng(spec.seed, kCentroidStream);
  Eigen::MatrixXd c(spec.identities, spec.dim);
  for (int i = 0; i < spec.identities; ++i) {
    for (int j = 0; j < spec.dim; ++j) {
      c(i, j) = spec.inter_separation * rng.next_gaussian();
    }
  }
  // Guarantee the promised separation by rescaling if the draw came out
  // too tight. Deterministic, so reproducibility is unaffected.
  double min_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < spec.identities; ++i) {
    for (int j = i + 1; j < spec.identities; ++j) {
      min_dist = std::min(min_dist, (c.row(i) - c.row(j)).norm());
    }
  }
  if (spec.identities > 1 && min_dist < spec.inter_separation) {
    if (min_dist <= 0.0) throw DegenerateInput("coincident centroids drawn");
    c *= spec.inter_separation / min_dist;
  }
  return c;
}

std::vector<CameraPose> circle_layout(const SyntheticSpec& spec) {
  std::vector<CameraPose> poses;
  poses.reserve(spec.cameras);
  for (int k = 0; k < spec.cameras; ++k) {
    double angle = 2.0 * M_PI * k / spec.cameras;
    CameraPose pose;
    pose.id = "cam" + std::to_string(k);
    pose.position = Eigen::Vector3d(spec.camera_circle_radius_m * std::cos(angle),
                                    spec.camera_circle_radius_m * std::sin(angle),
                                    3.0);
    poses.push_back(std::move(pose));
  }
  return poses;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.identities < 1) throw InvalidParameter("identities must be >= 1");
  if (spec.samples_per_identity < 1) {
    throw InvalidParameter("samples_per_identity must be >= 1");
  }
  if (spec.dim < 1) throw InvalidParameter("dim must be >= 1");
  if (spec.cameras < 1) throw InvalidParameter("cameras must be >= 1");
  if (!(spec.intra_sigma >= 0.0) || !std::isfinite(spec.intra_sigma)) {
    throw InvalidParameter("intra_sigma must be finite and >= 0");
  }
  if (!(spec.inter_separation > 0.0)) {
    throw InvalidParameter("inter_separation must be > 0");
  }
  if (spec.high_variance_count < 0 ||
      spec.high_variance_count > spec.identities) {
    throw InvalidParameter("high_variance_count out of range");
  }
  if (!(spec.high_variance_multiplier > 0.0)) {
    throw InvalidParameter("high_variance_multiplier must be > 0");
  }

  SyntheticData data;
  data.centroids = draw_centroids(spec);

  const int total = spec.identities * spec.samples_per_identity;
  data.batch.features.resize(total, spec.dim);
  data.batch.labels.resize(total);
  data.batch.cameras.resize(total);
  data.batch.timestamps.resize(total);

  // Fixed unit view offset per camera, scaled by camera_view_shift.
  CounterRng cam_rng(spec.seed, kCameraStream);
  Eigen::MatrixXd view(spec.cameras, spec.dim);
  for (int k = 0; k < spec.cameras; ++k) {
    for (int j = 0; j < spec.dim; ++j) view(k, j) = cam_rng.next_gaussian();
    double n = view.row(k).norm();
    if (n > 0.0) view.row(k) /= n;
  }
  view *= spec.camera_view_shift;

  CounterRng rng(spec.seed, kSampleStream);
  int row = 0;
  for (int id = 0; id < spec.identities; ++id) {
    double sigma = spec.intra_sigma;
    if (id < spec.high_variance_count) sigma *= spec.high_variance_multiplier;
    for (int s = 0; s < spec.samples_per_identity; ++s, ++row) {
      int cam = row % spec.cameras;
      for (int j = 0; j < spec.dim; ++j) {
        data.batch.features(row, j) =
            data.centroids(id, j) + view(cam, j) + sigma * rng.next_gaussian();
      }
      data.batch.labels[row] = static_cast<uint32_t>(id);
      data.batch.cameras[row] = static_cast<uint32_t>(cam);
      data.batch.timestamps[row] = 0.5 * row;
    }
  }

  data.graph = CameraGraph::build(circle_layout(spec), spec.graph_sigma_meters);

  data.batch.provenance = {
      {"source", "synthetic"},
      {"identities", spec.identities},
      {"samples_per_identity", spec.samples_per_identity},
      {"dim", spec.dim},
      {"cameras", spec.cameras},
      {"intra_sigma", spec.intra_sigma},
      {"inter_separation", spec.inter_separation},
      {"camera_view_shift", spec.camera_view_shift},
      {"high_variance_count", spec.high_variance_count},
      {"high_variance_multiplier", spec.high_variance_multiplier},
      {"seed", spec.seed},
  };
  return data;
}

}  // namespace topoguard
