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

#ifndef TOPOGUARD_SYNTHETIC_HPP_
#define TOPOGUARD_SYNTHETIC_HPP_

#include <cstdint>

#include <Eigen/Dense>

#include "topoguard/camera_graph.hpp"
#include "topoguard/embedding_io.hpp"

namespace topoguard {

// Recipe for a labeled embedding population with camera structure. Samples
// for one identity are drawn around a shared centroid; each camera adds its
// own fixed view offset so cross-camera matching is harder than same-camera
// matching. Everything is a pure function of the seed.
struct SyntheticSpec {
  int identities = 16;
  int samples_per_identity = 8;
  int dim = 32;
  int cameras = 4;
  // Per-coordinate noise around the identity centroid.
  double intra_sigma = 0.15;
  // Minimum pairwise distance enforced between identity centroids.
  double inter_separation = 1.0;
  // Magnitude of the per-camera additive view offset.
  double camera_view_shift = 0.05;
  // The first high_variance_count identities get intra_sigma multiplied by
  // high_variance_multiplier, useful for margin-adaptation experiments.
  int high_variance_count = 0;
  double high_variance_multiplier = 1.0;
  uint64_t seed = 0;
  // Camera layout: evenly spaced on a circle of this radius, 3 m up.
  double camera_circle_radius_m = 50.0;
  double graph_sigma_meters = 25.0;
};

struct SyntheticData {
  EmbeddingBatch batch;
  CameraGraph graph;
  // One row per identity, in label order.
  Eigen::MatrixXd centroids;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace topoguard

#endif  // TOPOGUARD_SYNTHETIC_HPP_
