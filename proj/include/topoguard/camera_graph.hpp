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

#ifndef TOPOGUARD_CAMERA_GRAPH_HPP_
#define TOPOGUARD_CAMERA_GRAPH_HPP_

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace topoguard {

struct CameraPose {
  std::string id;
  Eigen::Vector3d position;                  // meters, world frame
  std::optional<Eigen::Matrix3d> rotation;   // world-from-camera, optional
};

// Dense affinity graph over a camera network.
//
// Edge weights follow a Gaussian kernel on pose disagreement:
//   A_ij = exp(-||R_ij p_i - p_j||^2 / (2 sigma^2)),  R_ij = R_j^T R_i,
// with R treated as identity for cameras that carry no rotation.
// Entries therefore live in (0, 1] and the diagonal is exactly 1.
class CameraGraph {
 public:
  CameraGraph() = default;

  // Validates poses and computes the full affinity matrix.
  // Rotations within 1e-6 of orthonormal are taken as-is, within 1e-3 they
  // are snapped to the nearest rotation (polar factor), anything worse is
  // rejected. Reflections (det <= 0) are always rejected.
  static CameraGraph build(std::vector<CameraPose> poses, double sigma_meters);

  const Eigen::MatrixXd& affinity() const { return affinity_; }
  Eigen::MatrixXd row_normalized() const;
  double sigma_meters() const { return sigma_; }
  int size() const { return static_cast<int>(poses_.size()); }
  const std::vector<CameraPose>& poses() const { return poses_; }

  // Serialized form stores poses + sigma (authoritative) along with the
  // affinity matrix for inspection; loading recomputes the matrix.
  nlohmann::json to_json() const;
  static CameraGraph from_json(const nlohmann::json& j);

  // Layout files carry only {"cameras": [...], "sigma_meters": s}.
  static CameraGraph from_layout_json(const nlohmann::json& layout);

 private:
  std::vector<CameraPose> poses_;
  double sigma_ = 0.0;
  Eigen::MatrixXd affinity_;
};

// Affinity shift budget when one camera position moves by ||delta_p||:
// 1 - exp(-||delta_p||^2 / (2 sigma^2)). This caps the entrywise change
// for the layouts the kernel targets, cameras spaced several bandwidths
// apart with sub-bandwidth position noise; with inter-camera distances
// near sigma itself the true change is first order in ||delta_p|| and can
// exceed this value.
double perturbation_bound(double position_delta_norm, double sigma_meters);

// L1 row normalization for nonnegative matrices. Rows must have a strictly
// positive sum; result rows sum to 1.
Eigen::MatrixXd row_normalize(const Eigen::MatrixXd& a);

}  // namespace topoguard

#endif  // TOPOGUARD_CAMERA_GRAPH_HPP_
