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

#include "topoguard/camera_graph.hpp"

#include <cmath>
#include <set>

#include "topoguard/errors.hpp"

namespace topoguard {

namespace {

constexpr double kOrthoAcceptTol = 1e-6;
constexpr double kOrthoRepairTol = 1e-3;

Eigen::Matrix3d validate_rotation(const Eigen::Matrix3d& r,
                                  const std::string& camera_id) {
  if (!r.allFinite()) {
    throw InvalidPose("camera '" + camera_id + "': rotation has non-finite entries");
  }
  double ortho_err =
      (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  Eigen::Matrix3d fixed = r;
  if (ortho_err > kOrthoAcceptTol) {
    if (ortho_err > kOrthoRepairTol) {
      throw InvalidPose("camera '" + camera_id +
                        "': rotation deviates from orthonormal by " +
                        std::to_string(ortho_err));
    }
    // Snap to the nearest rotation via the polar factor U V^T.
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    fixed = svd.matrixU() * svd.matrixV().transpose();
  }
  if (fixed.determinant() < 0.0) {
    throw InvalidPose("camera '" + camera_id + "': reflection (det < 0)");
  }
  return fixed;
}

}  // namespace

CameraGraph CameraGraph::build(std::vector<CameraPose> poses,
                               double sigma_meters) {
  if (poses.empty()) {
    throw InvalidInput("camera graph needs at least one camera");
  }
  if (!(sigma_meters > 0.0) || !std::isfinite(sigma_meters)) {
    throw InvalidParameter("sigma_meters must be positive and finite");
  }
  std::set<std::string> seen;
  for (auto& pose : poses) {
    if (!pose.position.allFinite()) {
      throw InvalidPose("camera '" + pose.id + "': non-finite position");
    }
    if (!seen.insert(pose.id).second) {
      throw InvalidInput("duplicate camera id '" + pose.id + "'");
    }
    if (pose.rotation) {
      pose.rotation = validate_rotation(*pose.rotation, pose.id);
    }
  }

  const int n = static_cast<int>(poses.size());
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma_meters * sigma_meters);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Matrix3d ri =
        poses[i].rotation ? *poses[i].rotation : Eigen::Matrix3d::Identity();
    for (int j = 0; j < n; ++j) {
      const Eigen::Matrix3d rj =
          poses[j].rotation ? *poses[j].rotation : Eigen::Matrix3d::Identity();
      Eigen::Vector3d residual =
          rj.transpose() * ri * poses[i].position - poses[j].position;
      a(i, j) = std::exp(-residual.squaredNorm() * inv_two_sigma_sq);
    }
  }

  CameraGraph g;
  g.poses_ = std::move(poses);
  g.sigma_ = sigma_meters;
  g.affinity_ = std::move(a);
  return g;
}

Eigen::MatrixXd CameraGraph::row_normalized() const {
  return row_normalize(affinity_);
}

nlohmann::json CameraGraph::to_json() const {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& pose : poses_) {
    nlohmann::json c;
    c["id"] = pose.id;
    c["position"] = {pose.position.x(), pose.position.y(), pose.position.z()};
    if (pose.rotation) {
      std::vector<double> flat(9);
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) flat[r * 3 + col] = (*pose.rotation)(r, col);
      c["rotation"] = flat;
    }
    cams.push_back(std::move(c));
  }
  nlohmann::json j;
  j["cameras"] = std::move(cams);
  j["sigma_meters"] = sigma_;
  std::vector<std::vector<double>> rows(affinity_.rows());
  for (int i = 0; i < affinity_.rows(); ++i) {
    rows[i].assign(affinity_.row(i).begin(), affinity_.row(i).end());
  }
  j["affinity"] = std::move(rows);
  return j;
}

CameraGraph CameraGraph::from_json(const nlohmann::json& j) {
  return from_layout_json(j);
}

CameraGraph CameraGraph::from_layout_json(const nlohmann::json& layout) {
  if (!layout.contains("cameras") || !layout.contains("sigma_meters")) {
    throw InvalidInput("layout needs 'cameras' and 'sigma_meters'");
  }
  std::vector<CameraPose> poses;
  for (const auto& c : layout.at("cameras")) {
    CameraPose pose;
    pose.id = c.at("id").get<std::string>();
    const auto& pos = c.at("position");
    if (pos.size() != 3) {
      throw InvalidInput("camera '" + pose.id + "': position must have 3 entries");
    }
    pose.position =
        Eigen::Vector3d(pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>());
    if (c.contains("rotation")) {
      const auto& rot = c.at("rotation");
      Eigen::Matrix3d r;
      if (rot.size() == 9) {
        // Flat row-major list.
        for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = rot[k].get<double>();
      } else if (rot.size() == 3 && rot[0].is_array()) {
        for (int row = 0; row < 3; ++row)
          for (int col = 0; col < 3; ++col) r(row, col) = rot[row][col].get<double>();
      } else {
        throw InvalidInput("camera '" + pose.id +
                           "': rotation must be 9 numbers (row-major) or 3x3");
      }
      pose.rotation = r;
    }
    poses.push_back(std::move(pose));
  }
  return build(std::move(poses), layout.at("sigma_meters").get<double>());
}

double perturbation_bound(double position_delta_norm, double sigma_meters) {
  if (!(sigma_meters > 0.0) || !std::isfinite(sigma_meters)) {
    throw InvalidParameter("sigma_meters must be positive and finite");
  }
  if (position_delta_norm < 0.0 || !std::isfinite(position_delta_norm)) {
    throw InvalidParameter("position delta norm must be nonnegative and finite");
  }
  double x = position_delta_norm * position_delta_norm /
             (2.0 * sigma_meters * sigma_meters);
  // -expm1(-x) = 1 - exp(-x) without cancellation for small x.
  return -std::expm1(-x);
}

Eigen::MatrixXd row_normalize(const Eigen::MatrixXd& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw InvalidInput("row_normalize: empty matrix");
  }
  if (!a.allFinite()) {
    throw InvalidInput("row_normalize: non-finite entries");
  }
  if ((a.array() < 0.0).any()) {
    throw InvalidInput("row_normalize: negative entries");
  }
  Eigen::VectorXd sums = a.rowwise().sum();
  for (int i = 0; i < sums.size(); ++i) {
    if (!(sums(i) > 0.0)) {
      throw DegenerateInput("row_normalize: row " + std::to_string(i) +
                            " sums to zero");
    }
  }
  return sums.cwiseInverse().asDiagonal() * a;
}

}  // namespace topoguard
