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

#ifndef TOPOGUARD_EMBEDDING_IO_HPP_
#define TOPOGUARD_EMBEDDING_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace topoguard {

// In-memory embedding batch. Features are doubles for numeric work; the
// on-disk representation quantizes to float32.
struct EmbeddingBatch {
  Eigen::MatrixXd features;         // count x dim
  std::vector<uint32_t> labels;     // empty = absent
  std::vector<uint32_t> cameras;    // empty = absent
  std::vector<double> timestamps;   // empty = absent
  nlohmann::json provenance;        // free-form trailer, may be null

  int count() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  bool has_labels() const { return !labels.empty(); }
  bool has_cameras() const { return !cameras.empty(); }
  bool has_timestamps() const { return !timestamps.empty(); }
  std::vector<int> labels_as_int() const;
};

// Binary embedding container:
//   magic "TGEB" | u32 version=1 | u32 count | u32 dim | u8 flags
//   count*dim float32 LE (row-major)
//   [u32 labels[count]]  if flags bit 0
//   [u32 cameras[count]] if flags bit 1
//   [f64 timestamps[count]] if flags bit 2
//   UTF-8 JSON provenance trailer to EOF (may be empty)
void write_tgeb(const std::string& path, const EmbeddingBatch& batch);
EmbeddingBatch read_tgeb(const std::string& path);

// Small-file CSV ingest: one embedding per row, numeric fields separated
// by commas (whitespace tolerated).
Eigen::MatrixXd read_csv_matrix(const std::string& path);
Eigen::VectorXd read_csv_vector(const std::string& path);
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m);

}  // namespace topoguard

#endif  // TOPOGUARD_EMBEDDING_IO_HPP_
