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

#include "topoguard/embedding_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "topoguard/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "TGEB I/O assumes a little-endian host");

namespace topoguard {

namespace {

constexpr char kMagic[4] = {'T', 'G', 'E', 'B'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kFlagLabels = 1u << 0;
constexpr uint8_t kFlagCameras = 1u << 1;
constexpr uint8_t kFlagTimestamps = 1u << 2;
// Guard against absurd headers before allocating.
constexpr uint64_t kMaxElements = 1ull << 30;

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw PersistenceError(std::string("truncated TGEB: ") + what);
  return value;
}

}  // namespace

std::vector<int> EmbeddingBatch::labels_as_int() const {
  std::vector<int> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) out[i] = static_cast<int>(labels[i]);
  return out;
}

void write_tgeb(const std::string& path, const EmbeddingBatch& batch) {
  const int n = batch.count();
  const int d = batch.dim();
  if (n < 1 || d < 1) throw EmptyBatch("cannot write an empty batch");
  if (!batch.features.allFinite()) {
    throw InvalidInput("refusing to write non-finite features");
  }
  auto check_len = [n](size_t len, const char* what) {
    if (len != 0 && len != static_cast<size_t>(n)) {
      throw InvalidInput(std::string(what) + " length must match count");
    }
  };
  check_len(batch.labels.size(), "labels");
  check_len(batch.cameras.size(), "cameras");
  check_len(batch.timestamps.size(), "timestamps");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");

  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<uint32_t>(n));
  write_raw(out, static_cast<uint32_t>(d));
  uint8_t flags = 0;
  if (batch.has_labels()) flags |= kFlagLabels;
  if (batch.has_cameras()) flags |= kFlagCameras;
  if (batch.has_timestamps()) flags |= kFlagTimestamps;
  write_raw(out, flags);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      write_raw(out, static_cast<float>(batch.features(i, j)));
    }
  }
  for (uint32_t v : batch.labels) write_raw(out, v);
  for (uint32_t v : batch.cameras) write_raw(out, v);
  for (double v : batch.timestamps) write_raw(out, v);

  if (!batch.provenance.is_null()) {
    out << batch.provenance.dump();
  }
  out.flush();
  if (!out) throw PersistenceError("write failed for " + path);
}

EmbeddingBatch read_tgeb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw PersistenceError(path + " is not a TGEB file (bad magic)");
  }
  uint32_t version = read_raw<uint32_t>(in, "version");
  if (version != kVersion) {
    throw PersistenceError("unsupported TGEB version " + std::to_string(version));
  }
  uint32_t count = read_raw<uint32_t>(in, "count");
  uint32_t dim = read_raw<uint32_t>(in, "dim");
  uint8_t flags = read_raw<uint8_t>(in, "flags");
  if (count == 0 || dim == 0) throw EmptyBatch(path + " holds an empty batch");
  if (static_cast<uint64_t>(count) * dim > kMaxElements) {
    throw SizeLimit(path + " header exceeds the element limit");
  }

  EmbeddingBatch batch;
  batch.features.resize(count, dim);
  for (uint32_t i = 0; i < count; ++i) {
    for (uint32_t j = 0; j < dim; ++j) {
      batch.features(i, j) = read_raw<float>(in, "features");
    }
  }
  if (flags & kFlagLabels) {
    batch.labels.resize(count);
    for (auto& v : batch.labels) v = read_raw<uint32_t>(in, "labels");
  }
  if (flags & kFlagCameras) {
    batch.cameras.resize(count);
    for (auto& v : batch.cameras) v = read_raw<uint32_t>(in, "cameras");
  }
  if (flags & kFlagTimestamps) {
    batch.timestamps.resize(count);
    for (auto& v : batch.timestamps) v = read_raw<double>(in, "timestamps");
  }

  std::string trailer((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (!trailer.empty()) {
    try {
      batch.provenance = nlohmann::json::parse(trailer);
    } catch (const nlohmann::json::exception&) {
      throw PersistenceError(path + " has a malformed provenance trailer");
    }
  }
  return batch;
}

Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PersistenceError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidInput(path + ": non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidInput(path + ": ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyBatch(path + " is empty");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

Eigen::VectorXd read_csv_vector(const std::string& path) {
  Eigen::MatrixXd m = read_csv_matrix(path);
  if (m.rows() == 1) return m.row(0).transpose();
  if (m.cols() == 1) return m.col(0);
  throw InvalidInput(path + " is not a single row or column");
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");
  out.precision(17);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

}  // namespace topoguard
