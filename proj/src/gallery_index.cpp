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

#include "topoguard/gallery_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

#include "topoguard/errors.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

namespace {

constexpr char kMagic[4] = {'T', 'G', 'I', 'X'};
constexpr uint32_t kVersion = 1;

using DistId = std::pair<double, uint32_t>;  // ordered by (dist, id)

double dissim(const Eigen::MatrixXd& vectors, uint32_t id,
              const Eigen::VectorXd& unit_q) {
  return 1.0 - vectors.row(id).dot(unit_q);
}

Eigen::VectorXd normalize_query(const Eigen::VectorXd& q, int dim) {
  if (q.size() != dim) {
    throw InvalidInput("query dim " + std::to_string(q.size()) +
                       " != index dim " + std::to_string(dim));
  }
  if (!q.allFinite()) throw InvalidInput("query has non-finite entries");
  double n = q.norm();
  if (!(n > 0.0)) throw DegenerateInput("query has zero norm");
  return q / n;
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw PersistenceError(std::string("truncated index file: ") + what);
  return v;
}

}  // namespace

GalleryIndex GalleryIndex::build(const EmbeddingBatch& gallery) {
  return build(gallery, BuildParams());
}

GalleryIndex GalleryIndex::build(const EmbeddingBatch& gallery,
                                 const BuildParams& params) {
  if (gallery.count() == 0) throw EmptyBatch("cannot index an empty gallery");
  if (params.graph_degree < 2) throw InvalidParameter("graph degree must be >= 2");
  if (params.ef_construction < params.graph_degree) {
    throw InvalidParameter("ef_construction must be >= graph degree");
  }
  if (params.ef_search < 1) throw InvalidParameter("ef_search must be >= 1");

  GalleryIndex index;
  index.params_ = params;
  index.labels_ = gallery.labels;
  index.vectors_.resize(gallery.count(), gallery.dim());
  for (int i = 0; i < gallery.count(); ++i) {
    double norm = gallery.features.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DegenerateInput("gallery embedding " + std::to_string(i) +
                            " has zero or non-finite norm");
    }
    index.vectors_.row(i) = gallery.features.row(i) / norm;
  }

  if (params.mode == Mode::kApproximate) {
    const int n = gallery.count();
    index.neighbors_.assign(n, {});
    index.node_level_.assign(n, 0);
    // Geometric level assignment, drawn per node from the counter RNG so
    // insertion order alone determines the file bytes.
    const double level_mult = 1.0 / std::log(static_cast<double>(params.graph_degree));
    CounterRng level_rng(params.seed, /*stream=*/0x6c76ULL);
    for (int i = 0; i < n; ++i) {
      double u = level_rng.uniform_at(static_cast<uint64_t>(i));
      index.node_level_[i] = static_cast<int>(-std::log(u) * level_mult);
    }
    for (int i = 0; i < n; ++i) {
      index.insert_node(i, index.node_level_[i]);
    }
  }
  return index;
}

// Beam search over one layer. Returns up to ef (dist, id) pairs sorted
// ascending.
std::vector<DistId> GalleryIndex::search_layer(const Eigen::VectorXd& unit_q,
                                               uint32_t entry, int level,
                                               int ef) const {
  std::priority_queue<DistId, std::vector<DistId>, std::greater<>> candidates;
  std::priority_queue<DistId> best;  // max-heap: worst of the kept set on top
  std::vector<char> visited(vectors_.rows(), 0);

  double d0 = dissim(vectors_, entry, unit_q);
  candidates.push({d0, entry});
  best.push({d0, entry});
  visited[entry] = 1;

  while (!candidates.empty()) {
    auto [d, node] = candidates.top();
    candidates.pop();
    if (d > best.top().first && static_cast<int>(best.size()) >= ef) break;
    for (uint32_t nb : neighbors_[node][level]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      double dn = dissim(vectors_, nb, unit_q);
      if (static_cast<int>(best.size()) < ef || dn < best.top().first) {
        candidates.push({dn, nb});
        best.push({dn, nb});
        if (static_cast<int>(best.size()) > ef) best.pop();
      }
    }
  }

  std::vector<DistId> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Diversity-aware neighbor selection: a candidate is kept only if it is
// closer to the query than to every already-kept neighbor. If that leaves
// slots open, the nearest rejected candidates fill them.
std::vector<uint32_t> GalleryIndex::select_neighbors(
    const Eigen::VectorXd& unit_q, std::vector<DistId> candidates,
    int target) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<uint32_t> kept;
  std::vector<DistId> rejected;
  for (const auto& [d, id] : candidates) {
    if (static_cast<int>(kept.size()) >= target) break;
    bool diverse = true;
    for (uint32_t other : kept) {
      double d_pair = 1.0 - vectors_.row(id).dot(vectors_.row(other));
      if (d_pair < d) {
        diverse = false;
        break;
      }
    }
    if (diverse) {
      kept.push_back(id);
    } else {
      rejected.push_back({d, id});
    }
  }
  for (const auto& [d, id] : rejected) {
    if (static_cast<int>(kept.size()) >= target) break;
    kept.push_back(id);
  }
  return kept;
}

void GalleryIndex::insert_node(int id, int level) {
  neighbors_[id].assign(level + 1, {});
  if (max_level_ < 0) {
    max_level_ = level;
    entry_point_ = static_cast<uint32_t>(id);
    return;
  }

  Eigen::VectorXd unit_q = vectors_.row(id).transpose();
  uint32_t entry = entry_point_;
  // Greedy descent through layers above the node's level.
  for (int l = max_level_; l > level; --l) {
    if (l > node_level_[entry]) continue;
    bool improved = true;
    while (improved) {
      improved = false;
      double d_entry = dissim(vectors_, entry, unit_q);
      for (uint32_t nb : neighbors_[entry][l]) {
        double d = dissim(vectors_, nb, unit_q);
        if (d < d_entry || (d == d_entry && nb < entry)) {
          d_entry = d;
          entry = nb;
          improved = true;
        }
      }
    }
  }

  const int max_degree0 = 2 * params_.graph_degree;
  for (int l = std::min(level, max_level_); l >= 0; --l) {
    auto found = search_layer(unit_q, entry, l, params_.ef_construction);
    entry = found.front().second;
    auto chosen = select_neighbors(unit_q, found, params_.graph_degree);
    neighbors_[id][l] = chosen;
    int cap = (l == 0) ? max_degree0 : params_.graph_degree;
    for (uint32_t nb : chosen) {
      auto& back = neighbors_[nb][l];
      back.push_back(static_cast<uint32_t>(id));
      if (static_cast<int>(back.size()) > cap) {
        // Re-select to shrink the over-full list.
        Eigen::VectorXd nb_vec = vectors_.row(nb).transpose();
        std::vector<DistId> cands;
        cands.reserve(back.size());
        for (uint32_t x : back) {
          cands.push_back({dissim(vectors_, x, nb_vec), x});
        }
        back = select_neighbors(nb_vec, std::move(cands), cap);
      }
    }
  }

  if (level > max_level_) {
    max_level_ = level;
    entry_point_ = static_cast<uint32_t>(id);
  }
}

GalleryIndex::QueryResult GalleryIndex::exact_search(
    const Eigen::VectorXd& unit_q, int k) const {
  Eigen::VectorXd dots = vectors_ * unit_q;
  std::vector<DistId> all(vectors_.rows());
  for (int i = 0; i < vectors_.rows(); ++i) {
    all[i] = {1.0 - dots(i), static_cast<uint32_t>(i)};
  }
  int kk = std::min<int>(k, static_cast<int>(all.size()));
  std::partial_sort(all.begin(), all.begin() + kk, all.end());
  QueryResult out(kk);
  for (int i = 0; i < kk; ++i) out[i] = {all[i].second, all[i].first};
  return out;
}

GalleryIndex::QueryResult GalleryIndex::graph_search(
    const Eigen::VectorXd& unit_q, int k, int ef_search) const {
  uint32_t entry = entry_point_;
  for (int l = max_level_; l > 0; --l) {
    bool improved = true;
    while (improved) {
      improved = false;
      double d_entry = dissim(vectors_, entry, unit_q);
      for (uint32_t nb : neighbors_[entry][l]) {
        double d = dissim(vectors_, nb, unit_q);
        if (d < d_entry || (d == d_entry && nb < entry)) {
          d_entry = d;
          entry = nb;
          improved = true;
        }
      }
    }
  }
  auto found = search_layer(unit_q, entry, 0, std::max(ef_search, k));
  int kk = std::min<int>(k, static_cast<int>(found.size()));
  QueryResult out(kk);
  for (int i = 0; i < kk; ++i) out[i] = {found[i].second, found[i].first};
  return out;
}

GalleryIndex::QueryResult GalleryIndex::query(const Eigen::VectorXd& q,
                                              int k) const {
  return query(q, k, params_.ef_search);
}

GalleryIndex::QueryResult GalleryIndex::query(const Eigen::VectorXd& q, int k,
                                              int ef_search) const {
  if (k < 1) throw InvalidParameter("k must be >= 1");
  if (size() == 0) throw EmptyBatch("index is empty");
  Eigen::VectorXd unit_q = normalize_query(q, dim());
  if (params_.mode == Mode::kExact) return exact_search(unit_q, k);
  return graph_search(unit_q, k, ef_search);
}

GalleryIndex::EvalMetrics GalleryIndex::evaluate(const EmbeddingBatch& queries,
                                                 int k,
                                                 bool self_exclusion) const {
  if (k < 1) throw InvalidParameter("k must be >= 1");
  if (labels_.empty()) {
    throw InvalidEvalSetup("gallery has no labels to evaluate against");
  }
  if (!queries.has_labels()) {
    throw InvalidEvalSetup("query batch has no labels");
  }
  if (queries.count() == 0) throw EmptyBatch("no queries");
  if (self_exclusion && queries.count() != size()) {
    throw InvalidEvalSetup(
        "self-exclusion assumes the query set is the gallery itself");
  }

  const int n = size();
  double rank1_sum = 0.0, rankk_sum = 0.0, ap_sum = 0.0, inp_sum = 0.0;
  std::vector<DistId> order(n);
  for (int qi = 0; qi < queries.count(); ++qi) {
    Eigen::VectorXd unit_q =
        normalize_query(queries.features.row(qi).transpose(), dim());
    Eigen::VectorXd dots = vectors_ * unit_q;
    order.resize(n);
    for (int i = 0; i < n; ++i) {
      order[i] = {1.0 - dots(i), static_cast<uint32_t>(i)};
    }
    std::sort(order.begin(), order.end());

    uint32_t q_label = queries.labels[qi];
    int positives = 0;
    int hits = 0, rank = 0;
    double ap = 0.0;
    int first_hit_rank = -1, last_hit_rank = -1;
    for (const auto& [d, id] : order) {
      if (self_exclusion && static_cast<int>(id) == qi) continue;
      ++rank;
      if (labels_[id] == q_label) {
        ++hits;
        ap += static_cast<double>(hits) / rank;
        if (first_hit_rank < 0) first_hit_rank = rank;
        last_hit_rank = rank;
        ++positives;
      }
    }
    if (positives == 0) {
      throw InvalidEvalSetup("query " + std::to_string(qi) +
                             " has no positives in the gallery");
    }
    rank1_sum += (first_hit_rank == 1) ? 1.0 : 0.0;
    rankk_sum += (first_hit_rank <= k) ? 1.0 : 0.0;
    ap_sum += ap / positives;
    inp_sum += static_cast<double>(positives) / last_hit_rank;
  }

  EvalMetrics metrics;
  metrics.query_count = queries.count();
  metrics.k = k;
  metrics.rank1 = rank1_sum / queries.count();
  metrics.rank_k = rankk_sum / queries.count();
  metrics.mean_ap = ap_sum / queries.count();
  metrics.mean_inp = inp_sum / queries.count();
  return metrics;
}

GalleryIndex::PrivateQueryOutcome GalleryIndex::private_query(
    const Eigen::VectorXd& q, int k, const DpParams& params,
    PrivacyLedger& ledger) const {
  auto outcome = ledger.try_spend(params.epsilon, params.delta, "query");
  if (!outcome.accepted) {
    return {false, {}, outcome.totals};
  }
  // The admitted spend's index doubles as the noise stream, so replaying a
  // ledger reproduces every privatized query bit for bit.
  uint64_t stream = static_cast<uint64_t>(ledger.size() - 1);
  Eigen::VectorXd noisy = privatize(q, params, stream);
  return {true, query(noisy, k), outcome.totals};
}

void GalleryIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");

  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<uint8_t>(params_.mode));
  write_raw(out, static_cast<uint32_t>(size()));
  write_raw(out, static_cast<uint32_t>(dim()));
  write_raw(out, static_cast<int32_t>(params_.graph_degree));
  write_raw(out, static_cast<int32_t>(params_.ef_construction));
  write_raw(out, static_cast<int32_t>(params_.ef_search));
  write_raw(out, params_.seed);
  write_raw(out, params_.created_unix);

  for (int i = 0; i < vectors_.rows(); ++i) {
    for (int j = 0; j < vectors_.cols(); ++j) {
      write_raw(out, vectors_(i, j));
    }
  }
  uint8_t has_labels = labels_.empty() ? 0 : 1;
  write_raw(out, has_labels);
  for (uint32_t v : labels_) write_raw(out, v);

  if (params_.mode == Mode::kApproximate) {
    write_raw(out, static_cast<int32_t>(max_level_));
    write_raw(out, entry_point_);
    for (int i = 0; i < size(); ++i) {
      write_raw(out, static_cast<int32_t>(node_level_[i]));
      for (int l = 0; l <= node_level_[i]; ++l) {
        write_raw(out, static_cast<uint32_t>(neighbors_[i][l].size()));
        for (uint32_t nb : neighbors_[i][l]) write_raw(out, nb);
      }
    }
  }

  nlohmann::json meta;
  meta["privatization_hash"] = params_.privatization_hash;
  meta["created_unix"] = params_.created_unix;
  std::string meta_str = meta.dump();
  write_raw(out, static_cast<uint32_t>(meta_str.size()));
  out << meta_str;
  out.flush();
  if (!out) throw PersistenceError("write failed for " + path);
}

GalleryIndex GalleryIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw PersistenceError(path + " is not an index file (bad magic)");
  }
  uint32_t version = read_raw<uint32_t>(in, "version");
  if (version != kVersion) {
    throw PersistenceError("unsupported index version " + std::to_string(version));
  }

  GalleryIndex index;
  index.params_.mode = static_cast<Mode>(read_raw<uint8_t>(in, "mode"));
  uint32_t count = read_raw<uint32_t>(in, "count");
  uint32_t dim = read_raw<uint32_t>(in, "dim");
  index.params_.graph_degree = read_raw<int32_t>(in, "graph_degree");
  index.params_.ef_construction = read_raw<int32_t>(in, "ef_construction");
  index.params_.ef_search = read_raw<int32_t>(in, "ef_search");
  index.params_.seed = read_raw<uint64_t>(in, "seed");
  index.params_.created_unix = read_raw<uint64_t>(in, "created_unix");
  if (count == 0 || dim == 0) throw PersistenceError(path + ": empty index");

  index.vectors_.resize(count, dim);
  for (uint32_t i = 0; i < count; ++i) {
    for (uint32_t j = 0; j < dim; ++j) {
      index.vectors_(i, j) = read_raw<double>(in, "vectors");
    }
  }
  if (read_raw<uint8_t>(in, "label flag")) {
    index.labels_.resize(count);
    for (auto& v : index.labels_) v = read_raw<uint32_t>(in, "labels");
  }

  if (index.params_.mode == Mode::kApproximate) {
    index.max_level_ = read_raw<int32_t>(in, "max level");
    index.entry_point_ = read_raw<uint32_t>(in, "entry point");
    index.neighbors_.assign(count, {});
    index.node_level_.assign(count, 0);
    for (uint32_t i = 0; i < count; ++i) {
      int level = read_raw<int32_t>(in, "node level");
      index.node_level_[i] = level;
      index.neighbors_[i].assign(level + 1, {});
      for (int l = 0; l <= level; ++l) {
        uint32_t deg = read_raw<uint32_t>(in, "degree");
        index.neighbors_[i][l].resize(deg);
        for (auto& nb : index.neighbors_[i][l]) {
          nb = read_raw<uint32_t>(in, "neighbor");
          if (nb >= count) throw PersistenceError(path + ": neighbor id out of range");
        }
      }
    }
  }

  uint32_t meta_len = read_raw<uint32_t>(in, "metadata length");
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) throw PersistenceError(path + ": truncated metadata");
  try {
    nlohmann::json meta = nlohmann::json::parse(meta_str);
    index.params_.privatization_hash =
        meta.value("privatization_hash", std::string());
  } catch (const nlohmann::json::exception&) {
    throw PersistenceError(path + ": malformed metadata");
  }
  return index;
}

}  // namespace topoguard
