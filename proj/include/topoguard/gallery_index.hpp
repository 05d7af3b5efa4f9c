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

#ifndef TOPOGUARD_GALLERY_INDEX_HPP_
#define TOPOGUARD_GALLERY_INDEX_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topoguard/accountant.hpp"
#include "topoguard/dp_core.hpp"
#include "topoguard/embedding_io.hpp"

namespace topoguard {

// Cosine-dissimilarity gallery over L2-normalized embeddings.
//
// Exact mode scans the full gallery; approximate mode runs beam search
// over a layered navigable small-world graph. Builds are single-threaded
// and seeded, so the same inputs produce byte-identical index files.
class GalleryIndex {
 public:
  enum class Mode : uint8_t { kExact = 0, kApproximate = 1 };

  struct BuildParams {
    Mode mode = Mode::kExact;
    int graph_degree = 16;        // M
    int ef_construction = 200;
    int ef_search = 64;           // default beam width at query time
    uint64_t seed = 0;
    std::string privatization_hash;  // provenance only
    uint64_t created_unix = 0;       // 0 keeps builds reproducible
  };

  struct Neighbor {
    uint32_t id = 0;              // gallery ordinal
    double dissimilarity = 0.0;   // 1 - cosine, in [0, 2]
  };
  using QueryResult = std::vector<Neighbor>;

  struct EvalMetrics {
    double rank1 = 0.0;
    double rank_k = 0.0;
    double mean_ap = 0.0;
    double mean_inp = 0.0;
    int k = 0;
    int query_count = 0;
  };

  GalleryIndex() = default;

  static GalleryIndex build(const EmbeddingBatch& gallery);
  static GalleryIndex build(const EmbeddingBatch& gallery,
                            const BuildParams& params);

  // Top-k by (dissimilarity, id). k is clamped to the gallery size.
  QueryResult query(const Eigen::VectorXd& q, int k) const;
  QueryResult query(const Eigen::VectorXd& q, int k, int ef_search) const;

  // Retrieval quality of the stored embeddings: Rank-1/Rank-k, mAP and
  // mINP over the full exact ranking (beam search quality is measured
  // separately via recall). With self_exclusion, query i never matches
  // gallery ordinal i, which requires query and gallery sets of equal size.
  EvalMetrics evaluate(const EmbeddingBatch& queries, int k,
                       bool self_exclusion) const;

  struct PrivateQueryOutcome {
    bool accepted = false;
    QueryResult result;
    ComposedTotals totals;
  };

  // Spends (params.epsilon, params.delta) against the ledger; on refusal
  // returns no neighbors. On acceptance the query embedding is privatized
  // with the index of the admitted spend as the noise stream.
  PrivateQueryOutcome private_query(const Eigen::VectorXd& q, int k,
                                    const DpParams& params,
                                    PrivacyLedger& ledger) const;

  void save(const std::string& path) const;
  static GalleryIndex load(const std::string& path);

  int size() const { return static_cast<int>(vectors_.rows()); }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  Mode mode() const { return params_.mode; }
  const BuildParams& params() const { return params_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  const std::vector<uint32_t>& labels() const { return labels_; }

 private:
  QueryResult exact_search(const Eigen::VectorXd& unit_q, int k) const;
  QueryResult graph_search(const Eigen::VectorXd& unit_q, int k,
                           int ef_search) const;
  void insert_node(int id, int level);
  std::vector<std::pair<double, uint32_t>> search_layer(
      const Eigen::VectorXd& unit_q, uint32_t entry, int level, int ef) const;
  std::vector<uint32_t> select_neighbors(
      const Eigen::VectorXd& unit_q,
      std::vector<std::pair<double, uint32_t>> candidates, int target) const;

  BuildParams params_;
  Eigen::MatrixXd vectors_;        // normalized rows
  std::vector<uint32_t> labels_;   // empty when the gallery had none
  // Graph state (approximate mode): neighbors_[node][level] -> ids.
  std::vector<std::vector<std::vector<uint32_t>>> neighbors_;
  std::vector<int> node_level_;
  int max_level_ = -1;
  uint32_t entry_point_ = 0;
};

}  // namespace topoguard

#endif  // TOPOGUARD_GALLERY_INDEX_HPP_
