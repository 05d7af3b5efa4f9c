#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topoguard/dp_core.hpp"
#include "topoguard/embedding_io.hpp"
#include "topoguard/errors.hpp"
#include "topoguard/gallery_index.hpp"
#include "topoguard/rng.hpp"

using namespace topoguard;

namespace {

std::string fresh_path(const char* suffix) {
  static std::atomic<int> counter{0};
  auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  return (std::filesystem::temp_directory_path() /
          ("topoguard_index_" + std::to_string(stamp) + "_" +
           std::to_string(counter.fetch_add(1)) + suffix))
      .string();
}

struct TempFile {
  std::string path;
  explicit TempFile(const char* suffix = ".tgix") : path(fresh_path(suffix)) {}
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

EmbeddingBatch random_gallery(int n, int d, uint64_t seed) {
  CounterRng rng(seed, 0);
  EmbeddingBatch batch;
  batch.features.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) batch.features(i, j) = rng.next_gaussian();
  }
  return batch;
}

// Brute-force top-k by cosine dissimilarity with (distance, id) ordering.
std::vector<uint32_t> brute_force_ids(const Eigen::MatrixXd& gallery,
                                      const Eigen::VectorXd& q, int k) {
  const int n = static_cast<int>(gallery.rows());
  Eigen::VectorXd unit_q = q / q.norm();
  std::vector<std::pair<double, uint32_t>> all(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row = gallery.row(i).transpose();
    all[i] = {1.0 - row.dot(unit_q) / row.norm(), static_cast<uint32_t>(i)};
  }
  std::sort(all.begin(), all.end());
  std::vector<uint32_t> ids;
  for (int i = 0; i < std::min(k, n); ++i) ids.push_back(all[i].second);
  return ids;
}

Eigen::VectorXd planar(double degrees) {
  double rad = degrees * 3.14159265358979323846 / 180.0;
  Eigen::VectorXd v(2);
  v << std::cos(rad), std::sin(rad);
  return v;
}

}  // namespace

TEST_SUITE("gallery_index") {

TEST_CASE("exact queries equal a brute-force scan") {
  EmbeddingBatch gallery = random_gallery(300, 16, 3);
  GalleryIndex index = GalleryIndex::build(gallery);
  CHECK(index.mode() == GalleryIndex::Mode::kExact);
  CHECK(index.size() == 300);
  CHECK(index.dim() == 16);

  CounterRng rng(4, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd q(16);
    for (int j = 0; j < 16; ++j) q(j) = rng.next_gaussian();
    int k = 1 + trial % 20;
    auto result = index.query(q, k);
    auto expected = brute_force_ids(gallery.features, q, k);
    REQUIRE(result.size() == expected.size());
    for (size_t i = 0; i < expected.size(); ++i) {
      CHECK(result[i].id == expected[i]);
    }
    // Dissimilarities are sorted and in range.
    for (size_t i = 1; i < result.size(); ++i) {
      CHECK(result[i - 1].dissimilarity <= result[i].dissimilarity + 1e-15);
    }
    CHECK(result.front().dissimilarity >= -1e-12);
    CHECK(result.back().dissimilarity <= 2.0 + 1e-12);
  }
}

TEST_CASE("tied distances break toward the smaller ordinal") {
  EmbeddingBatch gallery;
  gallery.features.resize(4, 2);
  gallery.features.row(0) = planar(0.0);
  gallery.features.row(1) = planar(0.0);
  gallery.features.row(2) = planar(90.0);
  gallery.features.row(3) = planar(0.0);
  GalleryIndex index = GalleryIndex::build(gallery);

  auto result = index.query(planar(0.0), 4);
  REQUIRE(result.size() == 4);
  CHECK(result[0].id == 0);
  CHECK(result[1].id == 1);
  CHECK(result[2].id == 3);
  CHECK(result[3].id == 2);
  CHECK(result[0].dissimilarity == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(result[3].dissimilarity == doctest::Approx(1.0).epsilon(1e-12));

  // k larger than the gallery clamps.
  CHECK(index.query(planar(10.0), 99).size() == 4);
  CHECK_THROWS_AS(index.query(planar(0.0), 0), InvalidParameter);
}

TEST_CASE("build validation") {
  EmbeddingBatch empty;
  empty.features.resize(0, 4);
  CHECK_THROWS_AS(GalleryIndex::build(empty), EmptyBatch);

  EmbeddingBatch zero_row = random_gallery(3, 4, 5);
  zero_row.features.row(1).setZero();
  CHECK_THROWS_AS(GalleryIndex::build(zero_row), DegenerateInput);

  EmbeddingBatch ok = random_gallery(3, 4, 6);
  GalleryIndex::BuildParams params;
  params.mode = GalleryIndex::Mode::kApproximate;
  params.graph_degree = 1;
  CHECK_THROWS_AS(GalleryIndex::build(ok, params), InvalidParameter);
  params.graph_degree = 8;
  params.ef_construction = 2;
  CHECK_THROWS_AS(GalleryIndex::build(ok, params), InvalidParameter);

  Eigen::VectorXd wrong_dim(3);
  wrong_dim.setOnes();
  GalleryIndex index = GalleryIndex::build(ok);
  CHECK_THROWS_AS(index.query(wrong_dim, 1), InvalidInput);
  CHECK_THROWS_AS(index.query(Eigen::VectorXd::Zero(4), 1), DegenerateInput);
}

TEST_CASE("approximate search reaches high recall against exact") {
  EmbeddingBatch gallery = random_gallery(2000, 32, 7);
  GalleryIndex::BuildParams params;
  params.mode = GalleryIndex::Mode::kApproximate;
  params.graph_degree = 16;
  params.ef_construction = 200;
  params.ef_search = 64;
  params.seed = 11;
  GalleryIndex approx = GalleryIndex::build(gallery, params);
  GalleryIndex exact = GalleryIndex::build(gallery);

  CounterRng rng(8, 2);
  int hits = 0, total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd q(32);
    for (int j = 0; j < 32; ++j) q(j) = rng.next_gaussian();
    auto truth = exact.query(q, 10);
    auto got = approx.query(q, 10);
    REQUIRE(got.size() == truth.size());
    for (const auto& t : truth) {
      for (const auto& g : got) {
        if (g.id == t.id) {
          ++hits;
          break;
        }
      }
    }
    total += static_cast<int>(truth.size());
  }
  double recall = static_cast<double>(hits) / total;
  CHECK(recall >= 0.9);

  // A wider beam cannot lose recall on the same queries.
  int wide_hits = 0;
  CounterRng rng2(8, 2);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd q(32);
    for (int j = 0; j < 32; ++j) q(j) = rng2.next_gaussian();
    auto truth = exact.query(q, 10);
    auto got = approx.query(q, 10, 256);
    for (const auto& t : truth) {
      for (const auto& g : got) {
        if (g.id == t.id) {
          ++wide_hits;
          break;
        }
      }
    }
  }
  CHECK(wide_hits >= hits);
}

TEST_CASE("same build inputs produce byte-identical index files") {
  EmbeddingBatch gallery = random_gallery(200, 8, 9);
  for (auto mode :
       {GalleryIndex::Mode::kExact, GalleryIndex::Mode::kApproximate}) {
    GalleryIndex::BuildParams params;
    params.mode = mode;
    params.seed = 5;
    TempFile a, b;
    GalleryIndex::build(gallery, params).save(a.path);
    GalleryIndex::build(gallery, params).save(b.path);
    std::ifstream fa(a.path, std::ios::binary), fb(b.path, std::ios::binary);
    std::string ca((std::istreambuf_iterator<char>(fa)),
                   std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)),
                   std::istreambuf_iterator<char>());
    CHECK(ca == cb);
    CHECK(!ca.empty());
  }
}

TEST_CASE("save and load preserve results and metadata") {
  EmbeddingBatch gallery = random_gallery(150, 12, 10);
  for (int i = 0; i < 150; ++i) {
    gallery.labels.push_back(static_cast<uint32_t>(i % 5));
  }
  for (auto mode :
       {GalleryIndex::Mode::kExact, GalleryIndex::Mode::kApproximate}) {
    GalleryIndex::BuildParams params;
    params.mode = mode;
    params.seed = 21;
    params.privatization_hash = "deadbeef";
    GalleryIndex index = GalleryIndex::build(gallery, params);
    TempFile file;
    index.save(file.path);
    GalleryIndex loaded = GalleryIndex::load(file.path);

    CHECK(loaded.mode() == mode);
    CHECK(loaded.size() == 150);
    CHECK(loaded.dim() == 12);
    CHECK(loaded.labels() == index.labels());
    CHECK(loaded.params().privatization_hash == "deadbeef");
    CHECK(loaded.params().seed == 21);
    CHECK(loaded.params().created_unix == 0);

    CounterRng rng(11, 3);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd q(12);
      for (int j = 0; j < 12; ++j) q(j) = rng.next_gaussian();
      auto before = index.query(q, 7);
      auto after = loaded.query(q, 7);
      REQUIRE(before.size() == after.size());
      for (size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].id == after[i].id);
        CHECK(before[i].dissimilarity ==
              doctest::Approx(after[i].dissimilarity).epsilon(1e-15));
      }
    }
  }

  CHECK_THROWS_AS(GalleryIndex::load(fresh_path(".missing")),
                  PersistenceError);
}

TEST_CASE("evaluate reproduces hand-computed ranking metrics") {
  EmbeddingBatch gallery;
  gallery.features.resize(4, 2);
  gallery.features.row(0) = planar(0.0);    // label 0
  gallery.features.row(1) = planar(10.0);   // label 1
  gallery.features.row(2) = planar(20.0);   // label 0
  gallery.features.row(3) = planar(30.0);   // label 1
  gallery.labels = {0, 1, 0, 1};
  GalleryIndex index = GalleryIndex::build(gallery);

  EmbeddingBatch queries;
  queries.features.resize(2, 2);
  queries.features.row(0) = planar(1.0);   // ranking: 0, 1, 2, 3
  queries.features.row(1) = planar(11.0);  // ranking: 1, 2, 0, 3
  queries.labels = {0, 0};

  auto m = index.evaluate(queries, 2, false);
  CHECK(m.query_count == 2);
  CHECK(m.k == 2);
  // Query 0 hits at ranks 1 and 3; query 1 hits at ranks 2 and 3.
  CHECK(m.rank1 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.rank_k == doctest::Approx(1.0).epsilon(1e-15));
  double ap0 = (1.0 / 1.0 + 2.0 / 3.0) / 2.0;
  double ap1 = (1.0 / 2.0 + 2.0 / 3.0) / 2.0;
  CHECK(m.mean_ap == doctest::Approx((ap0 + ap1) / 2.0).epsilon(1e-14));
  CHECK(m.mean_inp == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  auto m1 = index.evaluate(queries, 1, false);
  CHECK(m1.rank_k == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("self exclusion drops the query's own gallery row") {
  EmbeddingBatch gallery;
  gallery.features.resize(4, 2);
  gallery.features.row(0) = planar(0.0);
  gallery.features.row(1) = planar(5.0);
  gallery.features.row(2) = planar(90.0);
  gallery.features.row(3) = planar(95.0);
  gallery.labels = {0, 0, 1, 1};
  GalleryIndex index = GalleryIndex::build(gallery);

  // Every row's nearest non-self neighbor shares its label.
  auto m = index.evaluate(gallery, 1, true);
  CHECK(m.rank1 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.mean_ap == doctest::Approx(1.0).epsilon(1e-14));

  // Without exclusion each query finds itself first; metrics still perfect.
  auto m2 = index.evaluate(gallery, 1, false);
  CHECK(m2.rank1 == doctest::Approx(1.0).epsilon(1e-15));

  EmbeddingBatch half;
  half.features = gallery.features.topRows(2);
  half.labels = {0, 0};
  CHECK_THROWS_AS(index.evaluate(half, 1, true), InvalidEvalSetup);

  EmbeddingBatch unlabeled;
  unlabeled.features = gallery.features;
  CHECK_THROWS_AS(index.evaluate(unlabeled, 1, false), InvalidEvalSetup);

  EmbeddingBatch alien;
  alien.features = gallery.features.topRows(1);
  alien.labels = {99};
  CHECK_THROWS_AS(index.evaluate(alien, 1, false), InvalidEvalSetup);

  EmbeddingBatch no_label_gallery = random_gallery(4, 2, 31);
  GalleryIndex bare = GalleryIndex::build(no_label_gallery);
  EmbeddingBatch q;
  q.features = no_label_gallery.features;
  q.labels = {0, 0, 1, 1};
  CHECK_THROWS_AS(bare.evaluate(q, 1, false), InvalidEvalSetup);
}

TEST_CASE("private queries spend budget and privatize deterministically") {
  EmbeddingBatch gallery = random_gallery(100, 8, 13);
  GalleryIndex index = GalleryIndex::build(gallery);
  DpParams params = DpParams::calibrate(1.0, 1.0, 1e-5, 99);

  TempFile ledger_file(".jsonl");
  // Budget sized for exactly two (1.0, 1e-5) spends under delta' = 1e-6.
  double two = compose_spends({{0.0, 1.0, 1e-5, "query"},
                               {0.0, 1.0, 1e-5, "query"}},
                              1e-6)
                   .epsilon;
  double three = compose_spends({{0.0, 1.0, 1e-5, "query"},
                                 {0.0, 1.0, 1e-5, "query"},
                                 {0.0, 1.0, 1e-5, "query"}},
                                1e-6)
                     .epsilon;
  REQUIRE(two < three);
  PrivacyLedger ledger(ledger_file.path, 1e-6, 0.5 * (two + three), 1e-2);

  Eigen::VectorXd q(8);
  CounterRng rng(14, 0);
  for (int j = 0; j < 8; ++j) q(j) = rng.next_gaussian();

  auto first = index.private_query(q, 5, params, ledger);
  CHECK(first.accepted);
  CHECK(first.result.size() == 5);
  // Admitted spend 0 drives the noise stream.
  auto expected = index.query(privatize(q, params, 0), 5);
  REQUIRE(expected.size() == first.result.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(first.result[i].id == expected[i].id);
  }

  auto second = index.private_query(q, 5, params, ledger);
  CHECK(second.accepted);

  auto third = index.private_query(q, 5, params, ledger);
  CHECK_FALSE(third.accepted);
  CHECK(third.result.empty());
  CHECK(ledger.size() == 2);
  CHECK(third.totals.epsilon == doctest::Approx(two).epsilon(1e-12));

  auto records = ledger.records();
  CHECK(records[0].tag == "query");
  CHECK(records[0].eps == 1.0);
}

}  // TEST_SUITE
