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

#include "topoguard/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "topoguard/errors.hpp"
#include "topoguard/gallery_index.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

namespace {

std::vector<int> shuffled_indices(int n, uint64_t seed, uint64_t stream) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  CounterRng rng(seed, stream);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (xs.size() - 1));
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / xs.size();
}

}  // namespace

double mia_advantage(double precision) {
  if (precision < 0.0 || precision > 1.0 || !std::isfinite(precision)) {
    throw InvalidParameter("precision must lie in [0, 1]");
  }
  return 2.0 * (precision - 0.5);
}

MiaReport run_mia_audit(const Eigen::MatrixXd& members,
                        const Eigen::MatrixXd& nonmembers,
                        const DpParams& params, uint64_t audit_seed) {
  const int nm = static_cast<int>(members.rows());
  const int nn = static_cast<int>(nonmembers.rows());
  if (nm < 8 || nn < 8) {
    throw InvalidInput("need at least 8 members and 8 nonmembers");
  }
  if (members.cols() != nonmembers.cols()) {
    throw InvalidInput("member and nonmember dims differ");
  }

  Eigen::MatrixXd mem = members;
  Eigen::MatrixXd non = nonmembers;
  if (params.noise_sigma > 0.0) {
    DpParams noise = params;
    noise.rng_seed = params.rng_seed ^ audit_seed;
    mem = privatize_rows(mem, noise, /*first_stream=*/0);
    non = privatize_rows(non, noise, /*first_stream=*/1ull << 32);
  }

  std::vector<int> mi = shuffled_indices(nm, audit_seed, /*stream=*/1);
  std::vector<int> ni = shuffled_indices(nn, audit_seed, /*stream=*/2);
  const int mh = nm / 2, nh = nn / 2;

  // Attack statistic: distance to the centroid of the attacker's member
  // half. Members of a clustered population sit closer to it.
  Eigen::VectorXd centroid = Eigen::VectorXd::Zero(mem.cols());
  for (int i = 0; i < mh; ++i) centroid += mem.row(mi[i]).transpose();
  centroid /= mh;

  auto score = [&](const Eigen::MatrixXd& m, int row) {
    return (m.row(row).transpose() - centroid).norm();
  };

  std::vector<double> train_member_scores, train_nonmember_scores;
  for (int i = 0; i < mh; ++i) train_member_scores.push_back(score(mem, mi[i]));
  for (int i = 0; i < nh; ++i) train_nonmember_scores.push_back(score(non, ni[i]));

  std::vector<double> all_scores = train_member_scores;
  all_scores.insert(all_scores.end(), train_nonmember_scores.begin(),
                    train_nonmember_scores.end());
  std::sort(all_scores.begin(), all_scores.end());
  std::vector<double> thresholds;
  thresholds.push_back(all_scores.front() - 1.0);
  for (size_t i = 0; i + 1 < all_scores.size(); ++i) {
    if (all_scores[i + 1] > all_scores[i]) {
      thresholds.push_back(0.5 * (all_scores[i] + all_scores[i + 1]));
    }
  }
  thresholds.push_back(all_scores.back() + 1.0);

  // Pick the threshold maximizing balanced accuracy on the training halves:
  // predict member when the score falls at or below it.
  double best_thr = thresholds.front();
  double best_acc = -1.0;
  for (double thr : thresholds) {
    int tp = 0, tn = 0;
    for (double s : train_member_scores) tp += (s <= thr);
    for (double s : train_nonmember_scores) tn += (s > thr);
    double acc = 0.5 * (static_cast<double>(tp) / train_member_scores.size() +
                        static_cast<double>(tn) / train_nonmember_scores.size());
    if (acc > best_acc + 1e-12) {
      best_acc = acc;
      best_thr = thr;
    }
  }

  int tp = 0, fp = 0;
  int held = 0;
  for (int i = mh; i < nm; ++i, ++held) tp += (score(mem, mi[i]) <= best_thr);
  for (int i = nh; i < nn; ++i, ++held) fp += (score(non, ni[i]) <= best_thr);

  MiaReport report;
  report.trials = held;
  report.noise_sigma = params.noise_sigma;
  // An attacker that names nobody a member gives no information; score it
  // as chance rather than dividing by zero.
  report.precision =
      (tp + fp == 0) ? 0.5 : static_cast<double>(tp) / (tp + fp);
  report.advantage = mia_advantage(report.precision);
  return report;
}

std::vector<SweepPoint> privacy_utility_sweep(
    const EmbeddingBatch& gallery, const EmbeddingBatch& queries,
    const std::vector<double>& epsilons, double delta, double clip_radius,
    int num_seeds, uint64_t base_seed, int k) {
  if (epsilons.empty()) throw InvalidParameter("epsilon list is empty");
  if (num_seeds < 1) throw InvalidParameter("need at least one seed");
  if (!gallery.has_labels() || !queries.has_labels()) {
    throw InvalidEvalSetup("sweep needs labeled gallery and queries");
  }

  std::vector<SweepPoint> rows;
  size_t eps_index = 0;
  for (double eps : epsilons) {
    ++eps_index;
    SweepPoint row;
    row.epsilon = eps;
    if (std::isinf(eps)) {
      GalleryIndex index = GalleryIndex::build(gallery);
      auto m = index.evaluate(queries, k, /*self_exclusion=*/false);
      row.noise_sigma = 0.0;
      row.rank1_mean = m.rank1;
      row.map_mean = m.mean_ap;
      row.minp_mean = m.mean_inp;
      row.seeds = 1;
      rows.push_back(row);
      continue;
    }

    std::vector<double> rank1s, maps, minps;
    double sigma = 0.0;
    for (int r = 0; r < num_seeds; ++r) {
      uint64_t seed =
          base_seed ^ (0x9e3779b97f4a7c15ULL * (eps_index * 1024 + r + 1));
      DpParams params = DpParams::calibrate(clip_radius, eps, delta, seed);
      sigma = params.noise_sigma;
      EmbeddingBatch noisy = gallery;
      noisy.features = privatize_rows(gallery.features, params);
      GalleryIndex index = GalleryIndex::build(noisy);
      auto m = index.evaluate(queries, k, /*self_exclusion=*/false);
      rank1s.push_back(m.rank1);
      maps.push_back(m.mean_ap);
      minps.push_back(m.mean_inp);
    }
    row.noise_sigma = sigma;
    row.rank1_mean = mean_of(rank1s);
    row.rank1_std = sample_std(rank1s, row.rank1_mean);
    row.map_mean = mean_of(maps);
    row.map_std = sample_std(maps, row.map_mean);
    row.minp_mean = mean_of(minps);
    row.minp_std = sample_std(minps, row.minp_mean);
    row.seeds = num_seeds;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepPoint>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");
  out << "epsilon,noise_sigma,rank1_mean,rank1_std,map_mean,map_std,"
         "minp_mean,minp_std,seeds\n";
  out.precision(12);
  for (const auto& r : rows) {
    if (std::isinf(r.epsilon)) {
      out << "inf";
    } else {
      out << r.epsilon;
    }
    out << ',' << r.noise_sigma << ',' << r.rank1_mean << ',' << r.rank1_std
        << ',' << r.map_mean << ',' << r.map_std << ',' << r.minp_mean << ','
        << r.minp_std << ',' << r.seeds << '\n';
  }
  if (!out) throw PersistenceError("write failed for " + path);
}

nlohmann::json sweep_to_json(const std::vector<SweepPoint>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    if (std::isinf(r.epsilon)) {
      j["epsilon"] = "inf";
    } else {
      j["epsilon"] = r.epsilon;
    }
    j["noise_sigma"] = r.noise_sigma;
    j["rank1_mean"] = r.rank1_mean;
    j["rank1_std"] = r.rank1_std;
    j["map_mean"] = r.map_mean;
    j["map_std"] = r.map_std;
    j["minp_mean"] = r.minp_mean;
    j["minp_std"] = r.minp_std;
    j["seeds"] = r.seeds;
    arr.push_back(std::move(j));
  }
  return arr;
}

nlohmann::json CompactnessReport::to_json() const {
  nlohmann::json j;
  j["q"] = q;
  j["clusters"] = nlohmann::json::array();
  for (const auto& c : clusters) {
    j["clusters"].push_back({{"label", c.label},
                             {"count", c.count},
                             {"intra_mean", c.intra_mean},
                             {"nearest_gap", c.nearest_gap}});
  }
  return j;
}

CompactnessReport compactness_report(const Eigen::MatrixXd& features,
                                     const std::vector<int>& labels) {
  if (features.rows() == 0) throw EmptyBatch("no features");
  if (static_cast<int>(labels.size()) != features.rows()) {
    throw InvalidInput("need one label per row");
  }
  std::map<int, std::vector<int>> clusters;
  for (int i = 0; i < features.rows(); ++i) clusters[labels[i]].push_back(i);
  if (clusters.size() < 2) {
    throw InvalidInput("compactness needs at least two clusters");
  }

  CompactnessReport report;
  std::vector<Eigen::VectorXd> centroids;
  for (const auto& [label, rows] : clusters) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(features.cols());
    for (int r : rows) c += features.row(r).transpose();
    c /= static_cast<double>(rows.size());
    double spread = 0.0;
    for (int r : rows) spread += (features.row(r).transpose() - c).norm();
    ClusterStats stats;
    stats.label = label;
    stats.count = static_cast<long>(rows.size());
    stats.intra_mean = spread / rows.size();
    report.clusters.push_back(stats);
    centroids.push_back(std::move(c));
  }

  double q = 0.0;
  for (size_t i = 0; i < centroids.size(); ++i) {
    double gap = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < centroids.size(); ++j) {
      if (j == i) continue;
      gap = std::min(gap, (centroids[i] - centroids[j]).norm());
    }
    report.clusters[i].nearest_gap = gap;
    q += report.clusters[i].intra_mean - gap;
  }
  report.q = q / centroids.size();
  return report;
}

double compactness(const Eigen::MatrixXd& features,
                   const std::vector<int>& labels) {
  return compactness_report(features, labels).q;
}

Eigen::MatrixXd attention_saliency(const std::vector<Eigen::MatrixXd>& heads,
                                   const std::vector<Eigen::MatrixXd>& grads) {
  if (heads.empty() || heads.size() != grads.size()) {
    throw InvalidInput("need matching, nonempty head and gradient lists");
  }
  const auto n = heads.front().rows();
  if (heads.front().cols() != n) throw InvalidInput("heads must be square");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  for (size_t k = 0; k < heads.size(); ++k) {
    if (heads[k].rows() != n || heads[k].cols() != n ||
        grads[k].rows() != n || grads[k].cols() != n) {
      throw InvalidInput("all heads and gradients must be N x N");
    }
    acc += (grads[k].array() * heads[k].array()).matrix();
  }
  acc /= static_cast<double>(n) * static_cast<double>(n);
  return acc.cwiseMax(0.0);
}

double pac_generalization_bound(double emp_risk, double kl, long n,
                                double delta) {
  if (emp_risk < 0.0 || emp_risk > 1.0 || !std::isfinite(emp_risk)) {
    throw InvalidParameter("empirical risk must lie in [0, 1]");
  }
  if (kl < 0.0 || !std::isfinite(kl)) {
    throw InvalidParameter("kl must be nonnegative");
  }
  if (n < 1) throw InvalidParameter("n must be >= 1");
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw InvalidParameter("delta must lie in (0, 1)");
  }
  double nd = static_cast<double>(n);
  return emp_risk +
         std::sqrt((kl + std::log(2.0 * std::sqrt(nd) / delta)) / (2.0 * nd));
}

}  // namespace topoguard
