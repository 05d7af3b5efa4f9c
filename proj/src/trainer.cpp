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

#include "topoguard/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include "topoguard/accountant.hpp"
#include "topoguard/audit.hpp"
#include "topoguard/errors.hpp"
#include "topoguard/geo_attention.hpp"
#include "topoguard/rng.hpp"
#include "topoguard/transport.hpp"

namespace topoguard {

namespace {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw InvalidParameter("epochs must be >= 0");
  if (cfg.batch_size < 0) throw InvalidParameter("batch_size must be >= 0");
  if (!(cfg.learning_rate > 0.0)) {
    throw InvalidParameter("learning_rate must be > 0");
  }
  if (cfg.weight_decay < 0.0) {
    throw InvalidParameter("weight_decay must be >= 0");
  }
  if (cfg.weight_decay > 0.0 &&
      !(cfg.learning_rate * cfg.weight_decay < 1.0)) {
    throw InvalidParameter("learning_rate * weight_decay must be < 1");
  }
  if (cfg.lambda_ot < 0.0 || cfg.lambda_aux < 0.0) {
    throw InvalidParameter("loss weights must be >= 0");
  }
  if (!(cfg.clip_radius > 0.0)) {
    throw InvalidParameter("clip_radius must be > 0");
  }
  if (cfg.dp_epsilon < 0.0) throw InvalidParameter("dp_epsilon must be >= 0");
  if (cfg.recalibrate_every < 1) {
    throw InvalidParameter("recalibrate_every must be >= 1");
  }
}

// Class prototypes: L2-normalized per-class means, one row per label.
Eigen::MatrixXd class_prototypes(const Eigen::MatrixXd& z,
                                 const std::vector<int>& labels,
                                 int num_classes) {
  Eigen::MatrixXd proto = Eigen::MatrixXd::Zero(num_classes, z.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_classes);
  for (int i = 0; i < z.rows(); ++i) {
    proto.row(labels[i]) += z.row(i);
    counts(labels[i]) += 1.0;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts(c) == 0.0) {
      throw InvalidInput("class " + std::to_string(c) + " has no samples");
    }
    proto.row(c) /= counts(c);
    double n = proto.row(c).norm();
    if (n <= 0.0) throw DegenerateInput("zero prototype for class " +
                                        std::to_string(c));
    proto.row(c) /= n;
  }
  return proto;
}

Eigen::MatrixXd l2_normalized_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (int i = 0; i < out.rows(); ++i) {
    double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

std::vector<int> epoch_order(int n, uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  CounterRng rng(seed, 0xb000u + static_cast<uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace

TotalLoss total_loss(const Eigen::MatrixXd& features,
                     const std::vector<int>& labels,
                     const Eigen::MatrixXd& prototypes,
                     const MarginState& margins, const TrainConfig& cfg) {
  TotalLoss out;
  LossValue id = act_id_loss(features, labels, prototypes, margins, cfg.act);
  LossValue tri = act_triplet_loss(features, labels, margins, cfg.act);
  out.id_value = id.value;
  out.triplet_value = tri.value;
  out.act_value = id.value + cfg.act.lambda_tri * tri.value;
  out.feature_grad = id.feature_grad + cfg.act.lambda_tri * tri.feature_grad;

  if (cfg.lambda_ot > 0.0 && features.rows() > 1) {
    TransportProblem problem;
    problem.cost = pairwise_cosine_dissimilarity(features);
    const int n = static_cast<int>(features.rows());
    problem.p = Eigen::VectorXd::Constant(n, 1.0 / n);
    problem.q = problem.p;
    problem.epsilon = cfg.ot_epsilon;
    // Encoded batches carry near-duplicate rows, which conditions the
    // scaling badly; give the solver room well past the default budget.
    out.ot_value = sinkhorn(problem, 1e-6, 200000).objective;
  }
  out.value = out.act_value + cfg.lambda_ot * out.ot_value;
  return out;
}

nlohmann::json TrainResult::history_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : history) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["id_loss"] = e.id_loss;
    j["triplet_loss"] = e.triplet_loss;
    j["ot_loss"] = e.ot_loss;
    j["total_loss"] = e.total_loss;
    j["compactness"] = e.compactness;
    j["noise_sigma"] = e.noise_sigma;
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [id, gamma] : e.margins) m[std::to_string(id)] = gamma;
    j["margins"] = std::move(m);
    arr.push_back(std::move(j));
  }
  return arr;
}

TrainResult train_toy(const EmbeddingBatch& data, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (data.count() == 0) throw EmptyBatch("no training data");
  if (!data.has_labels()) throw InvalidInput("training data needs labels");

  const int n = static_cast<int>(data.count());
  const int d = static_cast<int>(data.dim());
  const int d_out = cfg.encode_dim > 0 ? cfg.encode_dim : d;
  std::vector<int> labels = data.labels_as_int();

  int num_classes = 0;
  for (int l : labels) {
    if (l < 0) throw InvalidInput("negative label");
    num_classes = std::max(num_classes, l + 1);
  }
  if (num_classes < 2) throw InvalidInput("need at least 2 identities");

  TrainResult result;
  result.encoder.resize(d_out, d);
  CounterRng init_rng(cfg.seed, 0);
  const double init_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d_out; ++i) {
    for (int j = 0; j < d; ++j) {
      result.encoder(i, j) = init_scale * init_rng.next_gaussian();
    }
  }

  result.margins = MarginState(cfg.act.ema_decay);
  double sigma = 0.0;
  if (cfg.dp_epsilon > 0.0) {
    sigma = calibrate_sigma(sensitivity_bound(cfg.clip_radius), cfg.dp_epsilon,
                            cfg.dp_delta);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Eigen::MatrixXd z = data.features * result.encoder.transpose();
    if (!z.allFinite()) {
      throw TrainingFailure("encoded features non-finite at epoch " +
                            std::to_string(epoch));
    }
    result.margins.observe(z, labels);
    Eigen::MatrixXd prototypes = class_prototypes(z, labels, num_classes);

    EpochStats stats;
    stats.epoch = epoch;

    std::vector<std::pair<int, int>> chunks;
    std::vector<int> order;
    if (cfg.batch_size == 0 || cfg.batch_size >= n) {
      order = epoch_order(n, cfg.seed, epoch);  // order is irrelevant here
      chunks.emplace_back(0, n);
    } else {
      order = epoch_order(n, cfg.seed, epoch);
      for (int start = 0; start < n; start += cfg.batch_size) {
        int len = std::min(cfg.batch_size, n - start);
        chunks.emplace_back(start, len);
      }
      // A trailing single row cannot form a pair; fold it into the
      // previous chunk.
      if (chunks.size() > 1 && chunks.back().second < 2) {
        chunks[chunks.size() - 2].second += chunks.back().second;
        chunks.pop_back();
      }
    }

    double weight_sum = 0.0;
    for (const auto& [start, len] : chunks) {
      Eigen::MatrixXd xb(len, d), zb(len, d_out);
      std::vector<int> lb(len);
      for (int r = 0; r < len; ++r) {
        int src = order[start + r];
        xb.row(r) = data.features.row(src);
        zb.row(r) = z.row(src);
        lb[r] = labels[src];
      }

      TotalLoss loss = total_loss(zb, lb, prototypes, result.margins, cfg);
      if (!std::isfinite(loss.value) || !loss.feature_grad.allFinite()) {
        throw TrainingFailure("loss non-finite at epoch " +
                              std::to_string(epoch));
      }

      Eigen::MatrixXd grad_w = loss.feature_grad.transpose() * xb;
      Eigen::MatrixXd next = sgd_step_with_decay(
          result.encoder, grad_w, cfg.learning_rate, cfg.weight_decay);
      ++result.steps_total;
      bool ok = true;
      for (int r = 0; r < d_out; ++r) {
        double lhs = next.row(r).norm();
        double rhs = (1.0 - cfg.learning_rate * cfg.weight_decay) *
                         result.encoder.row(r).norm() +
                     cfg.learning_rate * grad_w.row(r).norm();
        if (lhs > rhs + 1e-9) ok = false;
      }
      if (ok) ++result.steps_bound_ok;
      result.encoder = std::move(next);

      double w = static_cast<double>(len);
      stats.id_loss += w * loss.id_value;
      stats.triplet_loss += w * loss.triplet_value;
      stats.ot_loss += w * loss.ot_value;
      stats.total_loss += w * loss.value;
      weight_sum += w;
    }
    stats.id_loss /= weight_sum;
    stats.triplet_loss /= weight_sum;
    stats.ot_loss /= weight_sum;
    stats.total_loss /= weight_sum;

    Eigen::MatrixXd z_after = data.features * result.encoder.transpose();
    stats.compactness = compactness(l2_normalized_rows(z_after), labels);
    for (int id : result.margins.identities()) {
      stats.margins[id] = result.margins.margin_or_default(id, cfg.act);
    }
    if (cfg.dp_epsilon > 0.0 && (epoch + 1) % cfg.recalibrate_every == 0) {
      sigma = calibrate_sigma(sensitivity_bound(cfg.clip_radius),
                              cfg.dp_epsilon, cfg.dp_delta);
    }
    stats.noise_sigma = sigma;
    result.history.push_back(std::move(stats));
  }

  result.encoded = data.features * result.encoder.transpose();
  if (!result.encoded.allFinite()) {
    throw TrainingFailure("final encoded features non-finite");
  }

  // Release stage: clip to the sensitivity radius, noise when configured,
  // and build the exact index. Runs regardless of epoch count.
  result.dp.clip_radius = cfg.clip_radius;
  result.dp.epsilon = cfg.dp_epsilon;
  result.dp.delta = cfg.dp_delta;
  result.dp.sensitivity = sensitivity_bound(cfg.clip_radius);
  result.dp.noise_sigma = sigma;
  result.dp.rng_seed = cfg.seed;

  result.privatized = data;
  result.privatized.features = privatize_rows(result.encoded, result.dp);
  result.privatized.provenance["release"] = {
      {"clip_radius", cfg.clip_radius},
      {"epsilon", cfg.dp_epsilon},
      {"delta", cfg.dp_delta},
      {"noise_sigma", sigma},
  };
  result.index = GalleryIndex::build(result.privatized);
  return result;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    auto& t = cfg.synth;
    t.identities = s.value("identities", t.identities);
    t.samples_per_identity =
        s.value("samples_per_identity", t.samples_per_identity);
    t.dim = s.value("dim", t.dim);
    t.cameras = s.value("cameras", t.cameras);
    t.intra_sigma = s.value("intra_sigma", t.intra_sigma);
    t.inter_separation = s.value("inter_separation", t.inter_separation);
    t.camera_view_shift = s.value("camera_view_shift", t.camera_view_shift);
    t.high_variance_count =
        s.value("high_variance_count", t.high_variance_count);
    t.high_variance_multiplier =
        s.value("high_variance_multiplier", t.high_variance_multiplier);
    t.seed = s.value("seed", t.seed);
    t.camera_circle_radius_m =
        s.value("camera_circle_radius_m", t.camera_circle_radius_m);
    t.graph_sigma_meters = s.value("graph_sigma_meters", t.graph_sigma_meters);
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    auto& t = cfg.train;
    t.epochs = s.value("epochs", t.epochs);
    t.batch_size = s.value("batch_size", t.batch_size);
    t.learning_rate = s.value("learning_rate", t.learning_rate);
    t.weight_decay = s.value("weight_decay", t.weight_decay);
    t.encode_dim = s.value("encode_dim", t.encode_dim);
    t.lambda_ot = s.value("lambda_ot", t.lambda_ot);
    t.lambda_aux = s.value("lambda_aux", t.lambda_aux);
    t.ot_epsilon = s.value("ot_epsilon", t.ot_epsilon);
    t.seed = s.value("seed", t.seed);
    t.clip_radius = s.value("clip_radius", t.clip_radius);
    t.dp_epsilon = s.value("dp_epsilon", t.dp_epsilon);
    t.dp_delta = s.value("dp_delta", t.dp_delta);
    t.recalibrate_every = s.value("recalibrate_every", t.recalibrate_every);
    if (s.contains("act")) {
      const auto& a = s.at("act");
      t.act.gamma0 = a.value("gamma0", t.act.gamma0);
      t.act.alpha = a.value("alpha", t.act.alpha);
      t.act.beta = a.value("beta", t.act.beta);
      t.act.scale = a.value("scale", t.act.scale);
      t.act.lambda_tri = a.value("lambda_tri", t.act.lambda_tri);
      t.act.ema_decay = a.value("ema_decay", t.act.ema_decay);
      t.act.variance_floor = a.value("variance_floor", t.act.variance_floor);
    }
  }
  cfg.refine_blend = j.value("refine_blend", cfg.refine_blend);
  cfg.budget_epsilon = j.value("budget_epsilon", cfg.budget_epsilon);
  cfg.budget_delta = j.value("budget_delta", cfg.budget_delta);
  cfg.delta_prime = j.value("delta_prime", cfg.delta_prime);
  if (j.contains("sweep_epsilons")) {
    cfg.sweep_epsilons.clear();
    for (const auto& e : j.at("sweep_epsilons")) {
      if (e.is_string()) {
        if (e.get<std::string>() != "inf") {
          throw InvalidParameter("sweep epsilon must be a number or \"inf\"");
        }
        cfg.sweep_epsilons.push_back(std::numeric_limits<double>::infinity());
      } else {
        cfg.sweep_epsilons.push_back(e.get<double>());
      }
    }
  }
  cfg.sweep_seeds = j.value("sweep_seeds", cfg.sweep_seeds);
  cfg.eval_k = j.value("eval_k", cfg.eval_k);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  return cfg;
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["synth"] = {
      {"identities", synth.identities},
      {"samples_per_identity", synth.samples_per_identity},
      {"dim", synth.dim},
      {"cameras", synth.cameras},
      {"intra_sigma", synth.intra_sigma},
      {"inter_separation", synth.inter_separation},
      {"camera_view_shift", synth.camera_view_shift},
      {"high_variance_count", synth.high_variance_count},
      {"high_variance_multiplier", synth.high_variance_multiplier},
      {"seed", synth.seed},
      {"camera_circle_radius_m", synth.camera_circle_radius_m},
      {"graph_sigma_meters", synth.graph_sigma_meters},
  };
  j["train"] = {
      {"epochs", train.epochs},
      {"batch_size", train.batch_size},
      {"learning_rate", train.learning_rate},
      {"weight_decay", train.weight_decay},
      {"encode_dim", train.encode_dim},
      {"lambda_ot", train.lambda_ot},
      {"lambda_aux", train.lambda_aux},
      {"ot_epsilon", train.ot_epsilon},
      {"seed", train.seed},
      {"clip_radius", train.clip_radius},
      {"dp_epsilon", train.dp_epsilon},
      {"dp_delta", train.dp_delta},
      {"recalibrate_every", train.recalibrate_every},
      {"act",
       {
           {"gamma0", train.act.gamma0},
           {"alpha", train.act.alpha},
           {"beta", train.act.beta},
           {"scale", train.act.scale},
           {"lambda_tri", train.act.lambda_tri},
           {"ema_decay", train.act.ema_decay},
           {"variance_floor", train.act.variance_floor},
       }},
  };
  j["refine_blend"] = refine_blend;
  j["budget_epsilon"] = budget_epsilon;
  j["budget_delta"] = budget_delta;
  j["delta_prime"] = delta_prime;
  nlohmann::json eps = nlohmann::json::array();
  for (double e : sweep_epsilons) {
    if (std::isinf(e)) {
      eps.push_back("inf");
    } else {
      eps.push_back(e);
    }
  }
  j["sweep_epsilons"] = std::move(eps);
  j["sweep_seeds"] = sweep_seeds;
  j["eval_k"] = eval_k;
  j["out_dir"] = out_dir;
  return j;
}

namespace {

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw PersistenceError("write failed for " + path);
}

}  // namespace

nlohmann::json run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto path_of = [&](const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
  };

  nlohmann::json manifest;
  manifest["config"] = cfg.to_json();
  manifest["stages"] = nlohmann::json::object();
  manifest["artifacts"] = nlohmann::json::object();
  const std::string manifest_path = path_of("manifest.json");
  auto flush_manifest = [&]() { write_json_file(manifest_path, manifest); };

  std::string current_stage;
  try {
    current_stage = "synth";
    SyntheticData synth = generate_synthetic(cfg.synth);
    write_tgeb(path_of("gallery.tgeb"), synth.batch);
    write_json_file(path_of("camera_graph.json"), synth.graph.to_json());
    manifest["artifacts"]["gallery"] = path_of("gallery.tgeb");
    manifest["artifacts"]["camera_graph"] = path_of("camera_graph.json");
    manifest["stages"]["synth"] = "ok";
    flush_manifest();

    current_stage = "refine";
    EmbeddingBatch working = synth.batch;
    if (cfg.refine_blend > 0.0) {
      // Camera-level refinement: run geometry-conditioned attention over
      // per-camera mean features and blend each camera's delta back into
      // its samples.
      const int d = static_cast<int>(working.dim());
      const int c = static_cast<int>(synth.graph.size());
      Eigen::MatrixXd cam_mean = Eigen::MatrixXd::Zero(c, d);
      Eigen::VectorXd cam_count = Eigen::VectorXd::Zero(c);
      for (long i = 0; i < working.count(); ++i) {
        cam_mean.row(working.cameras[i]) += working.features.row(i);
        cam_count(working.cameras[i]) += 1.0;
      }
      for (int k = 0; k < c; ++k) {
        if (cam_count(k) > 0.0) cam_mean.row(k) /= cam_count(k);
      }
      AttentionParams params;
      params.w_query = Eigen::MatrixXd::Identity(d, d);
      params.w_key = Eigen::MatrixXd::Identity(d, d);
      params.w_value = Eigen::MatrixXd::Identity(d, d);
      params.theta = Eigen::MatrixXd::Identity(d, d);
      Eigen::MatrixXd refined =
          refine_features(cam_mean, synth.graph.affinity(), params);
      Eigen::MatrixXd delta = refined - cam_mean;
      for (long i = 0; i < working.count(); ++i) {
        working.features.row(i) +=
            cfg.refine_blend * delta.row(working.cameras[i]);
      }
      manifest["stages"]["refine"] = "ok";
    } else {
      manifest["stages"]["refine"] = "skipped";
    }
    flush_manifest();

    current_stage = "train";
    TrainResult trained = train_toy(working, cfg.train);
    write_csv_matrix(path_of("encoder.csv"), trained.encoder);
    write_json_file(path_of("history.json"), trained.history_json());
    manifest["artifacts"]["encoder"] = path_of("encoder.csv");
    manifest["artifacts"]["history"] = path_of("history.json");
    manifest["stages"]["train"] = "ok";
    flush_manifest();

    current_stage = "release";
    // Gallery/query split: the last sample of each identity becomes a
    // clean query; everything else is released through clip + noise.
    const std::vector<int> labels = working.labels_as_int();
    int num_ids = 0;
    for (int l : labels) num_ids = std::max(num_ids, l + 1);
    std::vector<long> last_of_id(num_ids, -1);
    for (long i = 0; i < working.count(); ++i) {
      last_of_id[labels[i]] = i;
    }
    std::set<long> query_rows(last_of_id.begin(), last_of_id.end());
    const long nq = static_cast<long>(query_rows.size());
    const long ng = working.count() - nq;

    EmbeddingBatch gallery_clean, queries;
    gallery_clean.features.resize(ng, trained.encoded.cols());
    queries.features.resize(nq, trained.encoded.cols());
    long gi = 0, qi = 0;
    for (long i = 0; i < working.count(); ++i) {
      if (query_rows.count(i)) {
        queries.features.row(qi++) = trained.encoded.row(i);
        queries.labels.push_back(working.labels[i]);
      } else {
        gallery_clean.features.row(gi++) = trained.encoded.row(i);
        gallery_clean.labels.push_back(working.labels[i]);
      }
    }

    PrivacyLedger ledger(path_of("ledger.jsonl"), cfg.delta_prime,
                         cfg.budget_epsilon, cfg.budget_delta);
    manifest["artifacts"]["ledger"] = path_of("ledger.jsonl");
    if (cfg.train.dp_epsilon > 0.0) {
      auto spend = ledger.try_spend(cfg.train.dp_epsilon, cfg.train.dp_delta,
                                    "release");
      if (!spend.accepted) {
        throw PersistenceError("release spend refused by privacy budget");
      }
    }
    EmbeddingBatch release = gallery_clean;
    release.features = privatize_rows(gallery_clean.features, trained.dp);
    release.provenance["release"] = {
        {"clip_radius", trained.dp.clip_radius},
        {"epsilon", trained.dp.epsilon},
        {"delta", trained.dp.delta},
        {"noise_sigma", trained.dp.noise_sigma},
    };
    write_tgeb(path_of("release.tgeb"), release);
    GalleryIndex index = GalleryIndex::build(release);
    index.save(path_of("gallery.tgix"));
    manifest["artifacts"]["release"] = path_of("release.tgeb");
    manifest["artifacts"]["index"] = path_of("gallery.tgix");
    manifest["stages"]["release"] = "ok";
    flush_manifest();

    current_stage = "evaluate";
    auto metrics = index.evaluate(queries, cfg.eval_k,
                                  /*self_exclusion=*/false);
    nlohmann::json metrics_json = {
        {"rank1", metrics.rank1},   {"rank_k", metrics.rank_k},
        {"mean_ap", metrics.mean_ap}, {"mean_inp", metrics.mean_inp},
        {"k", metrics.k},           {"query_count", metrics.query_count},
    };
    write_json_file(path_of("metrics.json"), metrics_json);
    manifest["artifacts"]["metrics"] = path_of("metrics.json");
    manifest["stages"]["evaluate"] = "ok";
    flush_manifest();

    current_stage = "sweep";
    auto sweep = privacy_utility_sweep(
        gallery_clean, queries, cfg.sweep_epsilons, cfg.train.dp_delta,
        cfg.train.clip_radius, cfg.sweep_seeds, cfg.train.seed, cfg.eval_k);
    write_sweep_csv(path_of("sweep.csv"), sweep);
    write_json_file(path_of("sweep.json"), sweep_to_json(sweep));
    manifest["artifacts"]["sweep_csv"] = path_of("sweep.csv");
    manifest["artifacts"]["sweep_json"] = path_of("sweep.json");
    manifest["stages"]["sweep"] = "ok";
    flush_manifest();
  } catch (...) {
    manifest["failed_stage"] = current_stage;
    flush_manifest();
    throw;
  }
  return manifest;
}

}  // namespace topoguard
