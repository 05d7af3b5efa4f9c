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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topoguard/accountant.hpp"
#include "topoguard/act_metric.hpp"
#include "topoguard/audit.hpp"
#include "topoguard/camera_graph.hpp"
#include "topoguard/dp_core.hpp"
#include "topoguard/embedding_io.hpp"
#include "topoguard/errors.hpp"
#include "topoguard/gallery_index.hpp"
#include "topoguard/geo_attention.hpp"
#include "topoguard/rng.hpp"
#include "topoguard/synthetic.hpp"
#include "topoguard/temporal_graph.hpp"
#include "topoguard/trainer.hpp"
#include "topoguard/transport.hpp"

namespace {

using nlohmann::json;
using namespace topoguard;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PersistenceError("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<double> parse_epsilon_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "inf" || item == "Inf" || item == "INF") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else {
      out.push_back(std::stod(item));
    }
  }
  if (out.empty()) throw InvalidParameter("empty epsilon list");
  return out;
}

json metrics_to_json(const GalleryIndex::EvalMetrics& m) {
  return json{{"rank1", m.rank1},       {"rank_k", m.rank_k},
              {"mean_ap", m.mean_ap},   {"mean_inp", m.mean_inp},
              {"k", m.k},               {"query_count", m.query_count}};
}

void write_metrics_csv(const std::string& path,
                       const GalleryIndex::EvalMetrics& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path + " for writing");
  out << "rank1,rank_k,mean_ap,mean_inp,k,query_count\n";
  out.precision(12);
  out << m.rank1 << ',' << m.rank_k << ',' << m.mean_ap << ',' << m.mean_inp
      << ',' << m.k << ',' << m.query_count << '\n';
}

TwoLayerMlp random_mlp(int in_dim, int hidden, int out_dim, uint64_t seed,
                       uint64_t stream) {
  CounterRng rng(seed, stream);
  TwoLayerMlp mlp;
  mlp.w1.resize(hidden, in_dim);
  mlp.w2.resize(out_dim, hidden);
  double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int i = 0; i < hidden; ++i) {
    for (int j = 0; j < in_dim; ++j) mlp.w1(i, j) = s1 * rng.next_gaussian();
  }
  for (int i = 0; i < out_dim; ++i) {
    for (int j = 0; j < hidden; ++j) mlp.w2(i, j) = s2 * rng.next_gaussian();
  }
  mlp.b1 = Eigen::VectorXd::Zero(hidden);
  mlp.b2 = Eigen::VectorXd::Zero(out_dim);
  return mlp;
}

Eigen::MatrixXd random_matrix(int rows, int cols, uint64_t seed,
                              uint64_t stream) {
  CounterRng rng(seed, stream);
  Eigen::MatrixXd m(rows, cols);
  double s = 1.0 / std::sqrt(static_cast<double>(cols));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = s * rng.next_gaussian();
  }
  return m;
}

struct LedgerFlags {
  std::string path;
  double delta_prime = 1e-6;
  double budget_eps = std::numeric_limits<double>::infinity();
  double budget_delta = 1.0;

  void attach(CLI::App* cmd, bool require = false) {
    auto* opt = cmd->add_option("--ledger", path, "Privacy ledger JSONL path");
    if (require) opt->required();
    cmd->add_option("--delta-prime", delta_prime,
                    "Composition slack delta' for the ledger");
    cmd->add_option("--budget-eps", budget_eps, "Total epsilon budget");
    cmd->add_option("--budget-delta", budget_delta, "Total delta budget");
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Topology-aware private embedding retrieval toolkit"};
  app.require_subcommand(1);

  // ---- graph ----------------------------------------------------------
  auto* graph = app.add_subcommand("graph", "Camera affinity graphs");
  graph->require_subcommand(1);

  struct {
    std::string layout, out;
    double sigma = 25.0;
  } graph_build_args;
  auto* graph_build =
      graph->add_subcommand("build", "Build the affinity graph from a layout");
  graph_build->add_option("--layout", graph_build_args.layout,
                          "Camera layout JSON")->required();
  graph_build->add_option("--sigma", graph_build_args.sigma,
                          "Affinity kernel bandwidth in meters");
  graph_build->add_option("--out", graph_build_args.out,
                          "Output graph JSON (stdout when omitted)");
  graph_build->callback([&] {
    json layout = load_json_file(graph_build_args.layout);
    layout["sigma_meters"] = graph_build_args.sigma;
    CameraGraph g = CameraGraph::from_layout_json(layout);
    if (graph_build_args.out.empty()) {
      print_json(g.to_json());
    } else {
      write_json_file(graph_build_args.out, g.to_json());
    }
  });

  struct {
    double delta_p = 0.0, sigma = 0.0;
  } perturb_args;
  auto* graph_perturb = graph->add_subcommand(
      "perturb-bound", "Affinity change bound for a position perturbation");
  graph_perturb->add_option("--delta-p", perturb_args.delta_p,
                            "Perturbation magnitude in meters")->required();
  graph_perturb->add_option("--sigma", perturb_args.sigma,
                            "Affinity kernel bandwidth in meters")->required();
  graph_perturb->callback([&] {
    print_json(json{{"delta_p", perturb_args.delta_p},
                    {"sigma", perturb_args.sigma},
                    {"bound", perturbation_bound(perturb_args.delta_p,
                                                 perturb_args.sigma)}});
  });

  // ---- attn -----------------------------------------------------------
  auto* attn = app.add_subcommand("attn", "Geometry-conditioned attention");
  attn->require_subcommand(1);

  struct {
    std::string embeddings, graph, out;
    double bias_temperature = 1.0;
    uint64_t seed = 0;
    bool random_projections = false;
  } attn_args;
  auto* attn_refine = attn->add_subcommand(
      "refine", "Refine per-camera embeddings through camera attention");
  attn_refine->add_option("--embeddings", attn_args.embeddings,
                          "Input TGEB with one row per camera node")->required();
  attn_refine->add_option("--graph", attn_args.graph, "Camera graph JSON")
      ->required();
  attn_refine->add_option("--out", attn_args.out, "Output TGEB")->required();
  attn_refine->add_option("--bias-temp", attn_args.bias_temperature,
                          "Log-affinity bias temperature");
  attn_refine->add_flag("--random-projections", attn_args.random_projections,
                        "Seeded gaussian projections instead of identity");
  attn_refine->add_option("--seed", attn_args.seed,
                          "Seed for --random-projections");
  attn_refine->callback([&] {
    EmbeddingBatch batch = read_tgeb(attn_args.embeddings);
    CameraGraph g = CameraGraph::from_json(load_json_file(attn_args.graph));
    if (static_cast<long>(g.size()) != batch.count()) {
      throw InvalidInput("embedding rows must match graph nodes");
    }
    const int d = static_cast<int>(batch.dim());
    AttentionParams params;
    if (attn_args.random_projections) {
      params.w_query = random_matrix(d, d, attn_args.seed, 0xa1);
      params.w_key = random_matrix(d, d, attn_args.seed, 0xa2);
      params.w_value = spectral_normalize(
          random_matrix(d, d, attn_args.seed, 0xa3), 1.0);
      params.theta = random_matrix(d, d, attn_args.seed, 0xa4);
    } else {
      params.w_query = Eigen::MatrixXd::Identity(d, d);
      params.w_key = Eigen::MatrixXd::Identity(d, d);
      params.w_value = Eigen::MatrixXd::Identity(d, d);
      params.theta = Eigen::MatrixXd::Identity(d, d);
    }
    params.bias_temperature = attn_args.bias_temperature;
    batch.features = refine_features(batch.features, g.affinity(), params);
    batch.provenance["refined"] = {
        {"graph", attn_args.graph},
        {"bias_temperature", attn_args.bias_temperature}};
    write_tgeb(attn_args.out, batch);
    print_json(json{{"out", attn_args.out}, {"rows", batch.count()}});
  });

  // ---- tgn ------------------------------------------------------------
  auto* tgn = app.add_subcommand("tgn", "Temporal graph update");
  tgn->require_subcommand(1);

  struct {
    std::string embeddings, graph, out;
    int hidden = 16;
    uint64_t seed = 0;
    double tau = 1.0;
    double threshold = 0.05;
    bool no_edge_descriptor = false;
  } tgn_args;
  auto* tgn_step_cmd =
      tgn->add_subcommand("step", "One temporal update over camera nodes");
  tgn_step_cmd->add_option("--embeddings", tgn_args.embeddings,
                           "TGEB with per-node rows and timestamps")->required();
  tgn_step_cmd->add_option("--graph", tgn_args.graph, "Camera graph JSON")
      ->required();
  tgn_step_cmd->add_option("--out", tgn_args.out, "Output TGEB")->required();
  tgn_step_cmd->add_option("--hidden", tgn_args.hidden,
                           "Message MLP hidden width");
  tgn_step_cmd->add_option("--seed", tgn_args.seed, "Weight seed");
  tgn_step_cmd->add_option("--tau", tgn_args.tau, "Snapshot spacing, seconds");
  tgn_step_cmd->add_option("--threshold", tgn_args.threshold,
                           "Neighborhood affinity threshold");
  tgn_step_cmd->add_flag("--no-edge-descriptor", tgn_args.no_edge_descriptor,
                         "Zero the (affinity, dt) edge inputs");
  tgn_step_cmd->callback([&] {
    EmbeddingBatch batch = read_tgeb(tgn_args.embeddings);
    if (!batch.has_timestamps()) {
      throw InvalidInput("tgn step needs per-row timestamps");
    }
    CameraGraph g = CameraGraph::from_json(load_json_file(tgn_args.graph));
    if (static_cast<long>(g.size()) != batch.count()) {
      throw InvalidInput("embedding rows must match graph nodes");
    }
    const int d = static_cast<int>(batch.dim());
    TgnConfig cfg;
    cfg.tau = tgn_args.tau;
    cfg.neighbor_threshold = tgn_args.threshold;
    cfg.use_edge_descriptor = !tgn_args.no_edge_descriptor;
    cfg.message = random_mlp(2 * d + 2, tgn_args.hidden, d, tgn_args.seed, 0xb1);
    cfg.aggregate = random_matrix(d, 2 * d, tgn_args.seed, 0xb2);
    cfg.aggregate_bias = Eigen::VectorXd::Zero(d);
    AttentionParams attn_params;
    attn_params.w_query = Eigen::MatrixXd::Identity(d, d);
    attn_params.w_key = Eigen::MatrixXd::Identity(d, d);
    attn_params.w_value = Eigen::MatrixXd::Identity(d, d);
    attn_params.theta = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd ts = Eigen::Map<const Eigen::VectorXd>(
        batch.timestamps.data(), static_cast<long>(batch.timestamps.size()));
    double before = batch.features.norm();
    batch.features = tgn_step(batch.features, ts, g.affinity(), cfg,
                              attn_params);
    write_tgeb(tgn_args.out, batch);
    print_json(json{{"out", tgn_args.out},
                    {"input_norm", before},
                    {"output_norm", batch.features.norm()},
                    {"stability_constant", tgn_stability_constant(cfg)}});
  });

  // ---- loss -----------------------------------------------------------
  auto* loss = app.add_subcommand("loss", "Metric learning losses");
  loss->require_subcommand(1);

  struct {
    std::string embeddings;
    ActConfig act;
    double lambda_ot = 0.0;
    double ot_epsilon = 0.1;
  } loss_args;
  auto* loss_eval = loss->add_subcommand(
      "eval", "Evaluate the losses on a labeled embedding batch");
  loss_eval->add_option("--embeddings", loss_args.embeddings,
                        "Labeled TGEB batch")->required();
  loss_eval->add_option("--gamma0", loss_args.act.gamma0, "Base margin");
  loss_eval->add_option("--alpha", loss_args.act.alpha, "Margin headroom");
  loss_eval->add_option("--beta", loss_args.act.beta, "KL slope");
  loss_eval->add_option("--scale", loss_args.act.scale, "Logit scale");
  loss_eval->add_option("--lambda-tri", loss_args.act.lambda_tri,
                        "Triplet weight");
  loss_eval->add_option("--lambda-ot", loss_args.lambda_ot,
                        "Transport metric weight");
  loss_eval->add_option("--ot-epsilon", loss_args.ot_epsilon,
                        "Entropic regularization for the transport metric");
  loss_eval->callback([&] {
    EmbeddingBatch batch = read_tgeb(loss_args.embeddings);
    if (!batch.has_labels()) throw InvalidInput("loss eval needs labels");
    std::vector<int> labels = batch.labels_as_int();
    int num_classes = 0;
    for (int l : labels) num_classes = std::max(num_classes, l + 1);

    MarginState margins(loss_args.act.ema_decay);
    margins.observe(batch.features, labels);
    Eigen::MatrixXd prototypes =
        Eigen::MatrixXd::Zero(num_classes, batch.dim());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(num_classes);
    for (long i = 0; i < batch.count(); ++i) {
      prototypes.row(labels[i]) += batch.features.row(i);
      counts(labels[i]) += 1.0;
    }
    for (int c = 0; c < num_classes; ++c) {
      if (counts(c) == 0.0) {
        throw InvalidInput("class " + std::to_string(c) + " has no samples");
      }
      prototypes.row(c) /= counts(c);
      double n = prototypes.row(c).norm();
      if (n <= 0.0) throw DegenerateInput("zero prototype");
      prototypes.row(c) /= n;
    }

    TrainConfig tc;
    tc.act = loss_args.act;
    tc.lambda_ot = loss_args.lambda_ot;
    tc.ot_epsilon = loss_args.ot_epsilon;
    TotalLoss value =
        total_loss(batch.features, labels, prototypes, margins, tc);
    json m = json::object();
    for (int id : margins.identities()) {
      m[std::to_string(id)] = margins.margin_or_default(id, loss_args.act);
    }
    print_json(json{{"id_loss", value.id_value},
                    {"triplet_loss", value.triplet_value},
                    {"act_loss", value.act_value},
                    {"ot_metric", value.ot_value},
                    {"total", value.value},
                    {"grad_norm", value.feature_grad.norm()},
                    {"margins", std::move(m)}});
  });

  // ---- ot -------------------------------------------------------------
  auto* ot = app.add_subcommand("ot", "Entropic optimal transport");
  ot->require_subcommand(1);

  struct {
    std::string cost, p, q, coupling_out;
    double epsilon = 0.1;
    double tolerance = 1e-6;
    int max_iters = 10000;
    bool exact = false;
  } ot_args;
  auto* ot_solve = ot->add_subcommand("solve", "Solve one transport problem");
  ot_solve->add_option("--cost", ot_args.cost, "Cost matrix CSV")->required();
  ot_solve->add_option("--p", ot_args.p, "Row marginal CSV (default uniform)");
  ot_solve->add_option("--q", ot_args.q,
                       "Column marginal CSV (default uniform)");
  ot_solve->add_option("--epsilon", ot_args.epsilon,
                       "Entropic regularization");
  ot_solve->add_option("--tolerance", ot_args.tolerance,
                       "Marginal L1 stopping tolerance");
  ot_solve->add_option("--max-iters", ot_args.max_iters, "Iteration cap");
  ot_solve->add_flag("--exact", ot_args.exact,
                     "Solve the unregularized problem instead");
  ot_solve->add_option("--coupling-out", ot_args.coupling_out,
                       "Write the coupling matrix CSV here");
  ot_solve->callback([&] {
    TransportProblem problem;
    problem.cost = read_csv_matrix(ot_args.cost);
    problem.p = ot_args.p.empty()
                    ? Eigen::VectorXd::Constant(problem.cost.rows(),
                                                1.0 / problem.cost.rows())
                    : read_csv_vector(ot_args.p);
    problem.q = ot_args.q.empty()
                    ? Eigen::VectorXd::Constant(problem.cost.cols(),
                                                1.0 / problem.cost.cols())
                    : read_csv_vector(ot_args.q);
    problem.epsilon = ot_args.epsilon;
    json out;
    Eigen::MatrixXd coupling;
    if (ot_args.exact) {
      coupling = exact_ot_plan(problem.cost, problem.p, problem.q);
      double cost = (coupling.array() * problem.cost.array()).sum();
      out = json{{"transport_cost", cost}, {"exact", true}};
    } else {
      TransportPlan plan =
          sinkhorn(problem, ot_args.tolerance, ot_args.max_iters);
      coupling = plan.coupling;
      out = json{{"objective", plan.objective},
                 {"transport_cost", plan.transport_cost},
                 {"iterations", plan.iterations_used},
                 {"marginal_residual", plan.marginal_residual},
                 {"exact", false}};
    }
    if (!ot_args.coupling_out.empty()) {
      write_csv_matrix(ot_args.coupling_out, coupling);
      out["coupling"] = ot_args.coupling_out;
    }
    print_json(out);
  });

  // ---- privatize ------------------------------------------------------
  struct {
    std::string embeddings, out, tag = "release";
    double clip = 1.0, epsilon = 0.0, delta = 1e-5;
    uint64_t seed = 0, first_stream = 0;
    LedgerFlags ledger;
  } priv_args;
  auto* priv = app.add_subcommand(
      "privatize", "Clip and noise embeddings under the gaussian mechanism");
  priv->add_option("--embeddings", priv_args.embeddings, "Input TGEB")
      ->required();
  priv->add_option("--out", priv_args.out, "Output TGEB")->required();
  priv->add_option("--clip", priv_args.clip, "L2 clip radius");
  priv->add_option("--epsilon", priv_args.epsilon,
                   "Per-release epsilon (0 clips without noise)");
  priv->add_option("--delta", priv_args.delta, "Per-release delta");
  priv->add_option("--seed", priv_args.seed, "Noise seed");
  priv->add_option("--first-stream", priv_args.first_stream,
                   "Noise stream of the first row");
  priv->add_option("--tag", priv_args.tag, "Ledger spend tag");
  priv_args.ledger.attach(priv);
  priv->callback([&] {
    EmbeddingBatch batch = read_tgeb(priv_args.embeddings);
    DpParams params;
    if (priv_args.epsilon > 0.0) {
      params = DpParams::calibrate(priv_args.clip, priv_args.epsilon,
                                   priv_args.delta, priv_args.seed);
    } else {
      params.clip_radius = priv_args.clip;
      params.rng_seed = priv_args.seed;
    }
    json spend_info;
    if (!priv_args.ledger.path.empty() && priv_args.epsilon > 0.0) {
      PrivacyLedger ledger(priv_args.ledger.path,
                           priv_args.ledger.delta_prime,
                           priv_args.ledger.budget_eps,
                           priv_args.ledger.budget_delta);
      auto outcome =
          ledger.try_spend(priv_args.epsilon, priv_args.delta, priv_args.tag);
      if (!outcome.accepted) {
        throw PersistenceError(
            "privacy budget refused the spend; nothing was released");
      }
      spend_info = json{{"accepted", true},
                        {"epsilon_total", outcome.totals.epsilon},
                        {"delta_total", outcome.totals.delta}};
    }
    batch.features =
        privatize_rows(batch.features, params, priv_args.first_stream);
    batch.provenance["release"] = {{"clip_radius", params.clip_radius},
                                   {"epsilon", priv_args.epsilon},
                                   {"delta", priv_args.delta},
                                   {"noise_sigma", params.noise_sigma},
                                   {"seed", priv_args.seed}};
    write_tgeb(priv_args.out, batch);
    json out = {{"out", priv_args.out},
                {"noise_sigma", params.noise_sigma},
                {"rows", batch.count()}};
    if (!spend_info.is_null()) out["spend"] = spend_info;
    print_json(out);
  });

  // ---- account --------------------------------------------------------
  auto* account = app.add_subcommand("account", "Privacy budget ledger");
  account->require_subcommand(1);

  struct {
    LedgerFlags ledger;
    std::string csv;
  } status_args;
  auto* status = account->add_subcommand("status", "Budget report");
  status_args.ledger.attach(status, /*require=*/true);
  status->add_option("--csv", status_args.csv, "Also write per-tag CSV here");
  status->callback([&] {
    PrivacyLedger ledger(status_args.ledger.path,
                         status_args.ledger.delta_prime,
                         status_args.ledger.budget_eps,
                         status_args.ledger.budget_delta);
    BudgetReport report = ledger.report();
    if (!status_args.csv.empty()) {
      std::ofstream out(status_args.csv, std::ios::trunc);
      if (!out) {
        throw PersistenceError("cannot open " + status_args.csv +
                               " for writing");
      }
      out << "tag,epsilon_sum,spend_count\n";
      out.precision(12);
      for (const auto& [tag, agg] : report.per_tag) {
        out << tag << ',' << agg.first << ',' << agg.second << '\n';
      }
    }
    print_json(report.to_json());
  });

  struct {
    LedgerFlags ledger;
    double eps = 0.0, delta = 0.0;
    std::string tag = "manual";
  } spend_args;
  auto* spend = account->add_subcommand("spend", "Record one spend");
  spend_args.ledger.attach(spend, /*require=*/true);
  spend->add_option("--eps", spend_args.eps, "Spend epsilon")->required();
  spend->add_option("--delta", spend_args.delta, "Spend delta")->required();
  spend->add_option("--tag", spend_args.tag, "Spend tag");
  spend->callback([&] {
    PrivacyLedger ledger(spend_args.ledger.path,
                         spend_args.ledger.delta_prime,
                         spend_args.ledger.budget_eps,
                         spend_args.ledger.budget_delta);
    auto outcome =
        ledger.try_spend(spend_args.eps, spend_args.delta, spend_args.tag);
    print_json(json{{"accepted", outcome.accepted},
                    {"epsilon_total", outcome.totals.epsilon},
                    {"delta_total", outcome.totals.delta}});
    if (!outcome.accepted) std::exit(3);
  });

  // ---- index ----------------------------------------------------------
  auto* index = app.add_subcommand("index", "Gallery search index");
  index->require_subcommand(1);

  struct {
    std::string embeddings, out, mode = "exact";
    int degree = 16, ef_construction = 200, ef_search = 64;
    uint64_t seed = 0;
  } ib_args;
  auto* index_build = index->add_subcommand("build", "Build and save an index");
  index_build->add_option("--embeddings", ib_args.embeddings, "Gallery TGEB")
      ->required();
  index_build->add_option("--out", ib_args.out, "Output index file")
      ->required();
  index_build->add_option("--mode", ib_args.mode, "exact or approximate")
      ->check(CLI::IsMember({"exact", "approximate"}));
  index_build->add_option("--degree", ib_args.degree, "Graph degree M");
  index_build->add_option("--ef-construction", ib_args.ef_construction,
                          "Construction beam width");
  index_build->add_option("--ef-search", ib_args.ef_search,
                          "Default query beam width");
  index_build->add_option("--seed", ib_args.seed, "Level assignment seed");
  index_build->callback([&] {
    EmbeddingBatch batch = read_tgeb(ib_args.embeddings);
    GalleryIndex::BuildParams params;
    params.mode = ib_args.mode == "exact" ? GalleryIndex::Mode::kExact
                                          : GalleryIndex::Mode::kApproximate;
    params.graph_degree = ib_args.degree;
    params.ef_construction = ib_args.ef_construction;
    params.ef_search = ib_args.ef_search;
    params.seed = ib_args.seed;
    GalleryIndex idx = GalleryIndex::build(batch, params);
    idx.save(ib_args.out);
    print_json(json{{"out", ib_args.out},
                    {"size", idx.size()},
                    {"dim", idx.dim()},
                    {"mode", ib_args.mode}});
  });

  struct {
    std::string index, queries;
    int row = 0, k = 10, ef_search = 0;
    double epsilon = 0.0, delta = 1e-5, clip = 1.0;
    uint64_t seed = 0;
    LedgerFlags ledger;
  } iq_args;
  auto* index_query = index->add_subcommand("query", "Query a saved index");
  index_query->add_option("--index", iq_args.index, "Index file")->required();
  index_query->add_option("--queries", iq_args.queries, "Query TGEB")
      ->required();
  index_query->add_option("--row", iq_args.row, "Query row ordinal");
  index_query->add_option("-k,--k", iq_args.k, "Neighbors to return");
  index_query->add_option("--ef-search", iq_args.ef_search,
                          "Beam width override (approximate mode)");
  index_query->add_option("--epsilon", iq_args.epsilon,
                          "Per-query epsilon for private queries");
  index_query->add_option("--delta", iq_args.delta, "Per-query delta");
  index_query->add_option("--clip", iq_args.clip, "Query clip radius");
  index_query->add_option("--seed", iq_args.seed, "Query noise seed");
  iq_args.ledger.attach(index_query);
  index_query->callback([&] {
    GalleryIndex idx = GalleryIndex::load(iq_args.index);
    EmbeddingBatch queries = read_tgeb(iq_args.queries);
    if (iq_args.row < 0 || iq_args.row >= queries.count()) {
      throw InvalidInput("query row out of range");
    }
    Eigen::VectorXd q = queries.features.row(iq_args.row).transpose();
    json out;
    GalleryIndex::QueryResult result;
    if (!iq_args.ledger.path.empty()) {
      PrivacyLedger ledger(iq_args.ledger.path, iq_args.ledger.delta_prime,
                           iq_args.ledger.budget_eps,
                           iq_args.ledger.budget_delta);
      DpParams params = DpParams::calibrate(iq_args.clip, iq_args.epsilon,
                                            iq_args.delta, iq_args.seed);
      auto outcome = idx.private_query(q, iq_args.k, params, ledger);
      out["accepted"] = outcome.accepted;
      out["epsilon_total"] = outcome.totals.epsilon;
      out["delta_total"] = outcome.totals.delta;
      result = outcome.result;
    } else {
      result = iq_args.ef_search > 0 ? idx.query(q, iq_args.k,
                                                 iq_args.ef_search)
                                     : idx.query(q, iq_args.k);
    }
    json neighbors = json::array();
    for (const auto& n : result) {
      neighbors.push_back(
          {{"id", n.id}, {"dissimilarity", n.dissimilarity}});
    }
    out["neighbors"] = std::move(neighbors);
    print_json(out);
  });

  struct {
    std::string index, queries, csv;
    int k = 10;
    bool self_exclusion = false;
  } ie_args;
  auto* index_eval =
      index->add_subcommand("eval", "Retrieval metrics against labels");
  index_eval->add_option("--index", ie_args.index, "Index file")->required();
  index_eval->add_option("--queries", ie_args.queries, "Labeled query TGEB")
      ->required();
  index_eval->add_option("-k,--k", ie_args.k, "Rank cutoff");
  index_eval->add_flag("--self-exclusion", ie_args.self_exclusion,
                       "Skip the gallery row with the query's ordinal");
  index_eval->add_option("--csv", ie_args.csv, "Also write metrics CSV here");
  index_eval->callback([&] {
    GalleryIndex idx = GalleryIndex::load(ie_args.index);
    EmbeddingBatch queries = read_tgeb(ie_args.queries);
    auto metrics = idx.evaluate(queries, ie_args.k, ie_args.self_exclusion);
    if (!ie_args.csv.empty()) write_metrics_csv(ie_args.csv, metrics);
    print_json(metrics_to_json(metrics));
  });

  // ---- audit ----------------------------------------------------------
  auto* audit = app.add_subcommand("audit", "Empirical privacy audits");
  audit->require_subcommand(1);

  struct {
    std::string members, nonmembers;
    double clip = 1.0, epsilon = 0.0, delta = 1e-5;
    uint64_t noise_seed = 0, audit_seed = 0;
  } mia_args;
  auto* audit_mia =
      audit->add_subcommand("mia", "Membership-inference threshold attack");
  audit_mia->add_option("--members", mia_args.members, "Member TGEB")
      ->required();
  audit_mia->add_option("--nonmembers", mia_args.nonmembers, "Nonmember TGEB")
      ->required();
  audit_mia->add_option("--clip", mia_args.clip, "Clip radius");
  audit_mia->add_option("--epsilon", mia_args.epsilon,
                        "Calibrate noise for this epsilon (0 = no noise)");
  audit_mia->add_option("--delta", mia_args.delta, "Calibration delta");
  audit_mia->add_option("--noise-seed", mia_args.noise_seed, "Noise seed");
  audit_mia->add_option("--audit-seed", mia_args.audit_seed,
                        "Split/attack seed");
  audit_mia->callback([&] {
    EmbeddingBatch members = read_tgeb(mia_args.members);
    EmbeddingBatch nonmembers = read_tgeb(mia_args.nonmembers);
    DpParams params;
    if (mia_args.epsilon > 0.0) {
      params = DpParams::calibrate(mia_args.clip, mia_args.epsilon,
                                   mia_args.delta, mia_args.noise_seed);
    }
    MiaReport report = run_mia_audit(members.features, nonmembers.features,
                                     params, mia_args.audit_seed);
    print_json(json{{"precision", report.precision},
                    {"advantage", report.advantage},
                    {"noise_sigma", report.noise_sigma},
                    {"trials", report.trials}});
  });

  struct {
    std::string gallery, queries, eps = "inf,8,2,0.5";
    std::string out_csv, out_json;
    double delta = 1e-5, clip = 1.0;
    int seeds = 5, k = 10;
    uint64_t seed = 0;
  } sweep_args;
  auto* audit_sweep =
      audit->add_subcommand("sweep", "Retrieval quality vs privacy budget");
  audit_sweep->add_option("--gallery", sweep_args.gallery, "Gallery TGEB")
      ->required();
  audit_sweep->add_option("--queries", sweep_args.queries, "Query TGEB")
      ->required();
  audit_sweep->add_option("--eps", sweep_args.eps,
                          "Comma list of epsilons; inf = noiseless");
  audit_sweep->add_option("--delta", sweep_args.delta, "Calibration delta");
  audit_sweep->add_option("--clip", sweep_args.clip, "Clip radius");
  audit_sweep->add_option("--seeds", sweep_args.seeds, "Noise seeds per cell");
  audit_sweep->add_option("-k,--k", sweep_args.k, "Rank cutoff");
  audit_sweep->add_option("--seed", sweep_args.seed, "Base noise seed");
  audit_sweep->add_option("--out-csv", sweep_args.out_csv, "CSV output path");
  audit_sweep->add_option("--out-json", sweep_args.out_json,
                          "JSON output path");
  audit_sweep->callback([&] {
    EmbeddingBatch gallery = read_tgeb(sweep_args.gallery);
    EmbeddingBatch queries = read_tgeb(sweep_args.queries);
    auto rows = privacy_utility_sweep(
        gallery, queries, parse_epsilon_list(sweep_args.eps),
        sweep_args.delta, sweep_args.clip, sweep_args.seeds, sweep_args.seed,
        sweep_args.k);
    if (!sweep_args.out_csv.empty()) write_sweep_csv(sweep_args.out_csv, rows);
    if (!sweep_args.out_json.empty()) {
      write_json_file(sweep_args.out_json, sweep_to_json(rows));
    }
    print_json(sweep_to_json(rows));
  });

  // ---- diagnose -------------------------------------------------------
  auto* diagnose = app.add_subcommand("diagnose", "Embedding diagnostics");
  diagnose->require_subcommand(1);

  struct {
    std::string embeddings, csv;
  } comp_args;
  auto* diag_comp = diagnose->add_subcommand(
      "compactness", "Cluster compactness of a labeled batch");
  diag_comp->add_option("--embeddings", comp_args.embeddings, "Labeled TGEB")
      ->required();
  diag_comp->add_option("--csv", comp_args.csv, "Also write per-cluster CSV");
  diag_comp->callback([&] {
    EmbeddingBatch batch = read_tgeb(comp_args.embeddings);
    if (!batch.has_labels()) throw InvalidInput("compactness needs labels");
    CompactnessReport report =
        compactness_report(batch.features, batch.labels_as_int());
    if (!comp_args.csv.empty()) {
      std::ofstream out(comp_args.csv, std::ios::trunc);
      if (!out) {
        throw PersistenceError("cannot open " + comp_args.csv +
                               " for writing");
      }
      out << "label,count,intra_mean,nearest_gap\n";
      out.precision(12);
      for (const auto& c : report.clusters) {
        out << c.label << ',' << c.count << ',' << c.intra_mean << ','
            << c.nearest_gap << '\n';
      }
    }
    print_json(report.to_json());
  });

  // ---- synth ----------------------------------------------------------
  struct {
    SyntheticSpec spec;
    std::string out, graph_out;
  } synth_args;
  auto* synth =
      app.add_subcommand("synth", "Generate a synthetic labeled gallery");
  synth->add_option("--identities", synth_args.spec.identities);
  synth->add_option("--samples", synth_args.spec.samples_per_identity);
  synth->add_option("--dim", synth_args.spec.dim);
  synth->add_option("--cameras", synth_args.spec.cameras);
  synth->add_option("--intra-sigma", synth_args.spec.intra_sigma);
  synth->add_option("--inter-separation", synth_args.spec.inter_separation);
  synth->add_option("--view-shift", synth_args.spec.camera_view_shift);
  synth->add_option("--high-variance-count",
                    synth_args.spec.high_variance_count);
  synth->add_option("--high-variance-multiplier",
                    synth_args.spec.high_variance_multiplier);
  synth->add_option("--seed", synth_args.spec.seed);
  synth->add_option("--circle-radius", synth_args.spec.camera_circle_radius_m);
  synth->add_option("--graph-sigma", synth_args.spec.graph_sigma_meters);
  synth->add_option("--out", synth_args.out, "Output TGEB")->required();
  synth->add_option("--graph-out", synth_args.graph_out,
                    "Camera graph JSON output");
  synth->callback([&] {
    SyntheticData data = generate_synthetic(synth_args.spec);
    write_tgeb(synth_args.out, data.batch);
    if (!synth_args.graph_out.empty()) {
      write_json_file(synth_args.graph_out, data.graph.to_json());
    }
    print_json(json{{"out", synth_args.out},
                    {"rows", data.batch.count()},
                    {"dim", data.batch.dim()},
                    {"identities", synth_args.spec.identities}});
  });

  // ---- pipeline -------------------------------------------------------
  auto* pipeline = app.add_subcommand("pipeline", "End-to-end orchestration");
  pipeline->require_subcommand(1);

  struct {
    std::string config, out_dir;
    int64_t seed = -1;
  } pipe_args;
  auto* pipe_run = pipeline->add_subcommand("run", "Run the full pipeline");
  pipe_run->add_option("--config", pipe_args.config, "Pipeline config JSON")
      ->required();
  pipe_run->add_option("--seed", pipe_args.seed,
                       "Seed override (beats TOPOGUARD_SEED and the config)");
  pipe_run->add_option("--out-dir", pipe_args.out_dir,
                       "Output directory override");
  pipe_run->callback([&] {
    PipelineConfig cfg = PipelineConfig::from_json(
        load_json_file(pipe_args.config));
    // Seed precedence: flag, then TOPOGUARD_SEED, then the config file.
    std::optional<uint64_t> seed;
    if (const char* env = std::getenv("TOPOGUARD_SEED")) {
      seed = std::stoull(env);
    }
    if (pipe_args.seed >= 0) seed = static_cast<uint64_t>(pipe_args.seed);
    if (seed) {
      cfg.synth.seed = *seed;
      cfg.train.seed = *seed;
    }
    if (!pipe_args.out_dir.empty()) cfg.out_dir = pipe_args.out_dir;
    print_json(run_pipeline(cfg));
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const topoguard::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
