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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

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
#include "topoguard/transport.hpp"

namespace py = pybind11;
using namespace topoguard;

namespace {

EmbeddingBatch make_batch(const Eigen::MatrixXd& features,
                          const std::vector<uint32_t>& labels) {
  EmbeddingBatch batch;
  batch.features = features;
  batch.labels = labels;
  return batch;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Topology-aware private embedding retrieval core";

  py::register_exception<Error>(m, "TopoguardError");

  // ---- camera graph ----
  m.def(
      "camera_affinity",
      [](const Eigen::MatrixXd& positions, double sigma) {
        if (positions.cols() != 3) {
          throw InvalidInput("positions must be n x 3");
        }
        std::vector<CameraPose> poses(positions.rows());
        for (int i = 0; i < positions.rows(); ++i) {
          poses[i].id = "cam" + std::to_string(i);
          poses[i].position = positions.row(i).transpose();
        }
        return CameraGraph::build(poses, sigma).affinity();
      },
      py::arg("positions"), py::arg("sigma"),
      "Gaussian affinity matrix over camera positions (n x 3).");
  m.def("row_normalize", &row_normalize, py::arg("matrix"),
        "L1-normalize each row of a nonnegative matrix.");
  m.def("perturbation_bound", &perturbation_bound, py::arg("delta_p"),
        py::arg("sigma"),
        "Upper bound on any affinity change from moving one camera.");

  // ---- attention ----
  m.def(
      "refine_features",
      [](const Eigen::MatrixXd& features, const Eigen::MatrixXd& affinity,
         const Eigen::MatrixXd& w_query, const Eigen::MatrixXd& w_key,
         const Eigen::MatrixXd& w_value, const Eigen::MatrixXd& theta,
         double bias_temperature) {
        AttentionParams params;
        params.w_query = w_query;
        params.w_key = w_key;
        params.w_value = w_value;
        params.theta = theta;
        params.bias_temperature = bias_temperature;
        return refine_features(features, affinity, params);
      },
      py::arg("features"), py::arg("affinity"), py::arg("w_query"),
      py::arg("w_key"), py::arg("w_value"), py::arg("theta"),
      py::arg("bias_temperature") = 1.0,
      "Geometry-conditioned attention refinement with a residual.");
  m.def("row_softmax", &row_softmax, py::arg("logits"));
  m.def("spectral_norm", &spectral_norm_power_iteration, py::arg("matrix"),
        py::arg("max_iters") = 1000, py::arg("tol") = 1e-10,
        "Largest singular value by power iteration.");
  m.def("spectral_normalize", &spectral_normalize, py::arg("matrix"),
        py::arg("target") = 1.0,
        "Rescale so the spectral norm is at most target.");

  // ---- metric learning ----
  m.def("adaptive_margin", &adaptive_margin, py::arg("gamma0"),
        py::arg("alpha"), py::arg("beta"), py::arg("kl"),
        "gamma0 * (1 + alpha * tanh(beta * kl)).");
  m.def("diagonal_gaussian_kl", &diagonal_gaussian_kl, py::arg("mean_p"),
        py::arg("var_p"), py::arg("mean_q"), py::arg("var_q"),
        py::arg("variance_floor") = 1e-6);
  m.def("pairwise_cosine_dissimilarity", &pairwise_cosine_dissimilarity,
        py::arg("features"));
  m.def("sgd_step_with_decay", &sgd_step_with_decay, py::arg("features"),
        py::arg("grad"), py::arg("eta"), py::arg("lambda_wd"));

  // ---- transport ----
  m.def(
      "sinkhorn",
      [](const Eigen::MatrixXd& cost, const Eigen::VectorXd& p,
         const Eigen::VectorXd& q, double epsilon, double tolerance,
         int max_iters) {
        TransportProblem problem;
        problem.cost = cost;
        problem.p = p;
        problem.q = q;
        problem.epsilon = epsilon;
        TransportPlan plan = sinkhorn(problem, tolerance, max_iters);
        py::dict out;
        out["coupling"] = plan.coupling;
        out["objective"] = plan.objective;
        out["transport_cost"] = plan.transport_cost;
        out["iterations"] = plan.iterations_used;
        out["marginal_residual"] = plan.marginal_residual;
        return out;
      },
      py::arg("cost"), py::arg("p"), py::arg("q"), py::arg("epsilon") = 0.1,
      py::arg("tolerance") = 1e-6, py::arg("max_iters") = 10000,
      "Entropic optimal transport by Sinkhorn scaling.");
  m.def("exact_ot_cost", &exact_ot_cost, py::arg("cost"), py::arg("p"),
        py::arg("q"), "Unregularized transport cost (small problems).");
  m.def("marginal_kl", &marginal_kl, py::arg("p"), py::arg("q"));

  // ---- privacy ----
  m.def("clip_rows", &clip_rows, py::arg("features"), py::arg("radius"));
  m.def("calibrate_sigma", &calibrate_sigma, py::arg("sensitivity"),
        py::arg("epsilon"), py::arg("delta"),
        "Gaussian mechanism noise scale.");
  m.def(
      "privatize_rows",
      [](const Eigen::MatrixXd& features, double clip_radius, double epsilon,
         double delta, uint64_t seed, uint64_t first_stream) {
        DpParams params;
        if (epsilon > 0.0) {
          params = DpParams::calibrate(clip_radius, epsilon, delta, seed);
        } else {
          params.clip_radius = clip_radius;
          params.rng_seed = seed;
        }
        return privatize_rows(features, params, first_stream);
      },
      py::arg("features"), py::arg("clip_radius"), py::arg("epsilon"),
      py::arg("delta"), py::arg("seed") = 0, py::arg("first_stream") = 0,
      "Clip rows to the L2 ball and add calibrated gaussian noise.");
  m.def(
      "compose_spends",
      [](const std::vector<std::pair<double, double>>& spends,
         double delta_prime) {
        std::vector<SpendRecord> records(spends.size());
        for (size_t i = 0; i < spends.size(); ++i) {
          records[i].eps = spends[i].first;
          records[i].delta = spends[i].second;
        }
        ComposedTotals totals = compose_spends(records, delta_prime);
        return std::make_pair(totals.epsilon, totals.delta);
      },
      py::arg("spends"), py::arg("delta_prime"),
      "Advanced composition over (epsilon, delta) pairs.");
  m.def("aggregate_epsilon", &aggregate_epsilon, py::arg("t"),
        py::arg("eps_query"), py::arg("delta_prime"),
        "t * eps + eps * sqrt(2 t ln(1/delta')).");
  m.def("gaussian_at", [](uint64_t seed, uint64_t stream, uint64_t k) {
    return CounterRng(seed, stream).gaussian_at(k);
  });
  m.def("uniform_at", [](uint64_t seed, uint64_t stream, uint64_t k) {
    return CounterRng(seed, stream).uniform_at(k);
  });

  // ---- index ----
  py::class_<GalleryIndex>(m, "GalleryIndex")
      .def_static(
          "build",
          [](const Eigen::MatrixXd& features,
             const std::vector<uint32_t>& labels, const std::string& mode,
             int graph_degree, int ef_construction, int ef_search,
             uint64_t seed) {
            GalleryIndex::BuildParams params;
            if (mode == "exact") {
              params.mode = GalleryIndex::Mode::kExact;
            } else if (mode == "approximate") {
              params.mode = GalleryIndex::Mode::kApproximate;
            } else {
              throw InvalidParameter("mode must be exact or approximate");
            }
            params.graph_degree = graph_degree;
            params.ef_construction = ef_construction;
            params.ef_search = ef_search;
            params.seed = seed;
            return GalleryIndex::build(make_batch(features, labels), params);
          },
          py::arg("features"), py::arg("labels") = std::vector<uint32_t>{},
          py::arg("mode") = "exact", py::arg("graph_degree") = 16,
          py::arg("ef_construction") = 200, py::arg("ef_search") = 64,
          py::arg("seed") = 0)
      .def(
          "query",
          [](const GalleryIndex& self, const Eigen::VectorXd& q, int k) {
            std::vector<std::pair<uint32_t, double>> out;
            for (const auto& n : self.query(q, k)) {
              out.emplace_back(n.id, n.dissimilarity);
            }
            return out;
          },
          py::arg("q"), py::arg("k"))
      .def(
          "evaluate",
          [](const GalleryIndex& self, const Eigen::MatrixXd& features,
             const std::vector<uint32_t>& labels, int k,
             bool self_exclusion) {
            auto metrics =
                self.evaluate(make_batch(features, labels), k, self_exclusion);
            py::dict out;
            out["rank1"] = metrics.rank1;
            out["rank_k"] = metrics.rank_k;
            out["mean_ap"] = metrics.mean_ap;
            out["mean_inp"] = metrics.mean_inp;
            out["k"] = metrics.k;
            out["query_count"] = metrics.query_count;
            return out;
          },
          py::arg("features"), py::arg("labels"), py::arg("k") = 10,
          py::arg("self_exclusion") = false)
      .def("save", &GalleryIndex::save, py::arg("path"))
      .def_static("load", &GalleryIndex::load, py::arg("path"))
      .def_property_readonly("size", &GalleryIndex::size)
      .def_property_readonly("dim", &GalleryIndex::dim);

  // ---- audit ----
  m.def("mia_advantage", &mia_advantage, py::arg("precision"),
        "2 * (precision - 0.5).");
  m.def(
      "compactness",
      [](const Eigen::MatrixXd& features, const std::vector<int>& labels) {
        return compactness(features, labels);
      },
      py::arg("features"), py::arg("labels"),
      "Mean of intra-cluster spread minus nearest-centroid gap.");
  m.def("pac_bound", &pac_generalization_bound, py::arg("emp_risk"),
        py::arg("kl"), py::arg("n"), py::arg("delta"),
        "emp_risk + sqrt((kl + ln(2 sqrt(n)/delta)) / (2n)).");

  // ---- synthetic ----
  m.def(
      "generate_synthetic",
      [](int identities, int samples_per_identity, int dim, int cameras,
         double intra_sigma, double inter_separation,
         double camera_view_shift, uint64_t seed) {
        SyntheticSpec spec;
        spec.identities = identities;
        spec.samples_per_identity = samples_per_identity;
        spec.dim = dim;
        spec.cameras = cameras;
        spec.intra_sigma = intra_sigma;
        spec.inter_separation = inter_separation;
        spec.camera_view_shift = camera_view_shift;
        spec.seed = seed;
        SyntheticData data = generate_synthetic(spec);
        py::dict out;
        out["features"] = data.batch.features;
        out["labels"] = data.batch.labels;
        out["cameras"] = data.batch.cameras;
        out["timestamps"] = data.batch.timestamps;
        out["centroids"] = data.centroids;
        out["affinity"] = data.graph.affinity();
        return out;
      },
      py::arg("identities") = 16, py::arg("samples_per_identity") = 8,
      py::arg("dim") = 32, py::arg("cameras") = 4,
      py::arg("intra_sigma") = 0.15, py::arg("inter_separation") = 1.0,
      py::arg("camera_view_shift") = 0.05, py::arg("seed") = 0,
      "Labeled synthetic embeddings with camera structure.");
}
