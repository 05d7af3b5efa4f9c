#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "topoguard/camera_graph.hpp"
#include "topoguard/errors.hpp"
#include "topoguard/geo_attention.hpp"
#include "topoguard/rng.hpp"

using namespace topoguard;

namespace {

Eigen::MatrixXd gaussian_matrix(int rows, int cols, uint64_t seed,
                                uint64_t stream, double scale) {
  CounterRng rng(seed, stream);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.next_gaussian();
  }
  return m;
}

// Random camera-style affinity: gaussian kernel on random positions, so
// tests exercise realistic (0, 1] entries with a unit diagonal.
Eigen::MatrixXd random_affinity(int n, uint64_t seed) {
  CounterRng rng(seed, 99);
  Eigen::MatrixXd pos = gaussian_matrix(n, 3, seed, 98, 6.0);
  double sigma = 3.0 + 4.0 * rng.next_uniform();
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      a(i, j) = std::exp(-(pos.row(i) - pos.row(j)).squaredNorm() /
                         (2 * sigma * sigma));
    }
  }
  return a;
}

AttentionParams random_params(int d, uint64_t seed) {
  AttentionParams p;
  double s = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_query = gaussian_matrix(d, d, seed, 1, s);
  p.w_key = gaussian_matrix(d, d, seed, 2, s);
  p.w_value = spectral_normalize(gaussian_matrix(d, d, seed, 3, s), 1.0);
  p.theta = gaussian_matrix(d, d, seed, 4, s);
  return p;
}

// Dominant eigenvalue of a positive matrix by plain power iteration.
double dominant_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows());
  CounterRng rng(0x706f7765, 0);
  for (int i = 0; i < m.rows(); ++i) v(i) += 0.01 * rng.next_uniform();
  v /= v.norm();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd w = m * v;
    double next = v.dot(w);
    w /= w.norm();
    if (std::abs(next - lambda) < 1e-14) return next;
    lambda = next;
    v = w;
  }
  return lambda;
}

}  // namespace

TEST_SUITE("geo_attention") {

TEST_CASE("row softmax hand values and invariances") {
  Eigen::MatrixXd logits(1, 2);
  logits << 0.0, std::log(3.0);
  Eigen::MatrixXd s = row_softmax(logits);
  CHECK(s(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  // Shifting a row by a constant leaves its softmax unchanged.
  Eigen::MatrixXd shifted = logits.array() + 123.4;
  Eigen::MatrixXd s2 = row_softmax(shifted);
  CHECK((s - s2).cwiseAbs().maxCoeff() < 1e-12);

  // Large magnitudes must not overflow thanks to max subtraction.
  Eigen::MatrixXd big(1, 3);
  big << 1000.0, 1001.0, 999.0;
  Eigen::MatrixXd sb = row_softmax(big);
  CHECK(sb.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXd bad(1, 2);
  bad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(row_softmax(bad), NumericOverflow);
}

TEST_CASE("context is the row-normalized affinity mix of projected features") {
  Eigen::MatrixXd x(2, 2), a(2, 2), theta(2, 2);
  x << 1.0, 0.0, 0.0, 2.0;
  a << 1.0, 0.5, 0.25, 1.0;
  theta << 1.0, 1.0, 0.0, 1.0;
  Eigen::MatrixXd c = compute_context(x, a, theta);
  // Row-normalize a by hand: rows (2/3, 1/3) and (1/5, 4/5).
  Eigen::MatrixXd xt = x * theta.transpose();
  Eigen::MatrixXd expected(2, 2);
  expected.row(0) = (2.0 / 3.0) * xt.row(0) + (1.0 / 3.0) * xt.row(1);
  expected.row(1) = 0.2 * xt.row(0) + 0.8 * xt.row(1);
  CHECK((c - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("geometry bias is the floored log affinity") {
  Eigen::MatrixXd a(2, 2);
  a << 1.0, 1e-15, 0.5, 0.1;
  Eigen::MatrixXd b = geometry_bias(a, 2.0, 1e-9);
  CHECK(b(0, 0) == doctest::Approx(0.0));
  CHECK(b(0, 1) == doctest::Approx(2.0 * std::log(1e-9)).epsilon(1e-12));
  CHECK(b(1, 0) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(std::isfinite(b.minCoeff()));
}

TEST_CASE("attention weights recompute from parts") {
  const int n = 5, d = 4;
  Eigen::MatrixXd x = gaussian_matrix(n, d, 21, 0, 1.0);
  Eigen::MatrixXd a = random_affinity(n, 22);
  AttentionParams p = random_params(d, 23);

  Eigen::MatrixXd c = compute_context(x, a, p.theta);
  Eigen::MatrixXd bias = geometry_bias(a, p.bias_temperature, p.affinity_floor);
  Eigen::MatrixXd attn = attention_weights(x, c, p, bias);

  Eigen::MatrixXd logits =
      (x * p.w_query) * (c * p.w_key).transpose() / std::sqrt(double(d)) +
      bias;
  Eigen::MatrixXd expected = row_softmax(logits);
  CHECK((attn - expected).cwiseAbs().maxCoeff() < 1e-14);
  for (int i = 0; i < n; ++i) {
    CHECK(attn.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("residual refinement equals attn value mix plus input") {
  const int n = 6, d = 3;
  Eigen::MatrixXd x = gaussian_matrix(n, d, 31, 0, 1.0);
  Eigen::MatrixXd a = random_affinity(n, 32);
  AttentionParams p = random_params(d, 33);

  Eigen::MatrixXd refined = refine_features(x, a, p);
  Eigen::MatrixXd c = compute_context(x, a, p.theta);
  Eigen::MatrixXd bias = geometry_bias(a, p.bias_temperature, p.affinity_floor);
  Eigen::MatrixXd attn = attention_weights(x, c, p, bias);
  Eigen::MatrixXd expected = attn * (x * p.w_value) + x;
  CHECK((refined - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("power iteration matches the SVD spectral norm") {
  for (int trial = 0; trial < 100; ++trial) {
    int rows = 2 + trial % 7;
    int cols = 2 + (trial / 7) % 7;
    Eigen::MatrixXd m = gaussian_matrix(rows, cols, 500 + trial, 0, 1.0);
    double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    double pi = spectral_norm_power_iteration(m);
    CAPTURE(trial);
    CHECK(pi == doctest::Approx(svd).epsilon(1e-6));
  }
}

TEST_CASE("spectral normalization caps the norm and never upscales") {
  Eigen::MatrixXd m = gaussian_matrix(6, 6, 71, 0, 2.0);
  Eigen::MatrixXd capped = spectral_normalize(m, 1.0);
  CHECK(spectral_norm_power_iteration(capped) <= 1.0 + 1e-9);

  Eigen::MatrixXd tiny = 0.01 * Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd same = spectral_normalize(tiny, 1.0);
  CHECK((same - tiny).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention spectral radius is one and mixing does not amplify") {
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 8, d = 6;
    Eigen::MatrixXd x = gaussian_matrix(n, d, 900 + trial, 0, 1.0);
    Eigen::MatrixXd a = random_affinity(n, 800 + trial);
    AttentionParams p = random_params(d, 700 + trial);

    Eigen::MatrixXd c = compute_context(x, a, p.theta);
    Eigen::MatrixXd bias =
        geometry_bias(a, p.bias_temperature, p.affinity_floor);
    Eigen::MatrixXd attn = attention_weights(x, c, p, bias);

    CAPTURE(trial);
    CHECK(dominant_eigenvalue(attn) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK((attn * (x * p.w_value)).norm() <= x.norm() * (1.0 + 1e-12));
  }
}

TEST_CASE("shape validation") {
  Eigen::MatrixXd x = gaussian_matrix(4, 3, 1, 0, 1.0);
  Eigen::MatrixXd a = random_affinity(5, 2);
  AttentionParams p = random_params(3, 3);
  CHECK_THROWS_AS(refine_features(x, a, p), InvalidInput);
}

}  // TEST_SUITE
