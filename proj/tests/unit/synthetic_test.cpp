#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "topoguard/errors.hpp"
#include "topoguard/gallery_index.hpp"
#include "topoguard/synthetic.hpp"

using namespace topoguard;

TEST_SUITE("synthetic") {

TEST_CASE("shapes, labels, cameras and timestamps follow the recipe") {
  SyntheticSpec spec;
  spec.identities = 6;
  spec.samples_per_identity = 5;
  spec.dim = 12;
  spec.cameras = 3;
  spec.seed = 7;
  SyntheticData data = generate_synthetic(spec);

  CHECK(data.batch.count() == 30);
  CHECK(data.batch.dim() == 12);
  CHECK(data.centroids.rows() == 6);
  CHECK(data.centroids.cols() == 12);
  CHECK(data.graph.poses().size() == 3);

  for (int row = 0; row < 30; ++row) {
    CHECK(data.batch.labels[row] == static_cast<uint32_t>(row / 5));
    CHECK(data.batch.cameras[row] == static_cast<uint32_t>(row % 3));
    CHECK(data.batch.timestamps[row] == 0.5 * row);
  }
  CHECK(data.batch.provenance["source"] == "synthetic");
  CHECK(data.batch.provenance["identities"] == 6);
  CHECK(data.batch.features.allFinite());
}

TEST_CASE("generation is a pure function of the seed") {
  SyntheticSpec spec;
  spec.identities = 8;
  spec.samples_per_identity = 4;
  spec.dim = 16;
  spec.seed = 123;
  SyntheticData a = generate_synthetic(spec);
  SyntheticData b = generate_synthetic(spec);
  CHECK((a.batch.features - b.batch.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.centroids - b.centroids).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.graph.affinity() - b.graph.affinity()).cwiseAbs().maxCoeff() ==
        0.0);

  spec.seed = 124;
  SyntheticData c = generate_synthetic(spec);
  CHECK((a.batch.features - c.batch.features).cwiseAbs().maxCoeff() > 1e-6);
  CHECK((a.centroids - c.centroids).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("centroids honor the separation floor") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSpec spec;
    spec.identities = 10;
    spec.dim = 8;
    spec.inter_separation = 2.5;
    spec.seed = seed;
    SyntheticData data = generate_synthetic(spec);
    double min_dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10; ++i) {
      for (int j = i + 1; j < 10; ++j) {
        min_dist = std::min(
            min_dist, (data.centroids.row(i) - data.centroids.row(j)).norm());
      }
    }
    CAPTURE(seed);
    CHECK(min_dist >= 2.5 - 1e-9);
  }
}

TEST_CASE("samples cluster around their centroid with camera offsets") {
  SyntheticSpec spec;
  spec.identities = 4;
  spec.samples_per_identity = 100;
  spec.dim = 10;
  spec.cameras = 2;
  spec.intra_sigma = 0.1;
  spec.camera_view_shift = 0.0;  // isolate the centroid structure
  spec.seed = 3;
  SyntheticData data = generate_synthetic(spec);

  for (int id = 0; id < 4; ++id) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(10);
    for (int s = 0; s < 100; ++s) {
      mean += data.batch.features.row(id * 100 + s).transpose();
    }
    mean /= 100.0;
    // Sample mean of 100 draws at sigma 0.1 sits within ~5 sigma/sqrt(n).
    CHECK((mean - data.centroids.row(id).transpose()).norm() < 0.1);
  }

  // With a view shift, same-identity samples from different cameras are
  // displaced by the difference of two unit offsets times the shift.
  spec.camera_view_shift = 0.5;
  spec.intra_sigma = 0.0;
  SyntheticData shifted = generate_synthetic(spec);
  // Rows 0 and 1 share identity 0 but sit on cameras 0 and 1.
  Eigen::VectorXd delta = shifted.batch.features.row(0).transpose() -
                          shifted.batch.features.row(1).transpose();
  CHECK(delta.norm() > 0.0);
  CHECK(delta.norm() <= 2.0 * 0.5 + 1e-12);
  // Rows 0 and 2 share identity and camera: identical without noise.
  Eigen::VectorXd same = shifted.batch.features.row(0).transpose() -
                         shifted.batch.features.row(2).transpose();
  CHECK(same.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("well-separated clusters retrieve perfectly leave-one-out") {
  SyntheticSpec spec;
  spec.identities = 12;
  spec.samples_per_identity = 6;
  spec.dim = 24;
  spec.intra_sigma = 0.05;
  spec.inter_separation = 1.5;
  spec.camera_view_shift = 0.02;
  spec.seed = 42;
  SyntheticData data = generate_synthetic(spec);

  GalleryIndex index = GalleryIndex::build(data.batch);
  auto metrics = index.evaluate(data.batch, 5, true);
  CHECK(metrics.rank1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(metrics.mean_ap > 0.99);
}

TEST_CASE("high variance identities spread wider") {
  SyntheticSpec spec;
  spec.identities = 10;
  spec.samples_per_identity = 60;
  spec.dim = 8;
  spec.intra_sigma = 0.1;
  spec.high_variance_count = 3;
  spec.high_variance_multiplier = 4.0;
  spec.seed = 11;
  SyntheticData data = generate_synthetic(spec);

  auto spread = [&](int id) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
    for (int s = 0; s < 60; ++s) {
      mean += data.batch.features.row(id * 60 + s).transpose();
    }
    mean /= 60.0;
    double sum = 0.0;
    for (int s = 0; s < 60; ++s) {
      sum +=
          (data.batch.features.row(id * 60 + s).transpose() - mean).squaredNorm();
    }
    return std::sqrt(sum / 60.0);
  };

  double widest_normal = 0.0, narrowest_high = 1e300;
  for (int id = 0; id < 3; ++id) narrowest_high = std::min(narrowest_high, spread(id));
  for (int id = 3; id < 10; ++id) widest_normal = std::max(widest_normal, spread(id));
  CHECK(narrowest_high > 2.0 * widest_normal);
}

TEST_CASE("camera graph uses the circular layout") {
  SyntheticSpec spec;
  spec.cameras = 4;
  spec.camera_circle_radius_m = 10.0;
  spec.graph_sigma_meters = 20.0;
  spec.identities = 2;
  spec.samples_per_identity = 2;
  spec.dim = 4;
  SyntheticData data = generate_synthetic(spec);

  const auto& poses = data.graph.poses();
  REQUIRE(poses.size() == 4);
  CHECK(poses[0].id == "cam0");
  CHECK(poses[0].position.x() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(poses[0].position.z() == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(poses[1].position.y() == doctest::Approx(10.0).epsilon(1e-12));

  // Adjacent cameras are closer than opposite ones, so their affinity is
  // larger; all diagonal entries are exact ones.
  const Eigen::MatrixXd& a = data.graph.affinity();
  CHECK(a(0, 1) > a(0, 2));
  for (int i = 0; i < 4; ++i) CHECK(a(i, i) == 1.0);

  // Opposite cameras sit a diameter apart.
  double d02 = (poses[0].position - poses[2].position).norm();
  CHECK(d02 == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(a(0, 2) ==
        doctest::Approx(std::exp(-d02 * d02 / (2.0 * 20.0 * 20.0)))
            .epsilon(1e-12));
}

TEST_CASE("parameter validation") {
  SyntheticSpec spec;
  spec.identities = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.samples_per_identity = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.dim = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.cameras = 0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.intra_sigma = -0.1;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.inter_separation = 0.0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.high_variance_count = 99;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
  spec = SyntheticSpec{};
  spec.high_variance_multiplier = 0.0;
  CHECK_THROWS_AS(generate_synthetic(spec), InvalidParameter);
}

}  // TEST_SUITE
