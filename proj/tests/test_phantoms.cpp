#include "doctest.h"

#include "tvdot/phantoms.hpp"

#include <numbers>

using namespace tvdot;

namespace {

Index nearest(const Mesh& mesh, double x, double y) {
  Index best = 0;
  (mesh.nodes().rowwise() - Eigen::RowVector2d(x, y)).rowwise().squaredNorm().minCoeff(&best);
  return best;
}

}  // namespace

TEST_CASE("coarse and fine circle meshes") {
  const Mesh coarse = make_circle_mesh(43.0, 1.70);
  CHECK(coarse.num_nodes() >= 1400);
  CHECK(coarse.num_nodes() <= 2200);
  CHECK(coarse.num_elements() >= 2700);
  CHECK(coarse.num_elements() <= 4200);
  const double area = std::numbers::pi * 43.0 * 43.0;
  const double mean_area = element_measures(coarse).sum() / static_cast<double>(coarse.num_elements());
  CHECK(std::abs(mean_area - 1.70) / 1.70 < 0.25);
  CHECK(std::abs(element_measures(coarse).sum() - area) / area < 0.02);

  const Mesh fine = make_circle_mesh(43.0, 0.58);
  CHECK(fine.num_elements() > 2 * coarse.num_elements());
  const double fine_mean = element_measures(fine).sum() / static_cast<double>(fine.num_elements());
  CHECK(std::abs(fine_mean - 0.58) / 0.58 < 0.25);
  CHECK(std::abs(element_measures(fine).sum() - area) / area < 0.02);

  CHECK(make_circle_mesh(43.0, 1.70) == coarse);
  CHECK_THROWS_AS(make_circle_mesh(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("ring meshes have the structured counts") {
  for (double target : {400.0, 30.0, 3.0}) {
    const Mesh m = make_circle_mesh(20.0, target);
    const Index k = static_cast<Index>(std::lround(std::sqrt(m.num_elements() / 6.0)));
    CHECK(m.num_elements() == 6 * k * k);
    CHECK(m.num_nodes() == 1 + 3 * k * (k + 1));
    Index boundary = 0;
    for (bool b : m.boundary()) boundary += b ? 1 : 0;
    CHECK(boundary == 6 * k);
  }
}

TEST_CASE("circle phantom values") {
  const Mesh mesh = make_circle_mesh(43.0, 1.6977);
  const auto [props, truth] = make_circle_truth(mesh);
  CHECK(props.mua[nearest(mesh, -10.0, 10.0)] == 0.03);
  CHECK(props.mua[nearest(mesh, 40.0, 0.0)] == 0.01);
  CHECK((props.musp.array() == 1.0).all());
  CHECK(std::abs(truth.measure - 100.0 * std::numbers::pi) / (100.0 * std::numbers::pi) < 0.10);
  CHECK((truth.centroid - Eigen::Vector2d(-10.0, 10.0)).norm() < 0.5);
  CHECK(truth.anomaly_value == 0.03);
  for (Index i : truth.activation) CHECK((mesh.nodes().row(i) - Eigen::RowVector2d(-10, 10)).norm() <= 10.0 + 1e-9);
}

TEST_CASE("ring layouts") {
  const Mesh mesh = make_circle_mesh(43.0, 1.6977);
  const ProbeLayout layout = make_ring_layout(mesh, 16, 1.0);
  CHECK(layout.num_measurements() == 240);
  CHECK(layout.sources == layout.detectors);
  CHECK(make_ring_layout(mesh, 8, 1.0).num_measurements() == 56);
  std::vector<double> angles;
  for (Index k = 0; k < 16; ++k) {
    const Eigen::Vector2d p = layout.sources.row(k).transpose();
    CHECK(p.norm() == doctest::Approx(42.0).epsilon(1e-12));
    angles.push_back(std::atan2(p.y(), p.x()));
  }
  for (std::size_t k = 0; k < angles.size(); ++k) {
    double gap = angles[(k + 1) % angles.size()] - angles[k];
    if (gap < 0.0) gap += 2.0 * std::numbers::pi;
    CHECK(std::abs(gap - 2.0 * std::numbers::pi / 16.0) < 1e-9);
  }
  for (const auto& [s, d] : layout.measurements) CHECK(s != d);
  CHECK_THROWS_AS(make_ring_layout(mesh, 16, 50.0), std::invalid_argument);
}

TEST_CASE("layered head disk") {
  const auto layers = default_head_layers();
  REQUIRE(layers.size() == 5);
  const auto [mesh, props] = make_layered_disk(layers, 1.7);
  std::vector<int> count(6, 0);
  for (Index i = 0; i < mesh.num_nodes(); ++i) {
    const int label = mesh.region()[i];
    REQUIRE(label >= 1);
    REQUIRE(label <= 5);
    ++count[static_cast<std::size_t>(label)];
    const auto& layer = layers[static_cast<std::size_t>(label - 1)];
    CHECK(props.mua[i] == layer.mua);
    CHECK(props.musp[i] == layer.musp);
  }
  for (int l = 1; l <= 5; ++l) CHECK(count[static_cast<std::size_t>(l)] > 0);
  CHECK(props.mua[nearest(mesh, 31.0, 0.0)] == 0.004);
  CHECK(props.musp[nearest(mesh, 0.0, 0.0)] == 1.19);
  CHECK(props.mua[nearest(mesh, 0.0, 42.5)] == 0.017);
  CHECK(props.musp[nearest(mesh, 0.0, 42.5)] == 0.74);
  CHECK_THROWS_AS(make_layered_disk({{10.0, 0.01, 1.0}, {20.0, 0.01, 1.0}}), std::invalid_argument);
}

TEST_CASE("cube mesh") {
  const Mesh cube = make_cube_mesh(2, 3.0);
  CHECK(cube.dim() == 3);
  CHECK(cube.num_nodes() == 27);
  CHECK(cube.num_elements() == 48);
  CHECK(element_measures(cube).sum() == doctest::Approx(27.0));
  CHECK(cube.boundary_faces().rows() == 6 * 4 * 2);
}
