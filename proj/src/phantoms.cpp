#include "tvdot/phantoms.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tvdot {

namespace {

Index ring_start(Index k) { return k == 0 ? 0 : 1 + 3 * k * (k - 1); }

void push_ccw(std::vector<std::array<int, 3>>& tris, const Eigen::MatrixXd& nodes, Index a, Index b,
              Index c) {
  const Eigen::Vector2d u = nodes.row(b) - nodes.row(a);
  const Eigen::Vector2d v = nodes.row(c) - nodes.row(a);
  if (u.x() * v.y() - u.y() * v.x() < 0.0) std::swap(b, c);
  tris.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
}

}  // namespace

Mesh make_circle_mesh(double radius, double target_element_area) {
  if (!(radius > 0.0) || !(target_element_area > 0.0))
    throw std::invalid_argument("make_circle_mesh: radius and target area must be positive");
  // Disk area pi R^2 over 6 K^2 triangles.
  const Index rings = std::max<Index>(
      1, std::llround(radius * std::sqrt(std::numbers::pi / (6.0 * target_element_area))));
  const Index n = 1 + 3 * rings * (rings + 1);

  Eigen::MatrixXd nodes(n, 2);
  nodes.row(0).setZero();
  for (Index k = 1; k <= rings; ++k) {
    const double r = radius * static_cast<double>(k) / static_cast<double>(rings);
    const Index count = 6 * k;
    for (Index j = 0; j < count; ++j) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(count);
      nodes(ring_start(k) + j, 0) = r * std::cos(t);
      nodes(ring_start(k) + j, 1) = r * std::sin(t);
    }
  }

  std::vector<std::array<int, 3>> tris;
  tris.reserve(static_cast<std::size_t>(6 * rings * rings));
  for (Index j = 0; j < 6; ++j) push_ccw(tris, nodes, 0, 1 + j, 1 + (j + 1) % 6);

  for (Index k = 2; k <= rings; ++k) {
    const Index n_in = 6 * (k - 1), n_out = 6 * k;
    const Index s_in = ring_start(k - 1), s_out = ring_start(k);
    auto in = [&](Index i) { return s_in + i % n_in; };
    auto out = [&](Index j) { return s_out + j % n_out; };
    Index i = 0, j = 0;
    while (i < n_in || j < n_out) {
      // Compare the angles of the next inner node (i+1)/n_in and next outer
      // node (j+1)/n_out exactly in integers; ties advance the outer ring.
      const bool advance_outer =
          j < n_out && (i == n_in || (j + 1) * (k - 1) <= (i + 1) * k);
      if (advance_outer) {
        push_ccw(tris, nodes, in(i), out(j), out(j + 1));
        ++j;
      } else {
        push_ccw(tris, nodes, in(i), out(j), in(i + 1));
        ++i;
      }
    }
  }

  Eigen::MatrixXi elements(static_cast<Index>(tris.size()), 3);
  for (Index e = 0; e < elements.rows(); ++e)
    for (int v = 0; v < 3; ++v) elements(e, v) = tris[static_cast<std::size_t>(e)][v];
  return Mesh(std::move(nodes), std::move(elements));
}

Mesh make_cube_mesh(int cells, double size) {
  if (cells < 1 || !(size > 0.0))
    throw std::invalid_argument("make_cube_mesh: cells must be >= 1 and size positive");
  const Index p = cells + 1;
  auto id = [p](Index x, Index y, Index z) { return x + p * (y + p * z); };
  Eigen::MatrixXd nodes(p * p * p, 3);
  const double h = size / cells;
  for (Index z = 0; z < p; ++z)
    for (Index y = 0; y < p; ++y)
      for (Index x = 0; x < p; ++x) nodes.row(id(x, y, z)) << x * h, y * h, z * h;

  // Kuhn split: each of the 6 permutations of the axes gives one tetrahedron
  // along the main diagonal of the cell.
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  Eigen::MatrixXi elements(6 * static_cast<Index>(cells) * cells * cells, 4);
  Index e = 0;
  for (Index z = 0; z < cells; ++z)
    for (Index y = 0; y < cells; ++y)
      for (Index x = 0; x < cells; ++x)
        for (const auto& perm : perms) {
          Index c[3] = {x, y, z};
          elements(e, 0) = static_cast<int>(id(c[0], c[1], c[2]));
          for (int s = 0; s < 3; ++s) {
            ++c[perm[s]];
            elements(e, s + 1) = static_cast<int>(id(c[0], c[1], c[2]));
          }
          ++e;
        }
  return Mesh(std::move(nodes), std::move(elements));
}

std::pair<OpticalProperties, GroundTruth> make_circle_truth(const Mesh& mesh,
                                                            const CirclePhantom& phantom) {
  if (mesh.dim() != 2) throw std::invalid_argument("make_circle_truth: 2D mesh required");
  if (phantom.anomalies.empty()) throw std::invalid_argument("make_circle_truth: no anomalies");
  const Index n = mesh.num_nodes();
  OpticalProperties props{Eigen::VectorXd::Constant(n, phantom.background_mua),
                          Eigen::VectorXd::Constant(n, phantom.musp)};
  std::vector<Index> active;
  double peak = phantom.background_mua;
  for (const auto& a : phantom.anomalies) peak = std::max(peak, a.mua);
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector2d x = mesh.nodes().row(i).transpose();
    bool inside = false;
    for (const auto& a : phantom.anomalies) {
      if ((x - a.center).norm() <= a.radius * (1.0 + 1e-12)) {
        props.mua[i] = a.mua;
        inside = true;
      }
    }
    if (inside) active.push_back(i);
  }
  props.validate(n);
  GroundTruth truth = make_ground_truth(mesh, props.mua, std::move(active), peak);
  return {std::move(props), std::move(truth)};
}

ProbeLayout make_ring_layout(const Mesh& mesh, int n_fibers, double inset) {
  if (mesh.dim() != 2) throw std::invalid_argument("make_ring_layout: 2D mesh required");
  if (n_fibers < 2) throw std::invalid_argument("make_ring_layout: need at least 2 fibres");
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Index nb = 0;
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    if (mesh.boundary()[static_cast<std::size_t>(i)]) {
      center += mesh.nodes().row(i).transpose();
      ++nb;
    }
  center /= static_cast<double>(nb);
  double radius = 0.0;
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    radius = std::max(radius, (mesh.nodes().row(i).transpose() - center).norm());
  const double r = radius - inset;
  if (!(r > 0.0)) throw std::invalid_argument("make_ring_layout: inset exceeds mesh radius");

  ProbeLayout layout;
  layout.sources.resize(n_fibers, 2);
  for (int k = 0; k < n_fibers; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n_fibers;
    layout.sources.row(k) << center.x() + r * std::cos(t), center.y() + r * std::sin(t);
  }
  layout.detectors = layout.sources;
  for (Index s = 0; s < n_fibers; ++s)
    for (Index d = 0; d < n_fibers; ++d)
      if (s != d) layout.measurements.emplace_back(s, d);
  return layout;
}

std::vector<TissueLayer> default_head_layers() {
  return {{43.0, 0.017, 0.74},   // scalp
          {38.0, 0.012, 0.94},   // skull
          {32.0, 0.004, 0.30},   // CSF
          {30.0, 0.018, 0.84},   // grey matter
          {25.0, 0.017, 1.19}};  // white matter
}

std::pair<Mesh, OpticalProperties> make_layered_disk(const std::vector<TissueLayer>& layers,
                                                     double target_element_area) {
  if (layers.empty()) throw std::invalid_argument("make_layered_disk: no layers");
  for (std::size_t l = 1; l < layers.size(); ++l)
    if (!(layers[l].outer_radius < layers[l - 1].outer_radius))
      throw std::invalid_argument("make_layered_disk: radii must decrease outermost to innermost");

  const Mesh base = make_circle_mesh(layers.front().outer_radius, target_element_area);
  const Index n = base.num_nodes();
  Eigen::VectorXi region(n);
  OpticalProperties props{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const double tol = 1e-9 * layers.front().outer_radius;
  for (Index i = 0; i < n; ++i) {
    const double r = base.nodes().row(i).norm();
    std::size_t l = 0;
    while (l + 1 < layers.size() && r <= layers[l + 1].outer_radius + tol) ++l;
    region[i] = static_cast<int>(l + 1);
    props.mua[i] = layers[l].mua;
    props.musp[i] = layers[l].musp;
  }
  return {Mesh(base.nodes(), base.elements(), std::move(region)), std::move(props)};
}

}  // namespace tvdot
