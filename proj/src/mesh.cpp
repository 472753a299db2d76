#include "tvdot/mesh.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

namespace tvdot {

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

using Face = std::array<int, 3>;

Face sorted_face(const Eigen::MatrixXi& elements, Index e, int skip, int dim) {
  Face f{-1, -1, -1};
  int k = 0;
  for (int v = 0; v <= dim; ++v) {
    if (v == skip) continue;
    f[k++] = elements(e, v);
  }
  std::sort(f.begin(), f.begin() + dim);
  return f;
}

}  // namespace

double simplex_measure(const Eigen::Ref<const Eigen::MatrixXd>& vertices) {
  const Index k = vertices.rows() - 1;
  if (k < 1) return 0.0;
  Eigen::MatrixXd edges(vertices.cols(), k);
  for (Index i = 0; i < k; ++i) edges.col(i) = (vertices.row(i + 1) - vertices.row(0)).transpose();
  double volume;
  if (edges.rows() == edges.cols()) {
    volume = std::abs(edges.determinant());
  } else {
    volume = std::sqrt(std::max(0.0, (edges.transpose() * edges).determinant()));
  }
  return volume / factorial(static_cast<int>(k));
}

Mesh::Mesh(Eigen::MatrixXd nodes, Eigen::MatrixXi elements, Eigen::VectorXi region)
    : nodes_(std::move(nodes)), elements_(std::move(elements)), region_(std::move(region)) {
  const Index dim = nodes_.cols();
  if (dim != 2 && dim != 3) throw MeshError("mesh dimension must be 2 or 3");
  const Index n = nodes_.rows();
  if (n < dim + 1) throw MeshError("mesh needs at least dim+1 nodes");
  if (elements_.rows() < 1) throw MeshError("mesh needs at least one element");
  if (elements_.cols() != dim + 1) {
    throw MeshError("elements must have dim+1 vertices");
  }
  if (region_.size() == 0) region_ = Eigen::VectorXi::Zero(n);
  if (region_.size() != n) throw MeshError("region label count does not match node count");
  if (!nodes_.allFinite()) throw MeshError("non-finite node coordinate");

  const double extent = (nodes_.colwise().maxCoeff() - nodes_.colwise().minCoeff()).maxCoeff();
  for (Index e = 0; e < elements_.rows(); ++e) {
    for (Index v = 0; v <= dim; ++v) {
      const int node = elements_(e, v);
      if (node < 0 || node >= n) {
        throw MeshError("element " + std::to_string(e) + " references node index " +
                            std::to_string(node) + " out of range [0, " + std::to_string(n) + ")",
                        e);
      }
      for (Index u = 0; u < v; ++u) {
        if (elements_(e, u) == node) {
          throw MeshError("element " + std::to_string(e) + " repeats node " + std::to_string(node),
                          e);
        }
      }
    }
    // relative to the mesh extent so that unit-free degeneracy is caught
    const double measure = simplex_measure(element_vertices(e));
    if (!(measure > 1e-12 * std::pow(extent, static_cast<double>(dim)))) {
      throw MeshError("element " + std::to_string(e) + " has non-positive measure", e);
    }
  }

  std::map<Face, int> face_count;
  for (Index e = 0; e < elements_.rows(); ++e) {
    for (int skip = 0; skip <= dim; ++skip) {
      ++face_count[sorted_face(elements_, e, skip, static_cast<int>(dim))];
    }
  }
  boundary_.assign(static_cast<std::size_t>(n), false);
  std::vector<Face> bfaces;
  for (const auto& [face, count] : face_count) {
    if (count != 1) continue;
    bfaces.push_back(face);
    for (Index k = 0; k < dim; ++k) boundary_[static_cast<std::size_t>(face[k])] = true;
  }
  boundary_faces_.resize(static_cast<Index>(bfaces.size()), dim);
  for (Index f = 0; f < boundary_faces_.rows(); ++f) {
    for (Index k = 0; k < dim; ++k) boundary_faces_(f, k) = bfaces[static_cast<std::size_t>(f)][k];
  }
}

Eigen::MatrixXd Mesh::element_vertices(Index e) const {
  Eigen::MatrixXd v(elements_.cols(), nodes_.cols());
  for (Index k = 0; k < elements_.cols(); ++k) v.row(k) = nodes_.row(elements_(e, k));
  return v;
}

bool Mesh::operator==(const Mesh& other) const {
  return nodes_.rows() == other.nodes_.rows() && nodes_.cols() == other.nodes_.cols() &&
         elements_.rows() == other.elements_.rows() && nodes_ == other.nodes_ &&
         elements_ == other.elements_ && region_ == other.region_;
}

double element_measure(const Mesh& mesh, Index elem) {
  if (elem < 0 || elem >= mesh.num_elements()) {
    throw MeshError("element index out of range", elem);
  }
  return simplex_measure(mesh.element_vertices(elem));
}

Eigen::VectorXd element_measures(const Mesh& mesh) {
  Eigen::VectorXd m(mesh.num_elements());
  for (Index e = 0; e < mesh.num_elements(); ++e) m[e] = element_measure(mesh, e);
  return m;
}

Eigen::VectorXd nodal_control_measures(const Mesh& mesh) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(mesh.num_nodes());
  const double share = 1.0 / (mesh.dim() + 1);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const double m = element_measure(mesh, e) * share;
    for (Index k = 0; k <= mesh.dim(); ++k) c[mesh.elements()(e, k)] += m;
  }
  return c;
}

std::pair<Index, Eigen::VectorXd> locate_point(const Mesh& mesh,
                                               const Eigen::Ref<const Eigen::VectorXd>& point) {
  const int dim = mesh.dim();
  if (point.size() != dim) throw MeshError("point dimension does not match mesh");
  Eigen::MatrixXd system(dim + 1, dim + 1);
  Eigen::VectorXd rhs(dim + 1);
  rhs.head(dim) = point;
  rhs[dim] = 1.0;
  Index best = -1;
  double best_min = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_bary;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 0; k <= dim; ++k) {
      system.col(k).head(dim) = mesh.nodes().row(mesh.elements()(e, k)).transpose();
      system(dim, k) = 1.0;
    }
    Eigen::VectorXd bary = system.partialPivLu().solve(rhs);
    const double lowest = bary.minCoeff();
    if (lowest > best_min) {
      best_min = lowest;
      best = e;
      best_bary = bary;
    }
    if (lowest >= 0.0) break;
  }
  if (best < 0 || best_min < -1e-10) throw MeshError("point lies outside the mesh");
  best_bary = best_bary.cwiseMax(0.0);
  best_bary /= best_bary.sum();
  return {best, best_bary};
}

double inverse_distance_weight(double distance) { return 1.0 / distance; }

WeightedGraph::WeightedGraph(Eigen::MatrixXd coords,
                             std::span<const std::pair<Index, Index>> edges,
                             const WeightFunction& weight)
    : coords_(std::move(coords)) {
  const Index n = coords_.rows();
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw MeshError("edge references missing vertex");
    if (a == b) throw MeshError("self-edge at vertex " + std::to_string(a), a);
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index i = 0; i < n; ++i) {
    auto& list = adj[static_cast<std::size_t>(i)];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    offsets_[static_cast<std::size_t>(i) + 1] =
        offsets_[static_cast<std::size_t>(i)] + static_cast<Index>(list.size());
  }
  neighbors_.reserve(static_cast<std::size_t>(offsets_.back()));
  weights_.reserve(static_cast<std::size_t>(offsets_.back()));
  for (Index i = 0; i < n; ++i) {
    for (Index j : adj[static_cast<std::size_t>(i)]) {
      // evaluate on the ordered pair so that w_ij == w_ji bit for bit
      const Index lo = std::min(i, j), hi = std::max(i, j);
      const double d = (coords_.row(lo) - coords_.row(hi)).norm();
      if (!(d > 0.0)) {
        throw MeshError("degenerate edge between coincident vertices " + std::to_string(i) +
                            " and " + std::to_string(j),
                        i);
      }
      const double w = weight(d);
      if (!(w > 0.0) || !std::isfinite(w)) throw MeshError("edge weight must be positive", i);
      neighbors_.push_back(j);
      weights_.push_back(w);
    }
  }
  reverse_.resize(neighbors_.size());
  for (Index i = 0; i < n; ++i) {
    for (Index k = offsets_[static_cast<std::size_t>(i)]; k < offsets_[static_cast<std::size_t>(i) + 1]; ++k) {
      reverse_[static_cast<std::size_t>(k)] = edge_index(neighbors_[static_cast<std::size_t>(k)], i);
    }
  }
}

Index WeightedGraph::edge_index(Index i, Index j) const {
  const auto first = neighbors_.begin() + offsets_[static_cast<std::size_t>(i)];
  const auto last = neighbors_.begin() + offsets_[static_cast<std::size_t>(i) + 1];
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return -1;
  return static_cast<Index>(it - neighbors_.begin());
}

WeightedGraph mesh_to_graph(const Mesh& mesh, const WeightFunction& weight) {
  std::vector<std::pair<Index, Index>> edges;
  const Index corners = mesh.elements().cols();
  edges.reserve(static_cast<std::size_t>(mesh.num_elements() * corners * (corners - 1) / 2));
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    for (Index a = 0; a < corners; ++a) {
      for (Index b = a + 1; b < corners; ++b) {
        edges.emplace_back(mesh.elements()(e, a), mesh.elements()(e, b));
      }
    }
  }
  return WeightedGraph(mesh.nodes(), edges, weight);
}

void ProbeLayout::validate() const {
  if (measurements.empty()) throw MeshError("probe layout has no measurements");
  if (sources.cols() != detectors.cols() && sources.rows() > 0 && detectors.rows() > 0) {
    throw MeshError("source and detector coordinates differ in dimension");
  }
  for (std::size_t m = 0; m < measurements.size(); ++m) {
    const auto [s, d] = measurements[m];
    if (s < 0 || s >= sources.rows() || d < 0 || d >= detectors.rows()) {
      throw MeshError("measurement " + std::to_string(m) + " references a missing probe",
                      static_cast<Index>(m));
    }
  }
}

}  // namespace tvdot
