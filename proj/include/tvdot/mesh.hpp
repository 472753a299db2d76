#pragma once

#include <Eigen/Core>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tvdot {

using Index = Eigen::Index;

/// Raised for structurally invalid meshes, graphs and probe layouts.
/// `id()` is the offending node/element/edge index, or -1 when not applicable.
class MeshError : public std::runtime_error {
public:
  MeshError(const std::string& what, Index id = -1)
      : std::runtime_error(what), id_(id) {}
  Index id() const noexcept { return id_; }

private:
  Index id_;
};

/// Unsigned measure of a simplex whose vertices are the rows of `vertices`.
/// Handles full-dimensional simplices and (dim-1)-faces embedded in dim-space.
double simplex_measure(const Eigen::Ref<const Eigen::MatrixXd>& vertices);

/// Unstructured linear simplex mesh (triangles in 2D, tetrahedra in 3D).
///
/// Nodes are stored one per row (N x dim), elements one per row (M x dim+1).
/// The constructor validates every invariant and derives boundary flags from
/// faces that belong to exactly one element. Instances are immutable.
class Mesh {
public:
  Mesh(Eigen::MatrixXd nodes, Eigen::MatrixXi elements,
       Eigen::VectorXi region = Eigen::VectorXi());

  int dim() const noexcept { return static_cast<int>(nodes_.cols()); }
  Index num_nodes() const noexcept { return nodes_.rows(); }
  Index num_elements() const noexcept { return elements_.rows(); }

  const Eigen::MatrixXd& nodes() const noexcept { return nodes_; }
  const Eigen::MatrixXi& elements() const noexcept { return elements_; }
  const Eigen::VectorXi& region() const noexcept { return region_; }
  const std::vector<bool>& boundary() const noexcept { return boundary_; }
  /// Boundary faces, one per row (dim node indices each).
  const Eigen::MatrixXi& boundary_faces() const noexcept { return boundary_faces_; }

  /// Vertex coordinates of element `e`, one vertex per row.
  Eigen::MatrixXd element_vertices(Index e) const;

  bool operator==(const Mesh& other) const;

private:
  Eigen::MatrixXd nodes_;
  Eigen::MatrixXi elements_;
  Eigen::VectorXi region_;
  std::vector<bool> boundary_;
  Eigen::MatrixXi boundary_faces_;
};

/// Area (2D) or volume (3D) of element `elem`.
double element_measure(const Mesh& mesh, Index elem);

/// All element measures, in element order.
Eigen::VectorXd element_measures(const Mesh& mesh);

/// Per-node control measure: each element's measure split equally among its vertices.
Eigen::VectorXd nodal_control_measures(const Mesh& mesh);

/// Index of the element containing `point` together with its barycentric
/// coordinates. Throws MeshError when the point lies outside the mesh.
std::pair<Index, Eigen::VectorXd> locate_point(const Mesh& mesh,
                                               const Eigen::Ref<const Eigen::VectorXd>& point);

using WeightFunction = std::function<double(double distance)>;

/// w(d) = 1/d, the default edge weight.
double inverse_distance_weight(double distance);

/// Symmetric weighted graph stored as CSR adjacency over directed edges.
///
/// Directed edge k runs from the vertex owning row k to `neighbors()[k]`;
/// `reverse()[k]` is the index of the opposite directed edge. Every undirected
/// edge therefore occupies two slots and edge fields have length
/// `num_directed_edges()`.
class WeightedGraph {
public:
  /// Builds the graph from undirected vertex pairs (duplicates are merged).
  WeightedGraph(Eigen::MatrixXd coords, std::span<const std::pair<Index, Index>> edges,
                const WeightFunction& weight = inverse_distance_weight);

  Index num_vertices() const noexcept { return coords_.rows(); }
  Index num_edges() const noexcept { return static_cast<Index>(neighbors_.size()) / 2; }
  Index num_directed_edges() const noexcept { return static_cast<Index>(neighbors_.size()); }

  const Eigen::MatrixXd& coords() const noexcept { return coords_; }
  const std::vector<Index>& offsets() const noexcept { return offsets_; }
  const std::vector<Index>& neighbors() const noexcept { return neighbors_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<Index>& reverse() const noexcept { return reverse_; }

  std::span<const Index> neighbors_of(Index i) const {
    return {neighbors_.data() + offsets_[i], neighbors_.data() + offsets_[i + 1]};
  }
  Index degree(Index i) const { return offsets_[i + 1] - offsets_[i]; }

  /// Directed-edge index of i -> j, or -1 if absent.
  Index edge_index(Index i, Index j) const;

  bool operator==(const WeightedGraph& other) const = default;

private:
  Eigen::MatrixXd coords_;
  std::vector<Index> offsets_;
  std::vector<Index> neighbors_;
  std::vector<double> weights_;
  std::vector<Index> reverse_;
};

/// Graph over the mesh 1-skeleton: one edge per pair of nodes sharing an element.
WeightedGraph mesh_to_graph(const Mesh& mesh,
                            const WeightFunction& weight = inverse_distance_weight);

/// Source and detector positions plus the (source, detector) measurement list.
struct ProbeLayout {
  Eigen::MatrixXd sources;    // one position per row
  Eigen::MatrixXd detectors;  // one position per row
  std::vector<std::pair<Index, Index>> measurements;

  Index num_measurements() const noexcept { return static_cast<Index>(measurements.size()); }
  /// Throws MeshError if any measurement index is out of range or the list is empty.
  void validate() const;
};

}  // namespace tvdot
