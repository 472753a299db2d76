#pragma once

#include "tvdot/fe_ops.hpp"
#include "tvdot/mesh.hpp"

#include <Eigen/SparseCore>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvdot {

// Edge fields are plain vectors with one entry per directed edge, in the
// graph's CSR order (see WeightedGraph).

namespace detail {
inline void check_nodal(const WeightedGraph& g, Index size) {
  if (size != g.num_vertices()) {
    throw std::invalid_argument("nodal field length " + std::to_string(size) +
                                " does not match vertex count " + std::to_string(g.num_vertices()));
  }
}
inline void check_edge(const WeightedGraph& g, Index size) {
  if (size != g.num_directed_edges()) {
    throw std::invalid_argument("edge field length " + std::to_string(size) +
                                " does not match directed edge count " +
                                std::to_string(g.num_directed_edges()));
  }
}
}  // namespace detail

/// (grad_w mu)_ij = (mu_j - mu_i) sqrt(w_ij) on every directed edge.
template <typename Derived>
VectorX<typename Derived::Scalar> nonlocal_gradient(const WeightedGraph& g,
                                                    const Eigen::MatrixBase<Derived>& mu) {
  using Scalar = typename Derived::Scalar;
  detail::check_nodal(g, mu.size());
  VectorX<Scalar> out(g.num_directed_edges());
  for (Index i = 0; i < g.num_vertices(); ++i) {
    for (Index k = g.offsets()[i]; k < g.offsets()[i + 1]; ++k) {
      const Index j = g.neighbors()[k];
      out[k] = (mu[j] - mu[i]) * std::sqrt(static_cast<Scalar>(g.weights()[k]));
    }
  }
  return out;
}

/// (div_w nu)_i = sum_{j in N_i} (nu_ij - nu_ji) sqrt(w_ij).
template <typename Derived>
VectorX<typename Derived::Scalar> nonlocal_divergence(const WeightedGraph& g,
                                                      const Eigen::MatrixBase<Derived>& nu) {
  using Scalar = typename Derived::Scalar;
  detail::check_edge(g, nu.size());
  VectorX<Scalar> out = VectorX<Scalar>::Zero(g.num_vertices());
  for (Index i = 0; i < g.num_vertices(); ++i) {
    Scalar acc(0);
    for (Index k = g.offsets()[i]; k < g.offsets()[i + 1]; ++k) {
      acc += (nu[k] - nu[g.reverse()[k]]) * std::sqrt(static_cast<Scalar>(g.weights()[k]));
    }
    out[i] = acc;
  }
  return out;
}

/// (Delta_w mu)_i = sum_{j in N_i} (mu_j - mu_i) w_ij.
template <typename Derived>
VectorX<typename Derived::Scalar> graph_laplacian_apply(const WeightedGraph& g,
                                                        const Eigen::MatrixBase<Derived>& mu) {
  using Scalar = typename Derived::Scalar;
  detail::check_nodal(g, mu.size());
  VectorX<Scalar> out(g.num_vertices());
  for (Index i = 0; i < g.num_vertices(); ++i) {
    Scalar acc(0);
    for (Index k = g.offsets()[i]; k < g.offsets()[i + 1]; ++k) {
      acc += (mu[g.neighbors()[k]] - mu[i]) * static_cast<Scalar>(g.weights()[k]);
    }
    out[i] = acc;
  }
  return out;
}

/// L with L_ii = -sum_j w_ij and L_ij = w_ij; symmetric, rows sum to zero.
template <typename Scalar = double>
Eigen::SparseMatrix<Scalar> graph_laplacian_matrix(const WeightedGraph& g) {
  std::vector<Eigen::Triplet<Scalar>> trip;
  trip.reserve(static_cast<std::size_t>(g.num_directed_edges() + g.num_vertices()));
  for (Index i = 0; i < g.num_vertices(); ++i) {
    Scalar diag(0);
    for (Index k = g.offsets()[i]; k < g.offsets()[i + 1]; ++k) {
      const Scalar w = static_cast<Scalar>(g.weights()[k]);
      trip.emplace_back(i, g.neighbors()[k], w);
      diag -= w;
    }
    trip.emplace_back(i, i, diag);
  }
  Eigen::SparseMatrix<Scalar> l(g.num_vertices(), g.num_vertices());
  l.setFromTriplets(trip.begin(), trip.end());
  return l;
}

/// The nonlocal gradient as a sparse (directed edges) x (vertices) matrix.
template <typename Scalar = double>
RowSparse<Scalar> nonlocal_gradient_matrix(const WeightedGraph& g) {
  std::vector<Eigen::Triplet<Scalar>> trip;
  trip.reserve(static_cast<std::size_t>(2 * g.num_directed_edges()));
  for (Index i = 0; i < g.num_vertices(); ++i) {
    for (Index k = g.offsets()[i]; k < g.offsets()[i + 1]; ++k) {
      const Scalar s = std::sqrt(static_cast<Scalar>(g.weights()[k]));
      trip.emplace_back(k, g.neighbors()[k], s);
      trip.emplace_back(k, i, -s);
    }
  }
  RowSparse<Scalar> out(g.num_directed_edges(), g.num_vertices());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

/// sum_i sum_{j in N_i} |(mu_j - mu_i) sqrt(w_ij)|; each undirected edge counts twice.
template <typename Derived>
typename Derived::Scalar graph_tv_aniso(const WeightedGraph& g, const Eigen::MatrixBase<Derived>& mu) {
  return nonlocal_gradient(g, mu).cwiseAbs().sum();
}

/// sum_i sqrt(sum_{j in N_i} (mu_j - mu_i)^2 w_ij).
template <typename Derived>
typename Derived::Scalar graph_tv_iso(const WeightedGraph& g, const Eigen::MatrixBase<Derived>& mu) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> grad = nonlocal_gradient(g, mu);
  Scalar total(0);
  for (Index i = 0; i < g.num_vertices(); ++i) {
    const Index first = g.offsets()[i];
    total += grad.segment(first, g.offsets()[i + 1] - first).norm();
  }
  return total;
}

}  // namespace tvdot
