#pragma once

#include "tvdot/mesh.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvdot {

class SingularElementError : public MeshError {
public:
  using MeshError::MeshError;
};

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowSparse = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

/// Coefficients of the linear nodal basis functions of one simplex.
///
/// `vertices` holds dim+1 vertex coordinates, one per row. Row i of the result
/// is (a_i, b_i[, d_i], c_i) with phi_i(x) = a_i x + b_i y [+ d_i z] + c_i and
/// phi_i(v_k) = delta_ik. Triangles use the closed form with a signed area;
/// tetrahedra invert the 4x4 nodal interpolation system.
template <typename Scalar = double, typename Derived>
MatrixX<Scalar> basis_coefficients(const Eigen::MatrixBase<Derived>& vertices, Index elem = -1) {
  const Index dim = vertices.cols();
  if (vertices.rows() != dim + 1 || (dim != 2 && dim != 3)) {
    throw std::invalid_argument("basis_coefficients expects dim+1 vertices in 2D or 3D");
  }
  const auto singular = [elem] {
    return SingularElementError(
        elem >= 0 ? "singular element " + std::to_string(elem) : std::string("singular element"),
        elem);
  };
  MatrixX<Scalar> coef(dim + 1, dim + 1);
  if (dim == 2) {
    const Scalar x1 = vertices(0, 0), y1 = vertices(0, 1);
    const Scalar x2 = vertices(1, 0), y2 = vertices(1, 1);
    const Scalar x3 = vertices(2, 0), y3 = vertices(2, 1);
    const Scalar twice_area = x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2);
    const Scalar scale = std::abs(x2 - x1) + std::abs(x3 - x1) + std::abs(y2 - y1) + std::abs(y3 - y1);
    if (!(std::abs(twice_area) > Scalar(1e-14) * scale * scale)) throw singular();
    coef << y2 - y3, x3 - x2, x2 * y3 - x3 * y2,
            y3 - y1, x1 - x3, x3 * y1 - x1 * y3,
            y1 - y2, x2 - x1, x1 * y2 - x2 * y1;
    coef /= twice_area;
    return coef;
  }
  MatrixX<Scalar> interp(4, 4);
  interp.leftCols(3) = vertices.template cast<Scalar>();
  interp.col(3).setOnes();
  Eigen::FullPivLU<MatrixX<Scalar>> lu(interp);
  if (!lu.isInvertible()) throw singular();
  const Scalar det = lu.determinant();
  const Scalar scale = (interp.leftCols(3).rowwise() - interp.leftCols(3).row(0)).cwiseAbs().maxCoeff();
  if (!(std::abs(det) > Scalar(1e-14) * scale * scale * scale)) throw singular();
  // columns of the inverse are the basis coefficient vectors
  coef = lu.inverse().transpose();
  return coef;
}

/// Per-direction finite-element derivative matrices, each M x N.
///
/// Row i of direction d holds A_{T_i} times the d-th gradient coefficient of
/// each vertex basis function of element i, so that |(D_d mu)_i| is the
/// integral of |d_d U| over T_i.
template <typename Scalar = double>
struct GradientMatrices {
  std::vector<RowSparse<Scalar>> directions;
  VectorX<Scalar> element_measures;

  int dim() const noexcept { return static_cast<int>(directions.size()); }
  Index rows() const noexcept { return directions.empty() ? 0 : directions.front().rows(); }
  Index cols() const noexcept { return directions.empty() ? 0 : directions.front().cols(); }
  const RowSparse<Scalar>& operator[](int d) const { return directions[static_cast<std::size_t>(d)]; }

  /// [D_x; D_y (; D_z)] stacked into a (dim*M) x N matrix.
  RowSparse<Scalar> stacked() const {
    std::vector<Eigen::Triplet<Scalar>> trip;
    const Index m = rows();
    for (int d = 0; d < dim(); ++d) {
      const auto& mat = directions[static_cast<std::size_t>(d)];
      for (Index r = 0; r < mat.outerSize(); ++r) {
        for (typename RowSparse<Scalar>::InnerIterator it(mat, r); it; ++it) {
          trip.emplace_back(d * m + r, it.col(), it.value());
        }
      }
    }
    RowSparse<Scalar> out(dim() * m, cols());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
  }
};

template <typename Scalar = double>
GradientMatrices<Scalar> assemble_gradient_matrices(const Mesh& mesh) {
  const int dim = mesh.dim();
  const Index m = mesh.num_elements();
  const Index n = mesh.num_nodes();
  GradientMatrices<Scalar> g;
  g.element_measures.resize(m);
  std::vector<std::vector<Eigen::Triplet<Scalar>>> trip(static_cast<std::size_t>(dim));
  for (auto& t : trip) t.reserve(static_cast<std::size_t>(m * (dim + 1)));
  for (Index e = 0; e < m; ++e) {
    const Eigen::MatrixXd vertices = mesh.element_vertices(e);
    const MatrixX<Scalar> coef = basis_coefficients<Scalar>(vertices, e);
    const Scalar measure = static_cast<Scalar>(simplex_measure(vertices));
    g.element_measures[e] = measure;
    for (int d = 0; d < dim; ++d) {
      for (int k = 0; k <= dim; ++k) {
        trip[static_cast<std::size_t>(d)].emplace_back(e, mesh.elements()(e, k), measure * coef(k, d));
      }
    }
  }
  for (int d = 0; d < dim; ++d) {
    RowSparse<Scalar> mat(m, n);
    mat.setFromTriplets(trip[static_cast<std::size_t>(d)].begin(), trip[static_cast<std::size_t>(d)].end());
    g.directions.push_back(std::move(mat));
  }
  return g;
}

namespace detail {
template <typename Scalar, typename Derived>
void check_field(const GradientMatrices<Scalar>& g, const Eigen::MatrixBase<Derived>& mu) {
  if (mu.size() != g.cols()) {
    throw std::invalid_argument("field length " + std::to_string(mu.size()) +
                                " does not match node count " + std::to_string(g.cols()));
  }
}
}  // namespace detail

/// ||D_x mu||_1 + ||D_y mu||_1 (+ ||D_z mu||_1).
template <typename Scalar, typename Derived>
Scalar fe_tv_aniso(const GradientMatrices<Scalar>& g, const Eigen::MatrixBase<Derived>& mu) {
  detail::check_field(g, mu);
  Scalar total(0);
  for (const auto& d : g.directions) total += (d * mu.derived()).cwiseAbs().sum();
  return total;
}

/// sum_i sqrt(sum_d (D_d mu)_i^2).
template <typename Scalar, typename Derived>
Scalar fe_tv_iso(const GradientMatrices<Scalar>& g, const Eigen::MatrixBase<Derived>& mu) {
  detail::check_field(g, mu);
  VectorX<Scalar> sq = VectorX<Scalar>::Zero(g.rows());
  for (const auto& d : g.directions) sq += (d * mu.derived()).cwiseAbs2();
  return sq.cwiseSqrt().sum();
}

}  // namespace tvdot
