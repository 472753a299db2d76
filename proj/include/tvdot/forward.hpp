#pragma once

#include "tvdot/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tvdot {

class ForwardError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Nodal absorption and reduced scattering coefficients (1/mm).
struct OpticalProperties {
  Eigen::VectorXd mua;
  Eigen::VectorXd musp;

  /// Throws ForwardError unless both fields have `num_nodes` strictly positive entries.
  void validate(Index num_nodes) const;
};

/// Log-amplitude (natural log of CW intensity) per measurement, in layout order.
struct BoundaryData {
  Eigen::VectorXd values;

  Index size() const noexcept { return values.size(); }
};

/// Dense S x N sensitivity d(log amplitude)/d(mua) in mm.
struct JacobianMatrix {
  Eigen::MatrixXd values;
};

struct ForwardOptions {
  /// Tissue refractive index; sets the Robin coefficient through the
  /// Groenhuis effective reflection fit (air outside).
  double refractive_index = 1.33;
};

/// Robin boundary parameter A = (1 + R_eff) / (1 - R_eff).
double robin_reflection_parameter(double refractive_index);

/// CW diffusion model -div(kappa grad phi) + mua phi = q with
/// kappa = 1/(3(mua + musp)) and phi + 2 A kappa d_n phi = 0 on the boundary,
/// discretised with linear Galerkin finite elements.
///
/// Point sources and detectors are represented by the barycentric weights of
/// the element that contains them, so a co-located source/detector pair is
/// exactly reciprocal. Geometry-dependent data is precomputed once; each call
/// assembles and factorises the system for the given properties.
class DiffusionModel {
public:
  DiffusionModel(const Mesh& mesh, const ProbeLayout& layout, ForwardOptions options = {});

  const Mesh& mesh() const noexcept { return mesh_; }
  const ProbeLayout& layout() const noexcept { return layout_; }

  /// Nodal photon density for every source, one column per source.
  Eigen::MatrixXd source_fields(const OpticalProperties& props) const;

  BoundaryData simulate(const OpticalProperties& props) const;

  /// Forward data and the adjoint-method Jacobian from one factorisation.
  std::pair<BoundaryData, JacobianMatrix> simulate_with_jacobian(const OpticalProperties& props) const;

  /// Assembled system matrix; exposed for tests.
  Eigen::SparseMatrix<double> system_matrix(const OpticalProperties& props) const;

private:
  Mesh mesh_;
  ProbeLayout layout_;
  ForwardOptions options_;
  double robin_coefficient_;
  Eigen::VectorXd measures_;
  std::vector<Eigen::MatrixXd> unit_stiffness_;  // |T| grad(phi_i).grad(phi_j)
  Eigen::SparseMatrix<double> boundary_mass_;
  Eigen::SparseMatrix<double> source_weights_;    // N x S
  Eigen::SparseMatrix<double> detector_weights_;  // N x D
};

BoundaryData solve_forward(const Mesh& mesh, const OpticalProperties& props,
                           const ProbeLayout& layout, const ForwardOptions& options = {});

JacobianMatrix compute_jacobian(const Mesh& mesh, const OpticalProperties& props,
                                const ProbeLayout& layout, const ForwardOptions& options = {});

struct NoiseReport {
  int resampled = 0;
};

/// Perturbs each amplitude A = exp(phi) to A (1 + fraction * g), g ~ N(0, 1),
/// and returns the log of the perturbed amplitude. Non-positive draws are
/// redrawn (bounded) and counted in `report`. Deterministic per seed.
BoundaryData add_noise(const BoundaryData& data, double fraction, std::uint64_t seed,
                       NoiseReport* report = nullptr);

}  // namespace tvdot
