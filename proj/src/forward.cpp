#include "tvdot/forward.hpp"

#include "tvdot/fe_ops.hpp"

#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <random>

namespace tvdot {

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

Eigen::SparseMatrix<double> probe_weights(const Mesh& mesh, const Eigen::MatrixXd& positions,
                                          const char* kind) {
  std::vector<Eigen::Triplet<double>> trip;
  for (Index p = 0; p < positions.rows(); ++p) {
    if (positions.cols() != mesh.dim()) {
      throw ForwardError(std::string(kind) + " coordinates do not match mesh dimension");
    }
    std::pair<Index, Eigen::VectorXd> hit;
    try {
      hit = locate_point(mesh, positions.row(p).transpose());
    } catch (const MeshError&) {
      throw ForwardError(std::string(kind) + " " + std::to_string(p) + " lies outside the mesh");
    }
    for (Index k = 0; k <= mesh.dim(); ++k) {
      if (hit.second[k] != 0.0) trip.emplace_back(mesh.elements()(hit.first, k), p, hit.second[k]);
    }
  }
  Eigen::SparseMatrix<double> w(mesh.num_nodes(), positions.rows());
  w.setFromTriplets(trip.begin(), trip.end());
  return w;
}

struct Factorisation {
  Eigen::SparseMatrix<double> matrix;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;

  explicit Factorisation(Eigen::SparseMatrix<double> a) : matrix(std::move(a)) {
    solver.compute(matrix);
    if (solver.info() != Eigen::Success) throw ForwardError("diffusion system is singular");
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd x = solver.solve(rhs);
    // one step of iterative refinement if the direct solve falls short of 1e-10
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::MatrixXd r = rhs - matrix * x;
      bool ok = true;
      for (Index c = 0; c < rhs.cols(); ++c) {
        if (r.col(c).norm() > 1e-10 * rhs.col(c).norm()) ok = false;
      }
      if (ok) return x;
      x += solver.solve(r);
    }
    const Eigen::MatrixXd r = rhs - matrix * x;
    for (Index c = 0; c < rhs.cols(); ++c) {
      if (r.col(c).norm() > 1e-10 * rhs.col(c).norm()) {
        throw ForwardError("diffusion solve did not reach relative residual 1e-10");
      }
    }
    return x;
  }
};

}  // namespace

void OpticalProperties::validate(Index num_nodes) const {
  if (mua.size() != num_nodes || musp.size() != num_nodes) {
    throw ForwardError("optical property length does not match node count");
  }
  if (!(mua.array() > 0.0).all() || !(musp.array() > 0.0).all() || !mua.allFinite() ||
      !musp.allFinite()) {
    throw ForwardError("optical properties must be strictly positive");
  }
}

double robin_reflection_parameter(double n) {
  if (n <= 1.0) return 1.0;
  const double r = -1.4399 / (n * n) + 0.7099 / n + 0.6681 + 0.0636 * n;
  return (1.0 + r) / (1.0 - r);
}

DiffusionModel::DiffusionModel(const Mesh& mesh, const ProbeLayout& layout, ForwardOptions options)
    : mesh_(mesh), layout_(layout), options_(options) {
  layout_.validate();
  robin_coefficient_ = 1.0 / (2.0 * robin_reflection_parameter(options_.refractive_index));
  const int dim = mesh_.dim();
  measures_.resize(mesh_.num_elements());
  unit_stiffness_.reserve(static_cast<std::size_t>(mesh_.num_elements()));
  for (Index e = 0; e < mesh_.num_elements(); ++e) {
    const Eigen::MatrixXd vertices = mesh_.element_vertices(e);
    const Eigen::MatrixXd coef = basis_coefficients(vertices, e);
    const Eigen::MatrixXd grads = coef.leftCols(dim);
    measures_[e] = simplex_measure(vertices);
    unit_stiffness_.push_back(measures_[e] * grads * grads.transpose());
  }

  std::vector<Eigen::Triplet<double>> trip;
  const Index face_nodes = mesh_.boundary_faces().cols();
  const double face_scale = 1.0 / static_cast<double>(face_nodes * (face_nodes + 1));
  for (Index f = 0; f < mesh_.boundary_faces().rows(); ++f) {
    Eigen::MatrixXd verts(face_nodes, dim);
    for (Index k = 0; k < face_nodes; ++k) verts.row(k) = mesh_.nodes().row(mesh_.boundary_faces()(f, k));
    const double area = simplex_measure(verts);
    for (Index i = 0; i < face_nodes; ++i) {
      for (Index j = 0; j < face_nodes; ++j) {
        trip.emplace_back(mesh_.boundary_faces()(f, i), mesh_.boundary_faces()(f, j),
                          area * face_scale * (i == j ? 2.0 : 1.0));
      }
    }
  }
  boundary_mass_.resize(mesh_.num_nodes(), mesh_.num_nodes());
  boundary_mass_.setFromTriplets(trip.begin(), trip.end());

  source_weights_ = probe_weights(mesh_, layout_.sources, "source");
  detector_weights_ = probe_weights(mesh_, layout_.detectors, "detector");
}

Eigen::SparseMatrix<double> DiffusionModel::system_matrix(const OpticalProperties& props) const {
  props.validate(mesh_.num_nodes());
  const int dim = mesh_.dim();
  const Index corners = dim + 1;
  // integral of phi_i phi_j phi_k over a simplex = c0 (1 + d_ij + d_jk + d_ik + 2 d_ijk)
  const double c0_scale = factorial(dim) / factorial(dim + 3);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(mesh_.num_elements() * corners * corners));
  Eigen::VectorXd mua_local(corners);
  for (Index e = 0; e < mesh_.num_elements(); ++e) {
    double mua_mean = 0.0, musp_mean = 0.0;
    for (Index k = 0; k < corners; ++k) {
      const int node = mesh_.elements()(e, k);
      mua_local[k] = props.mua[node];
      mua_mean += props.mua[node];
      musp_mean += props.musp[node];
    }
    mua_mean /= static_cast<double>(corners);
    musp_mean /= static_cast<double>(corners);
    const double kappa = 1.0 / (3.0 * (mua_mean + musp_mean));
    const double c0 = c0_scale * measures_[e];
    const double sum = mua_local.sum();
    const Eigen::MatrixXd& ks = unit_stiffness_[static_cast<std::size_t>(e)];
    for (Index i = 0; i < corners; ++i) {
      for (Index j = 0; j < corners; ++j) {
        double mass = sum + mua_local[i] + mua_local[j];
        if (i == j) mass += sum + 2.0 * mua_local[i];
        trip.emplace_back(mesh_.elements()(e, i), mesh_.elements()(e, j), kappa * ks(i, j) + c0 * mass);
      }
    }
  }
  Eigen::SparseMatrix<double> a(mesh_.num_nodes(), mesh_.num_nodes());
  a.setFromTriplets(trip.begin(), trip.end());
  a += robin_coefficient_ * boundary_mass_;
  return a;
}

Eigen::MatrixXd DiffusionModel::source_fields(const OpticalProperties& props) const {
  const Factorisation fact(system_matrix(props));
  return fact.solve(Eigen::MatrixXd(source_weights_));
}

BoundaryData DiffusionModel::simulate(const OpticalProperties& props) const {
  const Eigen::MatrixXd fields = source_fields(props);
  const Eigen::MatrixXd detected = Eigen::MatrixXd(detector_weights_.transpose()) * fields;  // D x S
  BoundaryData out;
  out.values.resize(layout_.num_measurements());
  for (Index m = 0; m < layout_.num_measurements(); ++m) {
    const auto [s, d] = layout_.measurements[static_cast<std::size_t>(m)];
    const double amplitude = detected(d, s);
    if (!(amplitude > 0.0)) throw ForwardError("non-positive detected amplitude");
    out.values[m] = std::log(amplitude);
  }
  return out;
}

std::pair<BoundaryData, JacobianMatrix> DiffusionModel::simulate_with_jacobian(
    const OpticalProperties& props) const {
  const Factorisation fact(system_matrix(props));
  const Eigen::MatrixXd fields = fact.solve(Eigen::MatrixXd(source_weights_));
  const Eigen::MatrixXd adjoints = fact.solve(Eigen::MatrixXd(detector_weights_));
  const Eigen::MatrixXd detected = Eigen::MatrixXd(detector_weights_.transpose()) * fields;

  const int dim = mesh_.dim();
  const Index corners = dim + 1;
  const Index n_meas = layout_.num_measurements();
  const double c0_scale = factorial(dim) / factorial(dim + 3);

  // per-element kappa derivative d(kappa_T)/d(mua_k) = -3 kappa_T^2 / (dim+1)
  Eigen::VectorXd dkappa(mesh_.num_elements());
  for (Index e = 0; e < mesh_.num_elements(); ++e) {
    double total = 0.0;
    for (Index k = 0; k < corners; ++k) {
      const int node = mesh_.elements()(e, k);
      total += props.mua[node] + props.musp[node];
    }
    const double kappa = 1.0 / (3.0 * total / static_cast<double>(corners));
    dkappa[e] = -3.0 * kappa * kappa / static_cast<double>(corners);
  }

  BoundaryData data;
  data.values.resize(n_meas);
  JacobianMatrix jac;
  jac.values = Eigen::MatrixXd::Zero(n_meas, mesh_.num_nodes());
  std::array<double, 4> phi{}, psi{};
  for (Index m = 0; m < n_meas; ++m) {
    const auto [s, d] = layout_.measurements[static_cast<std::size_t>(m)];
    const double amplitude = detected(d, s);
    if (!(amplitude > 0.0)) throw ForwardError("non-positive detected amplitude");
    data.values[m] = std::log(amplitude);
    auto row = jac.values.row(m);
    for (Index e = 0; e < mesh_.num_elements(); ++e) {
      for (Index k = 0; k < corners; ++k) {
        const int node = mesh_.elements()(e, k);
        phi[k] = fields(node, s);
        psi[k] = adjoints(node, d);
      }
      const Eigen::MatrixXd& ks = unit_stiffness_[static_cast<std::size_t>(e)];
      double quad = 0.0, psi_sum = 0.0, phi_sum = 0.0, cross = 0.0;
      for (Index i = 0; i < corners; ++i) {
        for (Index j = 0; j < corners; ++j) quad += psi[i] * ks(i, j) * phi[j];
        psi_sum += psi[i];
        phi_sum += phi[i];
        cross += psi[i] * phi[i];
      }
      const double stiff = dkappa[e] * quad;
      const double c0 = c0_scale * measures_[e];
      const double base = psi_sum * phi_sum + cross;
      for (Index k = 0; k < corners; ++k) {
        const double mass = c0 * (base + phi[k] * psi_sum + psi[k] * phi_sum + 2.0 * psi[k] * phi[k]);
        row[mesh_.elements()(e, k)] -= (mass + stiff) / amplitude;
      }
    }
  }
  return {std::move(data), std::move(jac)};
}

BoundaryData solve_forward(const Mesh& mesh, const OpticalProperties& props,
                           const ProbeLayout& layout, const ForwardOptions& options) {
  return DiffusionModel(mesh, layout, options).simulate(props);
}

JacobianMatrix compute_jacobian(const Mesh& mesh, const OpticalProperties& props,
                                const ProbeLayout& layout, const ForwardOptions& options) {
  return DiffusionModel(mesh, layout, options).simulate_with_jacobian(props).second;
}

BoundaryData add_noise(const BoundaryData& data, double fraction, std::uint64_t seed,
                       NoiseReport* report) {
  if (fraction < 0.0) throw std::invalid_argument("noise fraction must be non-negative");
  if (fraction == 0.0) return data;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  BoundaryData out;
  out.values.resize(data.size());
  int resampled = 0;
  for (Index m = 0; m < data.size(); ++m) {
    double factor = 1.0 + fraction * gauss(rng);
    int tries = 0;
    while (factor <= 0.0) {
      if (++tries > 100) throw ForwardError("noise model produced non-positive amplitudes");
      ++resampled;
      factor = 1.0 + fraction * gauss(rng);
    }
    out.values[m] = data.values[m] + std::log(factor);
  }
  if (report) report->resampled = resampled;
  return out;
}

}  // namespace tvdot
