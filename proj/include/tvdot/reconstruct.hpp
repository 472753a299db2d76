#pragma once

#include "tvdot/fe_ops.hpp"
#include "tvdot/forward.hpp"
#include "tvdot/inner_solvers.hpp"
#include "tvdot/mesh.hpp"

#include <Eigen/Core>

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tvdot {

enum class SolverKind { Tikhonov, AFetv, IFetv, AGtv, IGtv };

/// "Tikhonov", "A-FETV", "I-FETV", "A-GTV", "I-GTV".
std::string to_string(SolverKind kind);
/// Case-insensitive inverse of to_string; throws std::invalid_argument.
SolverKind parse_solver_kind(const std::string& name);

struct OuterConfig {
  int outer_loop = 40;
  double eps2 = 1e-4;
  SolverKind solver_kind = SolverKind::IGtv;
  AdmmConfig admm;        // admm.lambda doubles as the Tikhonov weight
  OpticalProperties mu0;  // initial mua; musp is held fixed
  double mua_floor = 1e-6;
  ForwardOptions forward;

  void validate(Index num_nodes) const;
};

/// Human-readable key/value echo of every setting that affects a run.
std::vector<std::pair<std::string, std::string>> config_echo(const OuterConfig& config);

class ReconstructionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class OuterStop { MaxIterations, NoImprovement };

struct StageTimings {
  double forward_seconds = 0.0;
  double inner_seconds = 0.0;
};

struct ReconResult {
  Eigen::VectorXd mua;                // final mu^k
  double initial_residual = 0.0;      // ||F(mu^0) - Phi^M||^2
  std::vector<double> residuals;      // ||F(mu^k) - Phi^M||^2, k = 1..iterations
  std::vector<Eigen::VectorXd> steps; // applied increments (after clamping)
  std::vector<AdmmTrace> inner_traces;
  OuterStop stop = OuterStop::MaxIterations;
  int clamped = 0;                    // total nodes raised to the mua floor
  StageTimings timings;
  std::vector<std::pair<std::string, std::string>> config;

  int iterations() const noexcept { return static_cast<int>(residuals.size()); }
};

/// Mesh-derived regularisation operators shared by every solver kind.
class InverseOperators {
public:
  explicit InverseOperators(const Mesh& mesh);

  const GradientMatrices<double>& gradients() const noexcept { return gradients_; }
  const WeightedGraph& graph() const noexcept { return *graph_; }
  /// Splitting for a TV kind; throws for Tikhonov.
  const Splitting& splitting(SolverKind kind) const;

  /// One linearised step: dmu for the given kind.
  AdmmResult solve(SolverKind kind, const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                   const AdmmConfig& config) const;
  /// Regulariser value R(dmu) for the kind (||dmu||_2 for Tikhonov).
  double regularizer(SolverKind kind, const Eigen::VectorXd& dmu) const;

private:
  GradientMatrices<double> gradients_;
  std::unique_ptr<WeightedGraph> graph_;
  std::vector<Splitting> splittings_;  // A-FETV, I-FETV, A-GTV, I-GTV
};

/// Linearised Gauss-Newton outer loop.
ReconResult reconstruct(const Mesh& mesh, const ProbeLayout& layout, const BoundaryData& measured,
                        const OuterConfig& config);

/// Same, reusing a prepared model and operators.
ReconResult reconstruct(const DiffusionModel& model, const InverseOperators& ops,
                        const BoundaryData& measured, const OuterConfig& config);

struct CornerResult {
  Index index = -1;
  std::vector<double> curvature;  // signed; first and last entries are 0
  bool degenerate = false;
};

/// Discrete three-point (Menger) curvature of the polyline (x_i, y_i) and the
/// interior point of maximum positive curvature, ties to the larger index.
/// Collinear or nowhere-convex curves fall back to the median index.
CornerResult l_curve_corner(const std::vector<double>& x, const std::vector<double>& y);

struct LCurveResult {
  double lambda = 0.0;
  Index index = -1;
  std::vector<double> lambdas;
  std::vector<double> residual_norms;     // ||J dmu - dphi||_2
  std::vector<double> regularizer_values; // R(dmu)
  std::vector<double> curvature;
  bool warning = false;
  std::string message;
};

/// Single-linearisation sweep over `lambdas` (>= 3, positive, increasing).
/// When config.admm.theta is unset, theta follows each lambda.
LCurveResult l_curve_select(const Mesh& mesh, const ProbeLayout& layout, const BoundaryData& measured,
                            const OuterConfig& config, const std::vector<double>& lambdas);

LCurveResult l_curve_select(const DiffusionModel& model, const InverseOperators& ops,
                            const BoundaryData& measured, const OuterConfig& config,
                            const std::vector<double>& lambdas);

}  // namespace tvdot
