#pragma once

#include "tvdot/fe_ops.hpp"
#include "tvdot/graph_ops.hpp"
#include "tvdot/shrinkage.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace tvdot {

/// Backtracking (Armijo) parameters for the gradient-descent mu-step.
struct LineSearchConfig {
  /// First trial step of each descent run; 0 selects the exact Cauchy step.
  /// Later iterations start from the Barzilai-Borwein step.
  double initial_step = 0.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 60;
};

struct AdmmConfig {
  double lambda = 0.0;
  /// Penalty weight. Unset means theta = theta_ratio * lambda (or 1 when lambda is 0).
  std::optional<double> theta;
  double theta_ratio = 1.0;
  int inner_loop = 100;
  double eps1 = 1e-6;
  LineSearchConfig line_search;
  int gd_iters = 10;
  /// mu-step stops once ||grad|| <= gd_tolerance * ||linear term||.
  double gd_tolerance = 1e-10;

  double effective_theta() const {
    return theta.value_or(lambda > 0.0 ? theta_ratio * lambda : 1.0);
  }
  /// Throws std::invalid_argument on theta <= 0, lambda < 0, inner_loop < 1 or eps1 <= 0.
  void validate() const;
};

enum class StopReason { MaxIterations, RelativeChange };

/// Per-iteration diagnostics of one ADMM run.
struct AdmmTrace {
  std::vector<double> objective;            // 1/2||J dmu - dphi||^2 + lambda R(dmu)
  std::vector<double> augmented;            // augmented Lagrangian at (dmu^n, nu^n, b^n)
  std::vector<double> relative_change;      // ||dmu^n - dmu^{n-1}||_1 / ||dmu^{n-1}||_1
  std::vector<double> primal_residual;      // ||B dmu^n - nu^n||_2
  std::vector<double> dual_residual;        // theta ||B^T (nu^n - nu^{n-1})||_2
  std::vector<int> gd_iterations;
  StopReason stop = StopReason::MaxIterations;
  bool line_search_failed = false;

  int iterations() const noexcept { return static_cast<int>(objective.size()); }
};

struct AdmmResult {
  Eigen::VectorXd delta_mu;
  AdmmTrace trace;
};

/// Quadratic mu-subproblem
///   q(x) = 1/2 ||J x - dphi||^2 + theta/2 x^T P x - theta x^T h,
/// where P is a sparse positive semidefinite penalty (D^T D for finite
/// elements, -2L for graphs) and h the matching linear term.
struct MuSubproblem {
  const Eigen::MatrixXd& jacobian;
  const Eigen::VectorXd& data;
  const Eigen::SparseMatrix<double>& penalty;
  Eigen::VectorXd linear;  // h
  double theta = 0.0;

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
};

struct MuSubproblemResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool line_search_failed = false;
};

/// Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking,
/// warm-started at `x0`. Accepted steps never increase q.
MuSubproblemResult solve_mu_subproblem(const MuSubproblem& problem, const Eigen::VectorXd& x0,
                                       const AdmmConfig& config);

/// Linear operator B, its penalty P = B^T B and the shrinkage grouping that
/// together define one TV splitting.
struct Splitting {
  RowSparse<double> op;
  Eigen::SparseMatrix<double> penalty;
  /// Contiguous groups of rows of `op` shrunk jointly; empty = componentwise.
  std::vector<Index> group_offsets;
  /// Graph splittings build the mu-step right-hand side from the nonlocal divergence.
  const WeightedGraph* graph = nullptr;

  double regularizer(const Eigen::VectorXd& split) const;
};

Splitting fe_splitting(const GradientMatrices<double>& g, bool isotropic);
Splitting graph_splitting(const WeightedGraph& g, bool isotropic);

/// Generic ADMM loop shared by the four TV models (nu^0 = b^0 = 0, dmu^0 = 0).
AdmmResult solve_admm(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                      const Splitting& splitting, const AdmmConfig& config);

AdmmResult solve_a_fetv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                        const GradientMatrices<double>& g, const AdmmConfig& config);
AdmmResult solve_i_fetv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                        const GradientMatrices<double>& g, const AdmmConfig& config);
AdmmResult solve_a_gtv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                       const WeightedGraph& g, const AdmmConfig& config);
AdmmResult solve_i_gtv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                       const WeightedGraph& g, const AdmmConfig& config);

/// (J^T J + lambda I) dmu = J^T dphi, solved in whichever of the primal
/// (N x N) or dual (S x S) forms is smaller.
Eigen::VectorXd solve_tikhonov(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                               double lambda);

/// Writes one row per ADMM iteration.
void write_trace_csv(const AdmmTrace& trace, std::ostream& out, bool header = true,
                     const std::string& prefix = "");

}  // namespace tvdot
