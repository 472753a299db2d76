#include "tvdot/inner_solvers.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace tvdot {

void AdmmConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (!(effective_theta() > 0.0)) throw std::invalid_argument("theta must be positive");
  if (inner_loop < 1) throw std::invalid_argument("inner_loop must be at least 1");
  if (!(eps1 > 0.0)) throw std::invalid_argument("eps1 must be positive");
  if (gd_iters < 1) throw std::invalid_argument("gd_iters must be at least 1");
  if (!(line_search.shrink > 0.0 && line_search.shrink < 1.0)) {
    throw std::invalid_argument("line search shrink factor must lie in (0, 1)");
  }
}

double MuSubproblem::value(const Eigen::VectorXd& x) const {
  return 0.5 * (jacobian * x - data).squaredNorm() + 0.5 * theta * x.dot(penalty * x) -
         theta * x.dot(linear);
}

Eigen::VectorXd MuSubproblem::gradient(const Eigen::VectorXd& x) const {
  return jacobian.transpose() * (jacobian * x - data) + theta * (penalty * x - linear);
}

MuSubproblemResult solve_mu_subproblem(const MuSubproblem& problem, const Eigen::VectorXd& x0,
                                       const AdmmConfig& config) {
  const auto& jac = problem.jacobian;
  if (jac.rows() != problem.data.size() || jac.cols() != x0.size() ||
      problem.penalty.rows() != x0.size() || problem.linear.size() != x0.size()) {
    throw std::invalid_argument("mu-subproblem shape mismatch");
  }
  const auto& ls = config.line_search;
  const double theta = problem.theta;
  const auto hessian_apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return jac.transpose() * (jac * v) + theta * (problem.penalty * v);
  };

  MuSubproblemResult out;
  out.x = x0;
  Eigen::VectorXd grad = problem.gradient(out.x);
  const double scale =
      (jac.transpose() * problem.data + theta * problem.linear).norm();
  const double target = config.gd_tolerance * (scale > 0.0 ? scale : 1.0);
  double next_step = ls.initial_step;
  for (int it = 0; it < config.gd_iters; ++it) {
    const double gg = grad.squaredNorm();
    if (std::sqrt(gg) <= target) break;
    const Eigen::VectorXd hg = hessian_apply(grad);
    const double curvature = grad.dot(hg);
    if (!(curvature > 0.0)) {
      out.line_search_failed = true;
      break;
    }
    const double cauchy = gg / curvature;
    double step = next_step > 0.0 ? next_step : cauchy;
    // q(x - a g) - q(x) = -a g.g + a^2/2 g.Hg for the quadratic objective
    int backtracks = 0;
    while (-step * gg + 0.5 * step * step * curvature > -ls.sufficient_decrease * step * gg) {
      step *= ls.shrink;
      if (++backtracks > ls.max_backtracks || step < std::numeric_limits<double>::min()) {
        out.line_search_failed = true;
        break;
      }
    }
    if (out.line_search_failed) break;
    out.x -= step * grad;
    // refresh the gradient exactly now and then to stop recursion drift
    if ((it + 1) % 25 == 0) {
      grad = problem.gradient(out.x);
    } else {
      grad -= step * hg;
    }
    ++out.iterations;
    // Barzilai-Borwein: s^T s / s^T y with s = -step g, y = -step H g
    next_step = cauchy;
  }
  out.gradient_norm = problem.gradient(out.x).norm();
  return out;
}

double Splitting::regularizer(const Eigen::VectorXd& split) const {
  if (group_offsets.empty()) return split.cwiseAbs().sum();
  double total = 0.0;
  for (std::size_t g = 0; g + 1 < group_offsets.size(); ++g) {
    total += split.segment(group_offsets[g], group_offsets[g + 1] - group_offsets[g]).norm();
  }
  return total;
}

Splitting fe_splitting(const GradientMatrices<double>& g, bool isotropic) {
  const int dim = g.dim();
  const Index m = g.rows();
  // rows interleaved per element: row e*dim + d holds (D_d)_e
  std::vector<Eigen::Triplet<double>> trip;
  for (int d = 0; d < dim; ++d) {
    const auto& mat = g[d];
    for (Index r = 0; r < mat.outerSize(); ++r) {
      for (RowSparse<double>::InnerIterator it(mat, r); it; ++it) {
        trip.emplace_back(r * dim + d, it.col(), it.value());
      }
    }
  }
  Splitting s;
  s.op.resize(dim * m, g.cols());
  s.op.setFromTriplets(trip.begin(), trip.end());
  s.penalty = Eigen::SparseMatrix<double>(s.op.transpose() * s.op);
  if (isotropic) {
    s.group_offsets.resize(static_cast<std::size_t>(m) + 1);
    for (Index e = 0; e <= m; ++e) s.group_offsets[static_cast<std::size_t>(e)] = e * dim;
  }
  return s;
}

Splitting graph_splitting(const WeightedGraph& g, bool isotropic) {
  Splitting s;
  s.op = nonlocal_gradient_matrix<double>(g);
  // grad_w^T grad_w = -div_w grad_w = -2 L
  s.penalty = -2.0 * graph_laplacian_matrix<double>(g);
  if (isotropic) {
    s.group_offsets.assign(g.offsets().begin(), g.offsets().end());
  }
  s.graph = &g;
  return s;
}

namespace {

double l1_norm(const Eigen::VectorXd& v) { return v.cwiseAbs().sum(); }

}  // namespace

AdmmResult solve_admm(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                      const Splitting& splitting, const AdmmConfig& config) {
  config.validate();
  const Index n = jacobian.cols();
  if (jacobian.rows() != dphi.size()) throw std::invalid_argument("J rows must match data length");
  if (splitting.op.cols() != n) throw std::invalid_argument("splitting operator does not match J");
  const double lambda = config.lambda;
  const double theta = config.effective_theta();
  const double threshold = lambda / theta;
  const Index k = splitting.op.rows();

  AdmmResult result;
  auto& trace = result.trace;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd nu_next(k);

  for (int iter = 1; iter <= config.inner_loop; ++iter) {
    const Eigen::VectorXd target = nu - b;
    Eigen::VectorXd linear = splitting.graph ? Eigen::VectorXd(-nonlocal_divergence(*splitting.graph, target))
                                             : Eigen::VectorXd(splitting.op.transpose() * target);
    const MuSubproblem sub{jacobian, dphi, splitting.penalty, std::move(linear), theta};
    MuSubproblemResult step = solve_mu_subproblem(sub, x, config);
    trace.line_search_failed = trace.line_search_failed || step.line_search_failed;
    trace.gd_iterations.push_back(step.iterations);

    const Eigen::VectorXd bx = splitting.op * step.x;
    const Eigen::VectorXd v = bx + b;
    if (splitting.group_offsets.empty()) {
      nu_next = shrink_componentwise(v, threshold);
    } else {
      const auto& go = splitting.group_offsets;
      for (std::size_t g = 0; g + 1 < go.size(); ++g) {
        const Index len = go[g + 1] - go[g];
        if (len == 0) continue;
        nu_next.segment(go[g], len) = shrink_coupled(v.segment(go[g], len), threshold);
      }
    }
    b = v - nu_next;

    const double misfit = 0.5 * (jacobian * step.x - dphi).squaredNorm();
    trace.objective.push_back(misfit + lambda * splitting.regularizer(bx));
    trace.augmented.push_back(misfit + lambda * splitting.regularizer(nu_next) +
                              0.5 * theta * (bx - nu_next + b).squaredNorm() -
                              0.5 * theta * b.squaredNorm());
    trace.primal_residual.push_back((bx - nu_next).norm());
    trace.dual_residual.push_back(theta * (splitting.op.transpose() * (nu_next - nu)).norm());

    const double prev = l1_norm(x);
    const double change = l1_norm(step.x - x);
    double rel;
    if (prev == 0.0) {
      rel = change == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      rel = change / prev;
    }
    trace.relative_change.push_back(rel);
    x = std::move(step.x);
    nu = nu_next;
    if (!x.allFinite()) throw std::runtime_error("ADMM produced a non-finite iterate");
    if (rel <= config.eps1) {
      trace.stop = StopReason::RelativeChange;
      break;
    }
  }
  result.delta_mu = std::move(x);
  return result;
}

AdmmResult solve_a_fetv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                        const GradientMatrices<double>& g, const AdmmConfig& config) {
  return solve_admm(jacobian, dphi, fe_splitting(g, false), config);
}

AdmmResult solve_i_fetv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                        const GradientMatrices<double>& g, const AdmmConfig& config) {
  return solve_admm(jacobian, dphi, fe_splitting(g, true), config);
}

AdmmResult solve_a_gtv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                       const WeightedGraph& g, const AdmmConfig& config) {
  return solve_admm(jacobian, dphi, graph_splitting(g, false), config);
}

AdmmResult solve_i_gtv(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                       const WeightedGraph& g, const AdmmConfig& config) {
  return solve_admm(jacobian, dphi, graph_splitting(g, true), config);
}

Eigen::VectorXd solve_tikhonov(const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& dphi,
                               double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (jacobian.rows() != dphi.size()) throw std::invalid_argument("J rows must match data length");
  const Index s = jacobian.rows();
  const Index n = jacobian.cols();
  const Eigen::VectorXd rhs = jacobian.transpose() * dphi;
  const auto normal_apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return jacobian.transpose() * (jacobian * x) + lambda * x;
  };
  Eigen::VectorXd x;
  if (s < n) {
    Eigen::MatrixXd gram = jacobian * jacobian.transpose();
    gram.diagonal().array() += lambda;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    x = jacobian.transpose() * ldlt.solve(dphi);
  } else {
    Eigen::MatrixXd normal = jacobian.transpose() * jacobian;
    normal.diagonal().array() += lambda;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    x = ldlt.solve(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      const Eigen::VectorXd r = rhs - normal_apply(x);
      if (r.norm() <= 1e-8 * rhs.norm()) break;
      x += ldlt.solve(r);
    }
  }
  if (!x.allFinite()) throw std::runtime_error("Tikhonov solve produced non-finite values");
  return x;
}

void write_trace_csv(const AdmmTrace& trace, std::ostream& out, bool header,
                     const std::string& prefix) {
  if (header) {
    out << (prefix.empty() ? "" : "outer,")
        << "iteration,objective,augmented,relative_change,primal_residual,dual_residual,gd_iterations\n";
  }
  char buf[256];
  for (int i = 0; i < trace.iterations(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    std::snprintf(buf, sizeof buf, "%d,%.12e,%.12e,%.12e,%.12e,%.12e,%d\n", i + 1, trace.objective[u],
                  trace.augmented[u], trace.relative_change[u], trace.primal_residual[u],
                  trace.dual_residual[u], trace.gd_iterations[u]);
    out << prefix << buf;
  }
}

}  // namespace tvdot
