#include "tvdot/reconstruct.hpp"

#include "tvdot/io.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>

namespace tvdot {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t splitting_slot(SolverKind kind) {
  switch (kind) {
    case SolverKind::AFetv: return 0;
    case SolverKind::IFetv: return 1;
    case SolverKind::AGtv: return 2;
    case SolverKind::IGtv: return 3;
    case SolverKind::Tikhonov: break;
  }
  throw std::invalid_argument("Tikhonov has no TV splitting");
}

}  // namespace

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Tikhonov: return "Tikhonov";
    case SolverKind::AFetv: return "A-FETV";
    case SolverKind::IFetv: return "I-FETV";
    case SolverKind::AGtv: return "A-GTV";
    case SolverKind::IGtv: return "I-GTV";
  }
  return "?";
}

SolverKind parse_solver_kind(const std::string& name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "tikhonov") return SolverKind::Tikhonov;
  if (key == "afetv") return SolverKind::AFetv;
  if (key == "ifetv") return SolverKind::IFetv;
  if (key == "agtv") return SolverKind::AGtv;
  if (key == "igtv") return SolverKind::IGtv;
  throw std::invalid_argument("unknown solver kind: " + name);
}

void OuterConfig::validate(Index num_nodes) const {
  if (outer_loop < 1) throw std::invalid_argument("outer_loop must be at least 1");
  if (!(eps2 >= 0.0)) throw std::invalid_argument("eps2 must be non-negative");
  if (!(mua_floor > 0.0)) throw std::invalid_argument("mua_floor must be positive");
  admm.validate();
  mu0.validate(num_nodes);
}

std::vector<std::pair<std::string, std::string>> config_echo(const OuterConfig& c) {
  const auto& fmt = format_double;
  std::vector<std::pair<std::string, std::string>> kv{
      {"solver", to_string(c.solver_kind)},
      {"outer_loop", std::to_string(c.outer_loop)},
      {"eps2", fmt(c.eps2)},
      {"lambda", fmt(c.admm.lambda)},
  };
  if (c.solver_kind != SolverKind::Tikhonov) {
    const std::vector<std::pair<std::string, std::string>> admm{
        {"theta", fmt(c.admm.effective_theta())},
        {"inner_loop", std::to_string(c.admm.inner_loop)},
        {"eps1", fmt(c.admm.eps1)},
        {"gd_iters", std::to_string(c.admm.gd_iters)},
        {"gd_tolerance", fmt(c.admm.gd_tolerance)},
        {"line_search.initial_step", fmt(c.admm.line_search.initial_step)},
        {"line_search.shrink", fmt(c.admm.line_search.shrink)},
        {"line_search.sufficient_decrease", fmt(c.admm.line_search.sufficient_decrease)},
        {"line_search.max_backtracks", std::to_string(c.admm.line_search.max_backtracks)},
    };
    kv.insert(kv.end(), admm.begin(), admm.end());
  }
  kv.emplace_back("mua_floor", fmt(c.mua_floor));
  kv.emplace_back("refractive_index", fmt(c.forward.refractive_index));
  kv.emplace_back("mu0.mua_mean", fmt(c.mu0.mua.size() ? c.mu0.mua.mean() : 0.0));
  kv.emplace_back("mu0.musp_mean", fmt(c.mu0.musp.size() ? c.mu0.musp.mean() : 0.0));
  return kv;
}

InverseOperators::InverseOperators(const Mesh& mesh)
    : gradients_(assemble_gradient_matrices<double>(mesh)),
      graph_(std::make_unique<WeightedGraph>(mesh_to_graph(mesh))) {
  splittings_.push_back(fe_splitting(gradients_, false));
  splittings_.push_back(fe_splitting(gradients_, true));
  splittings_.push_back(graph_splitting(*graph_, false));
  splittings_.push_back(graph_splitting(*graph_, true));
}

const Splitting& InverseOperators::splitting(SolverKind kind) const {
  return splittings_[splitting_slot(kind)];
}

AdmmResult InverseOperators::solve(SolverKind kind, const Eigen::MatrixXd& jacobian,
                                   const Eigen::VectorXd& dphi, const AdmmConfig& config) const {
  if (kind == SolverKind::Tikhonov) return {solve_tikhonov(jacobian, dphi, config.lambda), {}};
  return solve_admm(jacobian, dphi, splitting(kind), config);
}

double InverseOperators::regularizer(SolverKind kind, const Eigen::VectorXd& dmu) const {
  if (kind == SolverKind::Tikhonov) return dmu.norm();
  const Splitting& s = splitting(kind);
  return s.regularizer(s.op * dmu);
}

ReconResult reconstruct(const Mesh& mesh, const ProbeLayout& layout, const BoundaryData& measured,
                        const OuterConfig& config) {
  const DiffusionModel model(mesh, layout, config.forward);
  const InverseOperators ops(mesh);
  return reconstruct(model, ops, measured, config);
}

ReconResult reconstruct(const DiffusionModel& model, const InverseOperators& ops,
                        const BoundaryData& measured, const OuterConfig& config) {
  const Index n = model.mesh().num_nodes();
  config.validate(n);
  if (measured.size() != model.layout().num_measurements())
    throw std::invalid_argument("reconstruct: data length does not match the probe layout");
  if (!measured.values.allFinite()) throw std::invalid_argument("reconstruct: non-finite data");

  ReconResult r;
  r.config = config_echo(config);
  OpticalProperties props = config.mu0;

  auto t0 = Clock::now();
  auto [data, jac] = model.simulate_with_jacobian(props);
  r.timings.forward_seconds += seconds_since(t0);
  double previous = (measured.values - data.values).squaredNorm();
  r.initial_residual = previous;

  for (int k = 1; k <= config.outer_loop; ++k) {
    const Eigen::VectorXd dphi = measured.values - data.values;
    t0 = Clock::now();
    AdmmResult inner = ops.solve(config.solver_kind, jac.values, dphi, config.admm);
    r.timings.inner_seconds += seconds_since(t0);
    if (!inner.delta_mu.allFinite()) {
      throw ReconstructionError("reconstruct: non-finite update at outer iteration " +
                                std::to_string(k) + " (" + to_string(config.solver_kind) +
                                ", inner iterations " + std::to_string(inner.trace.iterations()) + ")");
    }

    Eigen::VectorXd step = std::move(inner.delta_mu);
    for (Index i = 0; i < n; ++i) {
      const double lowest = config.mua_floor - props.mua[i];
      if (step[i] < lowest) {
        step[i] = lowest;
        ++r.clamped;
      }
    }
    props.mua += step;
    r.steps.push_back(std::move(step));
    r.inner_traces.push_back(std::move(inner.trace));

    t0 = Clock::now();
    if (k < config.outer_loop) {
      std::tie(data, jac) = model.simulate_with_jacobian(props);
    } else {
      data = model.simulate(props);
    }
    r.timings.forward_seconds += seconds_since(t0);
    const double current = (measured.values - data.values).squaredNorm();
    r.residuals.push_back(current);

    // Relative improvement (old - new) / old; a stalled or rising residual stops.
    const double improvement = previous > 0.0 ? (previous - current) / previous : 0.0;
    if (improvement <= config.eps2) {
      r.stop = OuterStop::NoImprovement;
      break;
    }
    previous = current;
  }
  r.mua = std::move(props.mua);
  return r;
}

CornerResult l_curve_corner(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("l_curve_corner: need at least 3 points of matching length");
  const std::size_t n = x.size();
  CornerResult out;
  out.curvature.assign(n, 0.0);
  double best = 0.0;
  double extent = 0.0;
  for (std::size_t i = 0; i < n; ++i) extent = std::max({extent, std::abs(x[i]), std::abs(y[i])});
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double ax = x[i] - x[i - 1], ay = y[i] - y[i - 1];
    const double bx = x[i + 1] - x[i], by = y[i + 1] - y[i];
    const double cx = x[i + 1] - x[i - 1], cy = y[i + 1] - y[i - 1];
    const double la = std::hypot(ax, ay), lb = std::hypot(bx, by), lc = std::hypot(cx, cy);
    const double cross = ax * by - ay * bx;
    if (!std::isfinite(cross) || la == 0.0 || lb == 0.0 || lc == 0.0) continue;
    // sin of the turning angle below rounding level counts as collinear
    if (std::abs(cross) <= 1e-12 * la * lb + 1e-15 * extent * extent) continue;
    const double kappa = 2.0 * cross / (la * lb * lc);
    out.curvature[i] = kappa;
    if (kappa > 0.0 && kappa >= best) {
      best = kappa;
      out.index = static_cast<Index>(i);
    }
  }
  if (out.index < 0) {
    out.degenerate = true;
    out.index = static_cast<Index>(n / 2);
  }
  return out;
}

LCurveResult l_curve_select(const Mesh& mesh, const ProbeLayout& layout, const BoundaryData& measured,
                            const OuterConfig& config, const std::vector<double>& lambdas) {
  const DiffusionModel model(mesh, layout, config.forward);
  const InverseOperators ops(mesh);
  return l_curve_select(model, ops, measured, config, lambdas);
}

LCurveResult l_curve_select(const DiffusionModel& model, const InverseOperators& ops,
                            const BoundaryData& measured, const OuterConfig& config,
                            const std::vector<double>& lambdas) {
  if (lambdas.size() < 3) throw std::invalid_argument("l_curve_select: need at least 3 lambda values");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw std::invalid_argument("l_curve_select: lambdas must be positive");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
      throw std::invalid_argument("l_curve_select: lambdas must be strictly increasing");
  }
  config.validate(model.mesh().num_nodes());

  const auto [data, jac] = model.simulate_with_jacobian(config.mu0);
  const Eigen::VectorXd dphi = measured.values - data.values;

  LCurveResult out;
  out.lambdas = lambdas;
  std::vector<double> lx, ly;
  for (double lambda : lambdas) {
    AdmmConfig admm = config.admm;
    admm.lambda = lambda;
    const Eigen::VectorXd dmu = ops.solve(config.solver_kind, jac.values, dphi, admm).delta_mu;
    out.residual_norms.push_back((jac.values * dmu - dphi).norm());
    out.regularizer_values.push_back(ops.regularizer(config.solver_kind, dmu));
    lx.push_back(std::log(out.residual_norms.back()));
    ly.push_back(std::log(out.regularizer_values.back()));
  }
  const CornerResult corner = l_curve_corner(lx, ly);
  out.index = corner.index;
  out.lambda = lambdas[static_cast<std::size_t>(corner.index)];
  out.curvature = corner.curvature;
  if (corner.degenerate) {
    out.warning = true;
    out.message = "L-curve has no convex corner; using the median lambda";
  }
  return out;
}

}  // namespace tvdot
