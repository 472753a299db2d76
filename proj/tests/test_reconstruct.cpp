#include "doctest.h"

#include "tvdot/phantoms.hpp"
#include "tvdot/reconstruct.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>

using namespace tvdot;

namespace {

struct Problem {
  Mesh mesh;
  ProbeLayout layout;
  OpticalProperties truth;
  OpticalProperties background;
};

Problem small_problem(double radius = 20.0, double area = 2.1) {
  Mesh mesh = make_circle_mesh(radius, area);
  CirclePhantom phantom;
  phantom.anomalies = {CircleAnomaly{Eigen::Vector2d(-5.0, 5.0), 5.0, 0.03}};
  auto [truth, gt] = make_circle_truth(mesh, phantom);
  ProbeLayout layout = make_ring_layout(mesh, 16, 1.0);
  const Index n = mesh.num_nodes();
  OpticalProperties background{Eigen::VectorXd::Constant(n, 0.01), Eigen::VectorXd::Ones(n)};
  return {std::move(mesh), std::move(layout), std::move(truth), std::move(background)};
}

OuterConfig config_for(SolverKind kind, const OpticalProperties& mu0, double lambda) {
  OuterConfig c;
  c.solver_kind = kind;
  c.mu0 = mu0;
  c.admm.lambda = lambda;
  c.admm.theta_ratio = 100.0;
  c.outer_loop = 10;
  return c;
}

}  // namespace

TEST_CASE("solver names round trip") {
  for (SolverKind k : {SolverKind::Tikhonov, SolverKind::AFetv, SolverKind::IFetv, SolverKind::AGtv,
                       SolverKind::IGtv})
    CHECK(parse_solver_kind(to_string(k)) == k);
  CHECK(parse_solver_kind("i_gtv") == SolverKind::IGtv);
  CHECK(parse_solver_kind("TIKHONOV") == SolverKind::Tikhonov);
  CHECK_THROWS_AS(parse_solver_kind("fetv"), std::invalid_argument);
}

TEST_CASE("configuration echo") {
  const Problem p = small_problem(20.0, 8.0);
  const auto as_map = [](const OuterConfig& c) {
    const auto kv = config_echo(c);
    return std::map<std::string, std::string>(kv.begin(), kv.end());
  };
  const auto tv = as_map(config_for(SolverKind::IGtv, p.background, 0.001));
  CHECK(tv.at("solver") == "I-GTV");
  CHECK(tv.at("lambda") == "0.001");
  CHECK(tv.at("theta") == "0.1");
  CHECK(tv.at("gd_iters") == "10");
  CHECK(std::stod(tv.at("mu0.mua_mean")) == doctest::Approx(0.01).epsilon(1e-14));
  const auto tk = as_map(config_for(SolverKind::Tikhonov, p.background, 10.0));
  CHECK(tk.at("solver") == "Tikhonov");
  CHECK(tk.count("theta") == 0);
  CHECK(tk.count("inner_loop") == 0);
}

TEST_CASE("outer configuration validation") {
  const Problem p = small_problem(20.0, 8.0);
  const BoundaryData data = solve_forward(p.mesh, p.truth, p.layout);
  OuterConfig c = config_for(SolverKind::IGtv, p.background, 0.001);
  c.outer_loop = 0;
  CHECK_THROWS_AS(reconstruct(p.mesh, p.layout, data, c), std::invalid_argument);
  c = config_for(SolverKind::IGtv, p.background, 0.001);
  c.mua_floor = 0.0;
  CHECK_THROWS_AS(reconstruct(p.mesh, p.layout, data, c), std::invalid_argument);
  c = config_for(SolverKind::IGtv, p.background, -1.0);
  CHECK_THROWS_AS(reconstruct(p.mesh, p.layout, data, c), std::invalid_argument);
  c = config_for(SolverKind::IGtv, p.background, 0.001);
  BoundaryData short_data{data.values.head(10)};
  CHECK_THROWS_AS(reconstruct(p.mesh, p.layout, short_data, c), std::invalid_argument);
}

TEST_CASE("data generated from the initial guess is a fixed point") {
  const Problem p = small_problem();
  const BoundaryData data = solve_forward(p.mesh, p.background, p.layout);
  for (SolverKind k : {SolverKind::Tikhonov, SolverKind::IFetv, SolverKind::IGtv}) {
    const ReconResult r = reconstruct(p.mesh, p.layout, data, config_for(k, p.background, 0.01));
    INFO(to_string(k));
    CHECK(r.iterations() == 1);
    CHECK(r.stop == OuterStop::NoImprovement);
    CHECK((r.mua - p.background.mua).norm() < 1e-8 * p.background.mua.norm());
  }
}

TEST_CASE("outer loop bookkeeping") {
  const Problem p = small_problem();
  const DiffusionModel model(p.mesh, p.layout);
  const InverseOperators ops(p.mesh);
  const BoundaryData data = add_noise(model.simulate(p.truth), 0.01, 11);
  for (SolverKind k : {SolverKind::Tikhonov, SolverKind::AFetv, SolverKind::IGtv}) {
    INFO(to_string(k));
    const double lambda = k == SolverKind::Tikhonov ? 10.0 : 1e-3;
    const ReconResult r = reconstruct(model, ops, data, config_for(k, p.background, lambda));
    REQUIRE(r.iterations() >= 1);
    CHECK(r.steps.size() == r.residuals.size());
    CHECK(r.inner_traces.size() == r.residuals.size());

    Eigen::VectorXd sum = p.background.mua;
    for (const auto& s : r.steps) sum += s;
    CHECK(sum == r.mua);

    double previous = r.initial_residual;
    for (int i = 0; i + 1 < r.iterations(); ++i) {
      CHECK(r.residuals[static_cast<std::size_t>(i)] < previous);
      CHECK((previous - r.residuals[static_cast<std::size_t>(i)]) / previous > 1e-4);
      previous = r.residuals[static_cast<std::size_t>(i)];
    }
    if (r.stop == OuterStop::NoImprovement) {
      const double last = r.residuals.back();
      CHECK((previous - last) / previous <= 1e-4);
    } else {
      CHECK(r.iterations() == 10);
    }
    CHECK(r.residuals.back() < r.initial_residual);

    const ReconResult again = reconstruct(model, ops, data, config_for(k, p.background, lambda));
    CHECK(again.mua == r.mua);
    CHECK(again.residuals == r.residuals);
  }
}

TEST_CASE("a large eps2 stops after one step") {
  const Problem p = small_problem();
  const BoundaryData data = solve_forward(p.mesh, p.truth, p.layout);
  OuterConfig c = config_for(SolverKind::IGtv, p.background, 1e-3);
  c.eps2 = 1.0;
  const ReconResult r = reconstruct(p.mesh, p.layout, data, c);
  CHECK(r.iterations() == 1);
  CHECK(r.stop == OuterStop::NoImprovement);
  c.eps2 = 0.0;
  c.outer_loop = 2;
  const ReconResult two = reconstruct(p.mesh, p.layout, data, c);
  CHECK(two.iterations() <= 2);
}

TEST_CASE("absorption is clamped at the floor") {
  const Problem p = small_problem();
  OpticalProperties dim = p.background;
  dim.mua.setConstant(0.004);
  const BoundaryData data = solve_forward(p.mesh, dim, p.layout);
  OuterConfig c = config_for(SolverKind::Tikhonov, p.background, 1.0);
  c.mua_floor = 0.009;
  c.outer_loop = 3;
  const ReconResult r = reconstruct(p.mesh, p.layout, data, c);
  CHECK(r.clamped > 0);
  CHECK(r.mua.minCoeff() >= 0.009 * (1.0 - 1e-12));
  Eigen::VectorXd sum = p.background.mua;
  for (const auto& s : r.steps) sum += s;
  CHECK(sum == r.mua);
}

TEST_CASE("noise-free I-GTV fits the coarse circle data") {
  const Mesh mesh = make_circle_mesh(43.0, 1.6977);
  const auto [truth, gt] = make_circle_truth(mesh);
  const ProbeLayout layout = make_ring_layout(mesh, 16, 1.0);
  const BoundaryData data = solve_forward(mesh, truth, layout);
  const Index n = mesh.num_nodes();
  OuterConfig c = config_for(SolverKind::IGtv, {Eigen::VectorXd::Constant(n, 0.01), Eigen::VectorXd::Ones(n)},
                             1e-4);
  c.outer_loop = 40;
  const ReconResult r = reconstruct(mesh, layout, data, c);
  CHECK(r.residuals.back() < 0.01 * r.initial_residual);
}

TEST_CASE("Menger curvature corner") {
  const std::vector<double> x{0.0, 0.01, 0.02, 0.1, 1.0, 2.0, 3.0};
  const std::vector<double> y{3.0, 2.0, 1.0, 0.1, 0.02, 0.01, 0.0};
  const CornerResult c = l_curve_corner(x, y);
  CHECK(c.index == 3);
  CHECK_FALSE(c.degenerate);
  REQUIRE(c.curvature.size() == 7);
  CHECK(c.curvature.front() == 0.0);
  CHECK(c.curvature.back() == 0.0);
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    // circumradius R = abc / (4 area)
    const double a = std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]);
    const double b = std::hypot(x[i + 1] - x[i], y[i + 1] - y[i]);
    const double d = std::hypot(x[i + 1] - x[i - 1], y[i + 1] - y[i - 1]);
    const double area =
        0.5 * std::abs((x[i] - x[i - 1]) * (y[i + 1] - y[i - 1]) - (x[i + 1] - x[i - 1]) * (y[i] - y[i - 1]));
    if (area == 0.0) continue;
    CHECK(std::abs(c.curvature[i]) == doctest::Approx(4.0 * area / (a * b * d)).epsilon(1e-12));
  }
}

TEST_CASE("corner ties, collinear and concave curves") {
  const CornerResult tie = l_curve_corner({0.0, 0.0, 1.0, 1.0}, {1.0, 0.0, 0.0, 1.0});
  CHECK(tie.index == 2);
  CHECK(tie.curvature[1] == tie.curvature[2]);

  const CornerResult line = l_curve_corner({0.0, 1.0, 2.0}, {0.0, 1.0, 2.0});
  CHECK(line.degenerate);
  CHECK(line.index == 1);
  const CornerResult line5 = l_curve_corner({0, 1, 2, 3, 4}, {4, 3, 2, 1, 0});
  CHECK(line5.degenerate);
  CHECK(line5.index == 2);

  const CornerResult concave = l_curve_corner({0.0, 1.0, 2.0, 3.0}, {3.0, 2.9, 2.5, 0.0});
  CHECK(concave.degenerate);
  CHECK(concave.index == 2);

  CHECK_THROWS_AS(l_curve_corner({0.0, 1.0}, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(l_curve_corner({0.0, 1.0, 2.0}, {0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("Tikhonov L-curve against an SVD oracle") {
  const Problem p = small_problem();
  const DiffusionModel model(p.mesh, p.layout);
  const InverseOperators ops(p.mesh);
  const BoundaryData data = add_noise(model.simulate(p.truth), 0.01, 5);
  const OuterConfig c = config_for(SolverKind::Tikhonov, p.background, 1.0);
  std::vector<double> lambdas;
  for (int i = 0; i < 13; ++i) lambdas.push_back(std::pow(10.0, -2.0 + 0.5 * i));
  const LCurveResult lc = l_curve_select(model, ops, data, c, lambdas);

  const auto [base, jac] = model.simulate_with_jacobian(p.background);
  const Eigen::VectorXd dphi = data.values - base.values;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::VectorXd beta = svd.matrixU().transpose() * dphi;
  const double outside = (dphi - svd.matrixU() * beta).squaredNorm();
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double lam = lambdas[i];
    const Eigen::ArrayXd sa = s.array();
    const double res = std::sqrt((lam / (sa.square() + lam) * beta.array()).square().sum() + outside);
    const double reg = std::sqrt((sa / (sa.square() + lam) * beta.array()).square().sum());
    CHECK(lc.residual_norms[i] == doctest::Approx(res).epsilon(1e-7));
    CHECK(lc.regularizer_values[i] == doctest::Approx(reg).epsilon(1e-7));
    lx.push_back(std::log(res));
    ly.push_back(std::log(reg));
    if (i > 0) {
      CHECK(lc.residual_norms[i] > lc.residual_norms[i - 1]);
      CHECK(lc.regularizer_values[i] < lc.regularizer_values[i - 1]);
    }
  }
  Index best = -1;
  double kbest = 0.0;
  for (std::size_t i = 1; i + 1 < lx.size(); ++i) {
    const double ax = lx[i] - lx[i - 1], ay = ly[i] - ly[i - 1];
    const double bx = lx[i + 1] - lx[i], by = ly[i + 1] - ly[i];
    const double k = 2.0 * (ax * by - ay * bx) /
                     (std::hypot(ax, ay) * std::hypot(bx, by) * std::hypot(lx[i + 1] - lx[i - 1], ly[i + 1] - ly[i - 1]));
    if (k > 0.0 && k >= kbest) {
      kbest = k;
      best = static_cast<Index>(i);
    }
  }
  REQUIRE(best > 0);
  CHECK(lc.index == best);
  CHECK(lc.lambda == lambdas[static_cast<std::size_t>(best)]);
  CHECK_FALSE(lc.warning);
}

TEST_CASE("L-curve grid validation") {
  const Problem p = small_problem(20.0, 8.0);
  const BoundaryData data = solve_forward(p.mesh, p.truth, p.layout);
  const OuterConfig c = config_for(SolverKind::Tikhonov, p.background, 1.0);
  CHECK_THROWS_AS(l_curve_select(p.mesh, p.layout, data, c, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(l_curve_select(p.mesh, p.layout, data, c, {1.0, 3.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(l_curve_select(p.mesh, p.layout, data, c, {0.0, 1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(l_curve_select(p.mesh, p.layout, data, c, {1.0, 1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("TV L-curve sweep") {
  const Problem p = small_problem();
  const BoundaryData data = add_noise(solve_forward(p.mesh, p.truth, p.layout), 0.01, 8);
  const OuterConfig c = config_for(SolverKind::IGtv, p.background, 1.0);
  const LCurveResult lc = l_curve_select(p.mesh, p.layout, data, c, {1e-5, 1e-4, 1e-3, 1e-2, 1e-1});
  CHECK(lc.index >= 0);
  CHECK(lc.index < 5);
  CHECK(lc.lambda == lc.lambdas[static_cast<std::size_t>(lc.index)]);
  CHECK(lc.residual_norms.size() == 5);
  CHECK(lc.regularizer_values.front() > lc.regularizer_values.back());
  CHECK(lc.warning == !lc.message.empty());
}
