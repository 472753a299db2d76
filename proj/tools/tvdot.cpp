// tvdot command-line front end: mesh, simulate, reconstruct, experiment, metrics.

#include "tvdot/experiment.hpp"
#include "tvdot/io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

using namespace tvdot;

namespace {

struct PhantomArgs {
  double background_mua = 0.01;
  double musp = 1.0;
  std::vector<std::string> anomalies;  // "x,y,r,mua"
  bool head_layers = false;
  int fibers = 16;
  double inset = 1.0;

  void add_to(CLI::App* app, bool with_anomalies = true) {
    app->add_option("--background-mua", background_mua, "Background absorption (1/mm)");
    app->add_option("--musp", musp, "Reduced scattering (1/mm)");
    if (with_anomalies)
      app->add_option("--anomaly", anomalies, "Disk anomaly as x,y,radius,mua (repeatable)");
    app->add_flag("--head-layers", head_layers,
                  "Take background properties from region labels 1..5 (layered disk)");
    app->add_option("--fibers", fibers, "Number of ring fibres");
    app->add_option("--inset", inset, "Fibre inset from the boundary (mm)");
  }

  std::vector<CircleAnomaly> parsed_anomalies() const {
    std::vector<CircleAnomaly> out;
    for (const auto& text : anomalies) {
      std::vector<double> v;
      std::stringstream ss(text);
      std::string cell;
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
      if (v.size() != 4) throw std::invalid_argument("--anomaly expects x,y,radius,mua");
      out.push_back({Eigen::Vector2d(v[0], v[1]), v[2], v[3]});
    }
    return out;
  }

  OpticalProperties background(const Mesh& mesh) const {
    const Index n = mesh.num_nodes();
    OpticalProperties p{Eigen::VectorXd::Constant(n, background_mua), Eigen::VectorXd::Constant(n, musp)};
    if (head_layers) {
      const auto layers = default_head_layers();
      if (mesh.region().size() != n) throw std::invalid_argument("--head-layers needs region labels");
      for (Index i = 0; i < n; ++i) {
        const int r = mesh.region()[i];
        if (r < 1 || r > static_cast<int>(layers.size()))
          throw std::invalid_argument("region label outside 1..5 at node " + std::to_string(i));
        p.mua[i] = layers[static_cast<std::size_t>(r - 1)].mua;
        p.musp[i] = layers[static_cast<std::size_t>(r - 1)].musp;
      }
    }
    return p;
  }

  /// Background with anomalies painted in, plus the activation node set.
  std::pair<OpticalProperties, std::vector<Index>> truth(const Mesh& mesh) const {
    OpticalProperties p = background(mesh);
    std::vector<Index> active;
    const auto list = parsed_anomalies();
    for (Index i = 0; i < mesh.num_nodes(); ++i) {
      bool inside = false;
      for (const auto& a : list)
        if ((mesh.nodes().row(i).head<2>().transpose() - a.center).norm() <= a.radius * (1.0 + 1e-12)) {
          p.mua[i] = a.mua;
          inside = true;
        }
      if (inside) active.push_back(i);
    }
    return {p, active};
  }
};

struct SolverArgs {
  std::string solver = "I-GTV";
  double lambda = 1e-3;
  std::vector<double> lambda_grid;
  double theta_ratio = 1.0;
  double theta = 0.0;
  int inner_loop = 100;
  int outer_loop = 40;
  double eps1 = 1e-6;
  double eps2 = 1e-4;
  int gd_iters = 10;

  void add_to(CLI::App* app) {
    app->add_option("--solver", solver, "Tikhonov, A-FETV, I-FETV, A-GTV or I-GTV");
    app->add_option("--lambda", lambda, "Regularisation weight");
    app->add_option("--lambda-grid", lambda_grid, "Select lambda by L-curve over these values")
        ->delimiter(',');
    app->add_option("--theta-ratio", theta_ratio, "ADMM penalty as a multiple of lambda");
    app->add_option("--theta", theta, "Absolute ADMM penalty (overrides --theta-ratio)");
    app->add_option("--inner-loop", inner_loop, "Maximum ADMM iterations");
    app->add_option("--outer-loop", outer_loop, "Maximum outer iterations");
    app->add_option("--eps1", eps1, "ADMM relative-change tolerance");
    app->add_option("--eps2", eps2, "Outer relative-improvement tolerance");
    app->add_option("--gd-iters", gd_iters, "Gradient-descent iterations per mu-step");
  }

  OuterConfig config(const OpticalProperties& mu0) const {
    OuterConfig c;
    c.solver_kind = parse_solver_kind(solver);
    c.admm.lambda = lambda;
    c.admm.theta_ratio = theta_ratio;
    if (theta > 0.0) c.admm.theta = theta;
    c.admm.inner_loop = inner_loop;
    c.admm.eps1 = eps1;
    c.admm.gd_iters = gd_iters;
    c.outer_loop = outer_loop;
    c.eps2 = eps2;
    c.mu0 = mu0;
    return c;
  }
};

void print_metrics(const MetricReport& m) {
  std::printf("localization_error = %s\n", format_double(m.localization_error).c_str());
  std::printf("average_contrast = %s\n", format_double(m.average_contrast).c_str());
  std::printf("average_contrast_nodewise = %s\n",
              m.average_contrast_nodewise ? format_double(*m.average_contrast_nodewise).c_str() : "undefined");
  std::printf("psnr = %s\n", m.psnr ? format_double(*m.psnr).c_str() : "undefined");
  std::printf("relative_recovered_volume = %s\n", format_double(m.relative_recovered_volume).c_str());
  std::printf("recovered_nodes = %lld\n", static_cast<long long>(m.recovered_nodes));
  std::printf("hausdorff = %s\n", format_double(m.hausdorff).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TV-regularised diffuse optical reconstruction on unstructured meshes"};
  app.require_subcommand(1);

  // mesh -------------------------------------------------------------------
  auto* mesh_cmd = app.add_subcommand("mesh", "Generate or inspect meshes");
  mesh_cmd->require_subcommand(1);
  auto* gen = mesh_cmd->add_subcommand("generate", "Write a structured mesh");
  std::string shape = "circle", gen_out, gen_vtk;
  double radius = 43.0, area = 1.7, size = 10.0;
  int cells = 4;
  gen->add_option("--shape", shape, "circle, layered or cube")->check(CLI::IsMember({"circle", "layered", "cube"}));
  gen->add_option("--radius", radius, "Disk radius (mm)");
  gen->add_option("--area", area, "Target element area (mm^2)");
  gen->add_option("--cells", cells, "Cube cells per side");
  gen->add_option("--size", size, "Cube edge length (mm)");
  gen->add_option("-o,--output", gen_out, "Output mesh (.txt or .vtk)")->required();
  gen->add_option("--vtk", gen_vtk, "Also write a VTK copy");

  auto* inspect = mesh_cmd->add_subcommand("inspect", "Print mesh statistics");
  std::string inspect_path;
  inspect->add_option("mesh", inspect_path, "Mesh file")->required()->check(CLI::ExistingFile);

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Forward model plus optional noise");
  std::string sim_mesh, sim_out, sim_truth;
  double sim_noise = 0.0;
  std::uint64_t sim_seed = 1;
  PhantomArgs sim_phantom;
  sim->add_option("--mesh", sim_mesh, "Mesh file")->required()->check(CLI::ExistingFile);
  sim_phantom.add_to(sim);
  sim->add_option("--noise", sim_noise, "Relative amplitude noise (fraction, e.g. 0.01)");
  sim->add_option("--seed", sim_seed, "Noise seed");
  sim->add_option("-o,--output", sim_out, "Boundary data CSV")->required();
  sim->add_option("--truth-out", sim_truth, "Write the true nodal fields as CSV");

  // reconstruct ------------------------------------------------------------
  auto* rec = app.add_subcommand("reconstruct", "Single reconstruction");
  std::string rec_mesh, rec_data, rec_out = "recon";
  PhantomArgs rec_phantom;
  SolverArgs rec_solver;
  rec->add_option("--mesh", rec_mesh, "Mesh file")->required()->check(CLI::ExistingFile);
  rec->add_option("--data", rec_data, "Boundary data CSV")->required()->check(CLI::ExistingFile);
  rec_phantom.add_to(rec, false);
  rec_solver.add_to(rec);
  rec->add_option("--out", rec_out, "Output directory");

  // experiment -------------------------------------------------------------
  auto* exp = app.add_subcommand("experiment", "Run an experiment matrix from a JSON spec");
  std::string exp_spec;
  int exp_workers = 0;
  bool exp_quiet = false;
  exp->add_option("spec", exp_spec, "Experiment JSON")->required()->check(CLI::ExistingFile);
  exp->add_option("--workers", exp_workers, "Override the worker count");
  exp->add_flag("-q,--quiet", exp_quiet, "No progress output");

  // metrics ----------------------------------------------------------------
  auto* met = app.add_subcommand("metrics", "Score a saved field against a phantom");
  std::string met_mesh, met_field, met_column = "change", met_mode = "positive";
  PhantomArgs met_phantom;
  met->add_option("--mesh", met_mesh, "Mesh file")->required()->check(CLI::ExistingFile);
  met->add_option("--field", met_field, "Field CSV")->required()->check(CLI::ExistingFile);
  met->add_option("--column", met_column, "Column holding the change from background (or 'mua')");
  met->add_option("--mode", met_mode, "positive or magnitude")->check(CLI::IsMember({"positive", "magnitude"}));
  met_phantom.add_to(met);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Mesh mesh = shape == "circle"  ? make_circle_mesh(radius, area)
                  : shape == "cube" ? make_cube_mesh(cells, size)
                                    : [&] {
                                        auto layers = default_head_layers();
                                        for (auto& l : layers) l.outer_radius *= radius / 43.0;
                                        return make_layered_disk(layers, area).first;
                                      }();
      save_mesh(mesh, gen_out);
      if (!gen_vtk.empty()) save_mesh(mesh, gen_vtk, MeshFormat::Vtk);
      std::printf("nodes = %lld\nelements = %lld\n", static_cast<long long>(mesh.num_nodes()),
                  static_cast<long long>(mesh.num_elements()));
    } else if (inspect->parsed()) {
      const Mesh mesh = load_mesh(inspect_path);
      const Eigen::VectorXd measures = element_measures(mesh);
      long long boundary = 0;
      for (bool b : mesh.boundary()) boundary += b;
      const WeightedGraph graph = mesh_to_graph(mesh);
      std::printf("dim = %d\nnodes = %lld\nelements = %lld\nboundary_nodes = %lld\ngraph_edges = %lld\n",
                  mesh.dim(), static_cast<long long>(mesh.num_nodes()),
                  static_cast<long long>(mesh.num_elements()), boundary,
                  static_cast<long long>(graph.num_edges()));
      std::printf("total_measure = %s\nmean_element_measure = %s\nmin_element_measure = %s\n",
                  format_double(measures.sum()).c_str(), format_double(measures.mean()).c_str(),
                  format_double(measures.minCoeff()).c_str());
    } else if (sim->parsed()) {
      const Mesh mesh = load_mesh(sim_mesh);
      const auto [truth, active] = sim_phantom.truth(mesh);
      const ProbeLayout layout = make_ring_layout(mesh, sim_phantom.fibers, sim_phantom.inset);
      NoiseReport report;
      const BoundaryData data = add_noise(solve_forward(mesh, truth, layout), sim_noise, sim_seed, &report);
      auto out = open_output(sim_out);
      write_boundary_csv(data, layout, out);
      if (!sim_truth.empty()) {
        auto t = open_output(sim_truth);
        write_field_csv({{"mua", &truth.mua}, {"musp", &truth.musp}}, t);
      }
      std::fprintf(stderr, "%lld measurements, %d noise redraws\n",
                   static_cast<long long>(data.size()), report.resampled);
    } else if (rec->parsed()) {
      const Mesh mesh = load_mesh(rec_mesh);
      const ProbeLayout layout = make_ring_layout(mesh, rec_phantom.fibers, rec_phantom.inset);
      auto din = open_input(rec_data);
      const BoundaryData data = read_boundary_csv(din, &layout);
      const OpticalProperties mu0 = rec_phantom.background(mesh);
      OuterConfig cfg = rec_solver.config(mu0);
      const DiffusionModel model(mesh, layout, cfg.forward);
      const InverseOperators ops(mesh);
      const std::filesystem::path dir = rec_out;
      if (!rec_solver.lambda_grid.empty()) {
        const LCurveResult lc = l_curve_select(model, ops, data, cfg, rec_solver.lambda_grid);
        if (lc.warning) std::fprintf(stderr, "warning: %s\n", lc.message.c_str());
        cfg.admm.lambda = lc.lambda;
        auto f = open_output(dir / "lcurve.csv");
        f << "lambda,residual_norm,regularizer,curvature,selected\n";
        for (std::size_t i = 0; i < lc.lambdas.size(); ++i)
          f << format_double(lc.lambdas[i]) << ',' << format_double(lc.residual_norms[i]) << ','
            << format_double(lc.regularizer_values[i]) << ',' << format_double(lc.curvature[i]) << ','
            << (static_cast<Index>(i) == lc.index) << '\n';
      }
      const ReconResult r = reconstruct(model, ops, data, cfg);
      const Eigen::VectorXd change = r.mua - mu0.mua;
      {
        auto f = open_output(dir / "field.csv");
        write_field_csv({{"mua", &r.mua}, {"change", &change}}, f);
      }
      {
        auto f = open_output(dir / "field.vtk");
        write_mesh_vtk(mesh, f, {{"mua", &r.mua}, {"change", &change}});
      }
      {
        auto f = open_output(dir / "trace.csv");
        f << "outer,residual\n0," << format_double(r.initial_residual) << '\n';
        for (std::size_t k = 0; k < r.residuals.size(); ++k)
          f << k + 1 << ',' << format_double(r.residuals[k]) << '\n';
      }
      {
        auto f = open_output(dir / "inner_trace.csv");
        for (std::size_t k = 0; k < r.inner_traces.size(); ++k)
          write_trace_csv(r.inner_traces[k], f, k == 0, std::to_string(k + 1) + ",");
      }
      {
        auto f = open_output(dir / "config.txt");
        for (const auto& [k, v] : r.config) f << k << " = " << v << '\n';
        f << "outer_iterations = " << r.iterations() << "\nclamped = " << r.clamped << '\n';
      }
      std::fprintf(stderr, "%d outer iterations, residual %s -> %s\n", r.iterations(),
                   format_double(r.initial_residual).c_str(), format_double(r.residuals.back()).c_str());
    } else if (exp->parsed()) {
      ExperimentSpec spec = load_experiment_spec(exp_spec);
      if (exp_workers > 0) spec.workers = exp_workers;
      ExperimentOptions opts;
      opts.verbose = !exp_quiet;
      const ExperimentResult result = run_experiment(spec, opts);
      std::fprintf(stderr, "%zu runs, %d failed; outputs in %s\n", result.runs.size(), result.failures,
                   spec.output_dir.string().c_str());
      return result.failures == 0 ? 0 : 1;
    } else if (met->parsed()) {
      const Mesh mesh = load_mesh(met_mesh);
      const OpticalProperties bg = met_phantom.background(mesh);
      auto [truth, active] = met_phantom.truth(mesh);
      if (active.empty()) throw std::invalid_argument("metrics needs at least one --anomaly covering mesh nodes");
      auto fin = open_input(met_field);
      Eigen::VectorXd field = read_field_csv(fin, met_column);
      if (met_column == "mua") field -= bg.mua;
      const Eigen::VectorXd change = truth.mua - bg.mua;
      double anomaly = 0.0;
      for (Index i : active) anomaly += change[i];
      anomaly /= static_cast<double>(active.size());
      const GroundTruth gt = make_ground_truth(mesh, change, active, anomaly);
      print_metrics(evaluate(mesh, field, gt, met_mode == "magnitude" ? RegionMode::Magnitude : RegionMode::Positive));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
