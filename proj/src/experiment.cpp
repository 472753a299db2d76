#include "tvdot/experiment.hpp"

#include "tvdot/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace tvdot {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

void read_outer(const json& j, OuterConfig& c) {
  read_opt(j, "outer_loop", c.outer_loop);
  read_opt(j, "eps2", c.eps2);
  read_opt(j, "inner_loop", c.admm.inner_loop);
  read_opt(j, "eps1", c.admm.eps1);
  read_opt(j, "theta_ratio", c.admm.theta_ratio);
  read_opt(j, "gd_iters", c.admm.gd_iters);
  read_opt(j, "gd_tolerance", c.admm.gd_tolerance);
  read_opt(j, "mua_floor", c.mua_floor);
  read_opt(j, "refractive_index", c.forward.refractive_index);
  if (j.contains("theta")) c.admm.theta = j.at("theta").get<double>();
  if (j.contains("line_search")) {
    const json& ls = j.at("line_search");
    check_keys(ls, {"initial_step", "shrink", "sufficient_decrease", "max_backtracks"}, "line_search");
    read_opt(ls, "initial_step", c.admm.line_search.initial_step);
    read_opt(ls, "shrink", c.admm.line_search.shrink);
    read_opt(ls, "sufficient_decrease", c.admm.line_search.sufficient_decrease);
    read_opt(ls, "max_backtracks", c.admm.line_search.max_backtracks);
  }
}

const std::set<std::string> kOuterKeys = {"outer_loop", "eps2", "inner_loop", "eps1", "theta", "theta_ratio",
                                          "gd_iters", "gd_tolerance", "mua_floor", "refractive_index",
                                          "line_search"};

std::string noise_label(double noise) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", noise * 100.0);
  return buf;
}

std::string opt_number(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

/// Everything derived from one mesh recipe.
struct MeshContext {
  std::string name;
  std::unique_ptr<Mesh> mesh;
  OpticalProperties background;
  OpticalProperties truth;
  GroundTruth change_truth;
  ProbeLayout layout;
  std::unique_ptr<DiffusionModel> model;
  std::unique_ptr<InverseOperators> ops;
  BoundaryData clean;
  std::vector<bool> mask;
};

MeshContext build_context(const ExperimentSpec& spec, const MeshRecipe& recipe) {
  MeshContext ctx;
  ctx.name = recipe.name;
  if (recipe.generator == "circle") {
    ctx.mesh = std::make_unique<Mesh>(make_circle_mesh(recipe.radius, recipe.target_area));
    const Index n = ctx.mesh->num_nodes();
    ctx.background = {Eigen::VectorXd::Constant(n, spec.phantom.background_mua),
                      Eigen::VectorXd::Constant(n, spec.phantom.musp)};
  } else if (recipe.generator == "layered_disk") {
    auto layers = default_head_layers();
    const double scale = recipe.radius / layers.front().outer_radius;
    for (auto& l : layers) l.outer_radius *= scale;
    auto [mesh, props] = make_layered_disk(layers, recipe.target_area);
    ctx.mesh = std::make_unique<Mesh>(std::move(mesh));
    ctx.background = std::move(props);
  } else if (recipe.generator == "file") {
    ctx.mesh = std::make_unique<Mesh>(load_mesh(recipe.path));
    const Index n = ctx.mesh->num_nodes();
    ctx.background = {Eigen::VectorXd::Constant(n, spec.phantom.background_mua),
                      Eigen::VectorXd::Constant(n, spec.phantom.musp)};
  } else {
    throw std::invalid_argument("unknown mesh generator '" + recipe.generator + "'");
  }
  const Mesh& mesh = *ctx.mesh;
  if (mesh.dim() != 2) throw std::invalid_argument("experiments need a 2D mesh");

  ctx.truth = ctx.background;
  std::vector<Index> active;
  for (const auto& a : spec.phantom.anomalies) locate_point(mesh, a.center);  // anomaly inside mesh
  for (Index i = 0; i < mesh.num_nodes(); ++i) {
    const Eigen::Vector2d x = mesh.nodes().row(i).transpose();
    bool inside = false;
    for (const auto& a : spec.phantom.anomalies)
      if ((x - a.center).norm() <= a.radius * (1.0 + 1e-12)) {
        ctx.truth.mua[i] = a.mua;
        inside = true;
      }
    if (inside) active.push_back(i);
  }
  if (active.empty()) throw std::invalid_argument("no mesh node lies inside the anomalies");
  const Eigen::VectorXd change = ctx.truth.mua - ctx.background.mua;
  double anomaly_change = 0.0;
  for (Index i : active) anomaly_change += change[i];
  anomaly_change /= static_cast<double>(active.size());
  ctx.change_truth = make_ground_truth(mesh, change, std::move(active), anomaly_change);

  if (spec.mask) {
    ctx.mask.resize(static_cast<std::size_t>(mesh.num_nodes()));
    for (Index i = 0; i < mesh.num_nodes(); ++i)
      ctx.mask[static_cast<std::size_t>(i)] =
          (mesh.nodes().row(i).transpose() - spec.mask->center).norm() <= spec.mask->radius;
  }

  ctx.layout = make_ring_layout(mesh, spec.fibers, spec.inset);
  ctx.model = std::make_unique<DiffusionModel>(mesh, ctx.layout);
  ctx.ops = std::make_unique<InverseOperators>(mesh);
  ctx.clean = ctx.model->simulate(ctx.truth);
  return ctx;
}

void write_key_values(const std::vector<std::pair<std::string, std::string>>& kv, std::ostream& out) {
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

std::vector<std::pair<std::string, std::string>> spec_echo(const ExperimentSpec& s) {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"id", s.id},
      {"seed", std::to_string(s.seed)},
      {"workers", std::to_string(s.workers)},
      {"fibers", std::to_string(s.fibers)},
      {"inset", format_double(s.inset)},
      {"repeats", std::to_string(s.repeats)},
      {"background.mua", format_double(s.phantom.background_mua)},
      {"background.musp", format_double(s.phantom.musp)},
      {"region_mode", s.region_mode == RegionMode::Positive ? "positive" : "magnitude"},
  };
  std::string noise;
  for (double v : s.noise_levels) noise += (noise.empty() ? "" : ",") + format_double(v);
  kv.emplace_back("noise_levels", noise);
  for (std::size_t a = 0; a < s.phantom.anomalies.size(); ++a) {
    const auto& an = s.phantom.anomalies[a];
    const std::string p = "anomaly." + std::to_string(a) + ".";
    kv.emplace_back(p + "center", format_double(an.center.x()) + "," + format_double(an.center.y()));
    kv.emplace_back(p + "radius", format_double(an.radius));
    kv.emplace_back(p + "mua", format_double(an.mua));
  }
  for (const auto& m : s.meshes) {
    const std::string p = "mesh." + m.name + ".";
    kv.emplace_back(p + "generator", m.generator);
    if (m.generator == "file") {
      kv.emplace_back(p + "path", m.path.string());
    } else {
      kv.emplace_back(p + "radius", format_double(m.radius));
      kv.emplace_back(p + "target_area", format_double(m.target_area));
    }
  }
  if (s.mask) {
    kv.emplace_back("mask.center", format_double(s.mask->center.x()) + "," + format_double(s.mask->center.y()));
    kv.emplace_back("mask.radius", format_double(s.mask->radius));
  }
  return kv;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (meshes.empty()) throw std::invalid_argument("experiment needs at least one mesh");
  if (solvers.empty()) throw std::invalid_argument("experiment needs at least one solver");
  if (noise_levels.empty()) throw std::invalid_argument("experiment needs at least one noise level");
  for (double v : noise_levels)
    if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("noise levels must lie in [0, 1)");
  if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  if (fibers < 2) throw std::invalid_argument("fibers must be at least 2");
  std::set<std::string> names;
  for (const auto& m : meshes)
    if (!names.insert(m.name).second) throw std::invalid_argument("duplicate mesh name '" + m.name + "'");
  for (const auto& s : solvers) {
    if (!s.lambda) {
      const auto& grid = s.lambda_grid.empty() ? lambda_grid : s.lambda_grid;
      if (grid.size() < 3) throw std::invalid_argument("automatic lambda needs a lambda_grid of >= 3 values");
    }
    if (s.outer.outer_loop < 1) throw std::invalid_argument("outer_loop must be at least 1");
    AdmmConfig probe = s.outer.admm;
    probe.lambda = s.lambda.value_or(1.0);
    probe.validate();
  }
  for (const auto& a : phantom.anomalies)
    if (!(a.radius > 0.0) || !(a.mua > 0.0)) throw std::invalid_argument("anomaly radius and mua must be positive");
}

ExperimentSpec parse_experiment_spec(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = json::parse(text);
  check_keys(j,
             {"id", "seed", "workers", "output_dir", "write_fields", "meshes", "background", "anomalies",
              "probes", "noise_levels", "repeats", "solvers", "lambda_grid", "defaults", "region_mode",
              "mask"},
             "experiment");
  ExperimentSpec s;
  read_opt(j, "id", s.id);
  read_opt(j, "seed", s.seed);
  read_opt(j, "workers", s.workers);
  read_opt(j, "write_fields", s.write_fields);
  read_opt(j, "repeats", s.repeats);
  read_opt(j, "noise_levels", s.noise_levels);
  read_opt(j, "lambda_grid", s.lambda_grid);
  if (j.contains("output_dir")) {
    s.output_dir = j.at("output_dir").get<std::string>();
    if (s.output_dir.is_relative()) s.output_dir = base_dir / s.output_dir;
  }
  for (const json& m : j.at("meshes")) {
    check_keys(m, {"name", "generator", "radius", "target_area", "path"}, "mesh");
    MeshRecipe r;
    read_opt(m, "name", r.name);
    read_opt(m, "generator", r.generator);
    read_opt(m, "radius", r.radius);
    read_opt(m, "target_area", r.target_area);
    if (m.contains("path")) {
      r.path = m.at("path").get<std::string>();
      if (r.path.is_relative()) r.path = base_dir / r.path;
    }
    s.meshes.push_back(r);
  }
  if (j.contains("background")) {
    check_keys(j.at("background"), {"mua", "musp"}, "background");
    read_opt(j.at("background"), "mua", s.phantom.background_mua);
    read_opt(j.at("background"), "musp", s.phantom.musp);
  }
  if (j.contains("anomalies")) {
    s.phantom.anomalies.clear();
    for (const json& a : j.at("anomalies")) {
      check_keys(a, {"center", "radius", "mua"}, "anomaly");
      CircleAnomaly an;
      const auto c = a.at("center").get<std::vector<double>>();
      if (c.size() != 2) throw std::invalid_argument("anomaly center must have 2 coordinates");
      an.center = {c[0], c[1]};
      an.radius = a.at("radius").get<double>();
      an.mua = a.at("mua").get<double>();
      s.phantom.anomalies.push_back(an);
    }
  }
  if (j.contains("probes")) {
    check_keys(j.at("probes"), {"fibers", "inset"}, "probes");
    read_opt(j.at("probes"), "fibers", s.fibers);
    read_opt(j.at("probes"), "inset", s.inset);
  }
  if (j.contains("region_mode")) {
    const auto mode = j.at("region_mode").get<std::string>();
    if (mode == "positive") s.region_mode = RegionMode::Positive;
    else if (mode == "magnitude") s.region_mode = RegionMode::Magnitude;
    else throw std::invalid_argument("region_mode must be positive or magnitude");
  }
  if (j.contains("mask")) {
    check_keys(j.at("mask"), {"center", "radius"}, "mask");
    IlluminationMask mask;
    const auto c = j.at("mask").at("center").get<std::vector<double>>();
    if (c.size() != 2) throw std::invalid_argument("mask center must have 2 coordinates");
    mask.center = {c[0], c[1]};
    mask.radius = j.at("mask").at("radius").get<double>();
    s.mask = mask;
  }

  OuterConfig defaults;
  if (j.contains("defaults")) {
    check_keys(j.at("defaults"), kOuterKeys, "defaults");
    read_outer(j.at("defaults"), defaults);
  }
  for (const json& sj : j.at("solvers")) {
    std::set<std::string> keys = kOuterKeys;
    keys.insert({"kind", "lambda", "lambda_grid"});
    check_keys(sj, keys, "solver");
    SolverSpec sol;
    sol.kind = parse_solver_kind(sj.at("kind").get<std::string>());
    sol.outer = defaults;
    read_outer(sj, sol.outer);
    sol.outer.solver_kind = sol.kind;
    if (sj.contains("lambda")) {
      const json& l = sj.at("lambda");
      if (l.is_string()) {
        if (l.get<std::string>() != "auto") throw std::invalid_argument("lambda must be a number or \"auto\"");
      } else {
        sol.lambda = l.get<double>();
      }
    }
    read_opt(sj, "lambda_grid", sol.lambda_grid);
    s.solvers.push_back(sol);
  }
  s.validate();
  return s;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_spec(ss.str(), path.parent_path());
}

std::uint64_t run_seed(std::uint64_t master, SolverKind solver, double noise, int repeat) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  mix(&master, sizeof master);
  const std::string name = to_string(solver);
  mix(name.data(), name.size());
  std::uint64_t bits = 0;
  std::memcpy(&bits, &noise, sizeof bits);
  mix(&bits, sizeof bits);
  const std::int64_t r = repeat;
  mix(&r, sizeof r);
  return h;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void write_metrics_csv(const std::string& id, const std::vector<RunRecord>& runs, std::ostream& out) {
  out << "experiment,mesh,solver,noise_percent,repeat,seed,lambda,theta,localization_error,"
         "average_contrast,average_contrast_nodewise,psnr,relative_recovered_volume,recovered_nodes,"
         "hausdorff,outer_iterations,clamped,noise_resampled,status\n";
  for (const auto& r : runs) {
    out << id << ',' << r.mesh << ',' << to_string(r.solver) << ',' << noise_label(r.noise) << ','
        << r.repeat << ',' << r.seed << ',' << format_double(r.lambda) << ',' << format_double(r.theta)
        << ',';
    if (r.metrics) {
      const auto& m = *r.metrics;
      out << format_double(m.localization_error) << ',' << format_double(m.average_contrast) << ','
          << opt_number(m.average_contrast_nodewise) << ',' << opt_number(m.psnr) << ','
          << format_double(m.relative_recovered_volume) << ',' << m.recovered_nodes << ','
          << format_double(m.hausdorff);
    } else {
      out << ",,,,,,";
    }
    out << ',' << r.outer_iterations << ',' << r.clamped << ',' << r.noise_resampled << ','
        << (r.status.find(',') == std::string::npos ? r.status : "\"" + r.status + "\"") << '\n';
  }
}

void write_summary_csv(const std::string& id, const std::vector<RunRecord>& runs, std::ostream& out) {
  out << "experiment,mesh,solver,noise_percent,metric,p25,p50,p75,count\n";
  using Getter = std::optional<double> (*)(const MetricReport&);
  const std::vector<std::pair<const char*, Getter>> metrics = {
      {"localization_error", [](const MetricReport& m) -> std::optional<double> { return m.localization_error; }},
      {"average_contrast", [](const MetricReport& m) -> std::optional<double> { return m.average_contrast; }},
      {"psnr", [](const MetricReport& m) { return m.psnr; }},
      {"relative_recovered_volume",
       [](const MetricReport& m) -> std::optional<double> { return m.relative_recovered_volume; }},
      {"hausdorff", [](const MetricReport& m) -> std::optional<double> { return m.hausdorff; }},
  };
  std::size_t i = 0;
  while (i < runs.size()) {
    std::size_t end = i;
    while (end < runs.size() && runs[end].mesh == runs[i].mesh && runs[end].solver == runs[i].solver &&
           runs[end].noise == runs[i].noise)
      ++end;
    for (const auto& [name, get] : metrics) {
      std::vector<double> values;
      for (std::size_t k = i; k < end; ++k)
        if (runs[k].metrics)
          if (const auto v = get(*runs[k].metrics)) values.push_back(*v);
      out << id << ',' << runs[i].mesh << ',' << to_string(runs[i].solver) << ','
          << noise_label(runs[i].noise) << ',' << name << ',';
      if (values.empty()) {
        out << ",,";
      } else {
        out << format_double(percentile(values, 0.25)) << ',' << format_double(percentile(values, 0.5))
            << ',' << format_double(percentile(values, 0.75));
      }
      out << ',' << values.size() << '\n';
    }
    i = end;
  }
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options) {
  spec.validate();
  ExperimentResult result;
  const std::filesystem::path out_dir = spec.output_dir;
  auto log = [&](const std::string& msg) {
    if (options.verbose) std::cerr << msg << std::endl;
  };

  std::vector<MeshContext> contexts;
  for (const auto& recipe : spec.meshes) {
    log("building mesh " + recipe.name);
    contexts.push_back(build_context(spec, recipe));
  }

  // Per (mesh, solver) configuration, with lambda fixed up front.
  const std::size_t ns = spec.solvers.size();
  std::vector<OuterConfig> configs(contexts.size() * ns);
  for (std::size_t m = 0; m < contexts.size(); ++m) {
    const MeshContext& ctx = contexts[m];
    for (std::size_t s = 0; s < ns; ++s) {
      const SolverSpec& sol = spec.solvers[s];
      OuterConfig cfg = sol.outer;
      cfg.solver_kind = sol.kind;
      cfg.mu0 = ctx.background;
      if (sol.lambda) {
        cfg.admm.lambda = *sol.lambda;
      } else {
        // L-curve on the first noisy data set (repeat 0), or clean data if all levels are 0.
        const auto noisy = std::find_if(spec.noise_levels.begin(), spec.noise_levels.end(),
                                        [](double v) { return v > 0.0; });
        const double level = noisy == spec.noise_levels.end() ? 0.0 : *noisy;
        const BoundaryData data = add_noise(ctx.clean, level, run_seed(spec.seed, sol.kind, level, 0));
        const auto& grid = sol.lambda_grid.empty() ? spec.lambda_grid : sol.lambda_grid;
        log("L-curve " + ctx.name + "/" + to_string(sol.kind));
        LCurveResult lc = l_curve_select(*ctx.model, *ctx.ops, data, cfg, grid);
        if (lc.warning) log("warning: " + ctx.name + "/" + to_string(sol.kind) + ": " + lc.message);
        cfg.admm.lambda = lc.lambda;
        result.lcurves.emplace_back(ctx.name + "/" + to_string(sol.kind), std::move(lc));
      }
      configs[m * ns + s] = std::move(cfg);
    }
  }

  struct Task {
    std::size_t mesh, solver, noise;
    int repeat;
  };
  std::vector<Task> tasks;
  for (std::size_t m = 0; m < contexts.size(); ++m)
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t k = 0; k < spec.noise_levels.size(); ++k)
        for (int r = 0; r < spec.repeats; ++r) tasks.push_back({m, s, k, r});
  result.runs.resize(tasks.size());

  // At 0% noise every repeat sees the same data, so later repeats reuse repeat 0.
  auto is_copy = [&](const Task& task) { return spec.noise_levels[task.noise] == 0.0 && task.repeat > 0; };
  std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const ReconResult>> clean_results;
  std::mutex clean_mutex;

  auto run_one = [&](std::size_t t) {
    const Task& task = tasks[t];
    const MeshContext& ctx = contexts[task.mesh];
    const OuterConfig& cfg = configs[task.mesh * ns + task.solver];
    RunRecord& rec = result.runs[t];
    rec.mesh = ctx.name;
    rec.solver = cfg.solver_kind;
    rec.noise = spec.noise_levels[task.noise];
    rec.repeat = task.repeat;
    rec.seed = run_seed(spec.seed, rec.solver, rec.noise, rec.repeat);
    rec.lambda = cfg.admm.lambda;
    rec.theta = cfg.admm.effective_theta();
    const auto t0 = std::chrono::steady_clock::now();
    const auto key = std::make_pair(task.mesh, task.solver);
    try {
      std::shared_ptr<const ReconResult> shared;
      if (is_copy(task)) {
        std::lock_guard<std::mutex> lock(clean_mutex);
        const auto it = clean_results.find(key);
        if (it == clean_results.end()) throw std::runtime_error("noise-free reference run failed");
        shared = it->second;
      } else {
        NoiseReport noise_report;
        const BoundaryData data = add_noise(ctx.clean, rec.noise, rec.seed, &noise_report);
        rec.noise_resampled = noise_report.resampled;
        shared = std::make_shared<const ReconResult>(reconstruct(*ctx.model, *ctx.ops, data, cfg));
        if (rec.noise == 0.0 && spec.repeats > 1) {
          std::lock_guard<std::mutex> lock(clean_mutex);
          clean_results[key] = shared;
        }
      }
      const ReconResult& recon = *shared;
      rec.outer_iterations = recon.iterations();
      rec.clamped = recon.clamped;
      const Eigen::VectorXd change = recon.mua - ctx.background.mua;
      try {
        rec.metrics = evaluate(*ctx.mesh, change, ctx.change_truth, spec.region_mode,
                               ctx.mask.empty() ? nullptr : &ctx.mask);
      } catch (const MetricError& e) {
        rec.status = std::string("metric error: ") + e.what();
      }
      if (options.write_outputs && spec.write_fields) {
        const auto dir = out_dir / "runs" / ctx.name / to_string(rec.solver) /
                         ("noise" + noise_label(rec.noise) + "_rep" + std::to_string(rec.repeat));
        const Eigen::VectorXd truth_mua = ctx.truth.mua;
        {
          auto f = open_output(dir / "field.csv");
          write_field_csv({{"mua", &recon.mua}, {"change", &change}, {"truth", &truth_mua}}, f);
        }
        {
          auto f = open_output(dir / "field.vtk");
          write_mesh_vtk(*ctx.mesh, f, {{"mua", &recon.mua}, {"change", &change}, {"truth", &truth_mua}},
                         spec.id);
        }
        {
          auto f = open_output(dir / "trace.csv");
          f << "outer,residual\n";
          for (std::size_t k = 0; k < recon.residuals.size(); ++k)
            f << k + 1 << ',' << format_double(recon.residuals[k]) << '\n';
        }
        {
          auto f = open_output(dir / "inner_trace.csv");
          for (std::size_t k = 0; k < recon.inner_traces.size(); ++k)
            write_trace_csv(recon.inner_traces[k], f, k == 0, std::to_string(k + 1) + ",");
        }
        {
          auto f = open_output(dir / "config.txt");
          auto kv = recon.config;
          kv.emplace_back("mesh", ctx.name);
          kv.emplace_back("noise", format_double(rec.noise));
          kv.emplace_back("repeat", std::to_string(rec.repeat));
          kv.emplace_back("seed", std::to_string(rec.seed));
          kv.emplace_back("initial_residual", format_double(recon.initial_residual));
          kv.emplace_back("outer_iterations", std::to_string(recon.iterations()));
          kv.emplace_back("stop", recon.stop == OuterStop::MaxIterations ? "max_iterations" : "no_improvement");
          kv.emplace_back("clamped", std::to_string(recon.clamped));
          write_key_values(kv, f);
        }
      }
      if (options.keep_results) {
        rec.mua = recon.mua;
        rec.recon = recon;
      }
    } catch (const std::exception& e) {
      rec.status = std::string("failed: ") + e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (char& c : rec.status)
      if (c == '\n' || c == '"') c = ' ';
  };

  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < tasks.size(); ++t)
    if (!is_copy(tasks[t])) order.push_back(t);
  const std::size_t first_phase = order.size();
  for (std::size_t t = 0; t < tasks.size(); ++t)
    if (is_copy(tasks[t])) order.push_back(t);

  std::mutex log_mutex;
  auto run_range = [&](std::size_t begin, std::size_t end) {
    std::atomic<std::size_t> next{begin};
    auto worker = [&] {
      for (std::size_t i = next++; i < end; i = next++) {
        const std::size_t t = order[i];
        run_one(t);
        if (options.verbose) {
          const auto& r = result.runs[t];
          std::lock_guard<std::mutex> lock(log_mutex);
          std::cerr << "[" << t + 1 << "/" << tasks.size() << "] " << r.mesh << ' ' << to_string(r.solver)
                    << " noise " << noise_label(r.noise) << "% rep " << r.repeat << ": " << r.status << " ("
                    << r.seconds << " s)" << std::endl;
        }
      }
    };
    const int nthreads = std::min<int>(spec.workers, static_cast<int>(end - begin));
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < nthreads; ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
  };
  run_range(0, first_phase);
  run_range(first_phase, order.size());

  for (const auto& r : result.runs)
    if (r.status != "ok") ++result.failures;

  if (options.write_outputs) {
    {
      auto f = open_output(out_dir / "metrics.csv");
      write_metrics_csv(spec.id, result.runs, f);
    }
    {
      auto f = open_output(out_dir / "summary.csv");
      write_summary_csv(spec.id, result.runs, f);
    }
    {
      auto f = open_output(out_dir / "config.txt");
      write_key_values(spec_echo(spec), f);
      for (std::size_t m = 0; m < contexts.size(); ++m)
        for (std::size_t s = 0; s < ns; ++s) {
          const std::string prefix = contexts[m].name + "." + to_string(configs[m * ns + s].solver_kind) + ".";
          for (const auto& [k, v] : config_echo(configs[m * ns + s])) f << prefix << k << " = " << v << '\n';
        }
    }
    for (const auto& [key, lc] : result.lcurves) {
      std::string file = key;
      std::replace(file.begin(), file.end(), '/', '_');
      auto f = open_output(out_dir / ("lcurve_" + file + ".csv"));
      f << "lambda,residual_norm,regularizer,curvature,selected\n";
      for (std::size_t i = 0; i < lc.lambdas.size(); ++i)
        f << format_double(lc.lambdas[i]) << ',' << format_double(lc.residual_norms[i]) << ','
          << format_double(lc.regularizer_values[i]) << ',' << format_double(lc.curvature[i]) << ','
          << (static_cast<Index>(i) == lc.index ? 1 : 0) << '\n';
    }
  }
  return result;
}

}  // namespace tvdot
