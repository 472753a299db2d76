#pragma once

#include "tvdot/metrics.hpp"
#include "tvdot/phantoms.hpp"
#include "tvdot/reconstruct.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tvdot {

struct MeshRecipe {
  std::string name = "mesh";
  std::string generator = "circle";  // circle | layered_disk | file
  double radius = 43.0;
  double target_area = 1.7;
  std::filesystem::path path;        // generator == "file"
};

struct SolverSpec {
  SolverKind kind = SolverKind::IGtv;
  std::optional<double> lambda;  // unset: chosen by L-curve
  std::vector<double> lambda_grid;  // overrides the experiment grid when non-empty
  OuterConfig outer;             // mu0 is filled in per mesh
};

struct IlluminationMask {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
};

struct ExperimentSpec {
  std::string id = "experiment";
  std::uint64_t seed = 1;
  int workers = 1;
  std::filesystem::path output_dir = "out";
  bool write_fields = true;
  std::vector<MeshRecipe> meshes;
  CirclePhantom phantom;
  int fibers = 16;
  double inset = 1.0;
  std::vector<double> noise_levels{0.0, 0.01, 0.02, 0.03};  // fractions
  int repeats = 10;
  std::vector<SolverSpec> solvers;
  std::vector<double> lambda_grid;
  RegionMode region_mode = RegionMode::Positive;
  std::optional<IlluminationMask> mask;

  /// Throws std::invalid_argument on an inconsistent spec.
  void validate() const;
};

/// Parses the JSON experiment description (see README for the schema).
ExperimentSpec parse_experiment_spec(const std::string& json_text,
                                     const std::filesystem::path& base_dir = {});
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// FNV-1a over (master seed, solver name, noise level, repeat index).
std::uint64_t run_seed(std::uint64_t master, SolverKind solver, double noise, int repeat);

struct RunRecord {
  std::string mesh;
  SolverKind solver = SolverKind::IGtv;
  double noise = 0.0;
  int repeat = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double theta = 0.0;
  std::optional<MetricReport> metrics;
  int outer_iterations = 0;
  int clamped = 0;
  int noise_resampled = 0;
  double seconds = 0.0;   // not written to the metrics CSV
  std::string status = "ok";
  Eigen::VectorXd mua;    // final field, kept only when requested
  ReconResult recon;      // kept only when requested
};

struct ExperimentOptions {
  /// Write per-run files and the summary tables under spec.output_dir.
  bool write_outputs = true;
  /// Keep reconstructed fields and full results in the returned records.
  bool keep_results = false;
  /// Progress lines to stderr.
  bool verbose = false;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;       // Cartesian order: mesh, solver, noise, repeat
  int failures = 0;
  std::vector<std::pair<std::string, LCurveResult>> lcurves;  // "<mesh>/<solver>"
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options = {});

/// Metrics CSV in the byte-stable format written by run_experiment.
void write_metrics_csv(const std::string& experiment_id, const std::vector<RunRecord>& runs,
                       std::ostream& out);
/// 25th/50th/75th percentile per (mesh, solver, noise, metric) cell.
void write_summary_csv(const std::string& experiment_id, const std::vector<RunRecord>& runs,
                       std::ostream& out);

/// Linear-interpolation percentile (q in [0, 1]) of unsorted values.
double percentile(std::vector<double> values, double q);

}  // namespace tvdot
