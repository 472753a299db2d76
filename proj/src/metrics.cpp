#include "tvdot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tvdot {

namespace {

void check_size(const Eigen::VectorXd& v, Index n, const char* what) {
  if (v.size() != n) throw MetricError(std::string(what) + ": field length does not match the mesh");
}

bool selected(const std::vector<bool>* mask, Index i) {
  return mask == nullptr || (*mask)[static_cast<std::size_t>(i)];
}

Eigen::VectorXd weighted_centroid(const Mesh& mesh, const Eigen::VectorXd& control,
                                  const std::vector<Index>& nodes, double* total) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(mesh.dim());
  double m = 0.0;
  for (Index i : nodes) {
    c += control[i] * mesh.nodes().row(i).transpose();
    m += control[i];
  }
  if (total != nullptr) *total = m;
  return c / m;
}

}  // namespace

GroundTruth GroundTruth::shifted(double baseline) const {
  GroundTruth out = *this;
  out.field.array() -= baseline;
  out.anomaly_value -= baseline;
  return out;
}

GroundTruth make_ground_truth(const Mesh& mesh, Eigen::VectorXd field, std::vector<Index> activation,
                              double anomaly_value) {
  check_size(field, mesh.num_nodes(), "make_ground_truth");
  if (activation.empty()) throw MetricError("make_ground_truth: empty activation set");
  std::sort(activation.begin(), activation.end());
  activation.erase(std::unique(activation.begin(), activation.end()), activation.end());
  for (Index i : activation)
    if (i < 0 || i >= mesh.num_nodes()) throw MetricError("make_ground_truth: node index out of range");
  GroundTruth t;
  t.field = std::move(field);
  t.activation = std::move(activation);
  t.anomaly_value = anomaly_value;
  t.centroid = weighted_centroid(mesh, nodal_control_measures(mesh), t.activation, &t.measure);
  return t;
}

RecoveredRegion recovered_region(const Mesh& mesh, const Eigen::VectorXd& field, RegionMode mode,
                                 const std::vector<bool>* mask) {
  check_size(field, mesh.num_nodes(), "recovered_region");
  if (mask != nullptr && static_cast<Index>(mask->size()) != mesh.num_nodes())
    throw MetricError("recovered_region: mask length does not match the mesh");
  auto change = [&](Index i) { return mode == RegionMode::Magnitude ? std::abs(field[i]) : field[i]; };

  double peak = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < field.size(); ++i)
    if (selected(mask, i)) peak = std::max(peak, change(i));
  if (!(peak > 0.0)) throw MetricError("recovered_region: no positive recovered change (empty region)");

  RecoveredRegion r;
  const double threshold = 0.6 * peak;
  for (Index i = 0; i < field.size(); ++i)
    if (selected(mask, i) && change(i) >= threshold) r.nodes.push_back(i);
  r.centroid = weighted_centroid(mesh, nodal_control_measures(mesh), r.nodes, &r.measure);
  return r;
}

double localization_error(const Eigen::VectorXd& truth_centroid,
                          const Eigen::VectorXd& recovered_centroid) {
  if (truth_centroid.size() != recovered_centroid.size())
    throw MetricError("localization_error: dimension mismatch");
  return (truth_centroid - recovered_centroid).norm();
}

ContrastValues average_contrast(const Eigen::VectorXd& field, const std::vector<Index>& region,
                                const GroundTruth& truth) {
  if (region.empty()) throw MetricError("average_contrast: empty region");
  if (field.size() != truth.field.size()) throw MetricError("average_contrast: length mismatch");
  double mean = 0.0, truth_mean = 0.0;
  bool overlaps = false;
  for (Index i : region) {
    mean += field[i];
    truth_mean += truth.field[i];
    overlaps = overlaps || std::binary_search(truth.activation.begin(), truth.activation.end(), i);
  }
  mean /= static_cast<double>(region.size());
  truth_mean /= static_cast<double>(region.size());

  ContrastValues c;
  if (truth_mean != 0.0) c.nodewise = mean / truth_mean;
  const double denom = overlaps ? truth.anomaly_value : truth_mean;
  if (denom == 0.0) throw MetricError("average_contrast: zero ground-truth denominator");
  c.anomaly = mean / denom;
  return c;
}

std::optional<double> psnr(const Eigen::VectorXd& field, const Eigen::VectorXd& truth,
                           const std::vector<bool>* mask) {
  if (field.size() != truth.size() || field.size() == 0) throw MetricError("psnr: length mismatch");
  double peak = -std::numeric_limits<double>::infinity();
  double sse = 0.0;
  Index count = 0;
  for (Index i = 0; i < field.size(); ++i) {
    if (!selected(mask, i)) continue;
    peak = std::max(peak, field[i]);
    const double e = field[i] - truth[i];
    sse += e * e;
    ++count;
  }
  if (count == 0) throw MetricError("psnr: mask selects no nodes");
  const double mse = sse / static_cast<double>(count);
  if (mse == 0.0) return std::nullopt;
  return 10.0 * std::log10(peak * peak / mse);
}

double relative_recovered_volume(double recovered_measure, double truth_measure) {
  if (!(truth_measure > 0.0)) throw MetricError("relative_recovered_volume: truth measure must be positive");
  return recovered_measure / truth_measure * 100.0;
}

double hausdorff_distance(const Mesh& mesh, const std::vector<Index>& a, const std::vector<Index>& b) {
  if (a.empty() || b.empty()) throw MetricError("hausdorff_distance: empty node set");
  auto directed = [&](const std::vector<Index>& from, const std::vector<Index>& to) {
    double worst = 0.0;
    for (Index i : from) {
      double best = std::numeric_limits<double>::infinity();
      for (Index j : to) best = std::min(best, (mesh.nodes().row(i) - mesh.nodes().row(j)).squaredNorm());
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

MetricReport evaluate(const Mesh& mesh, const Eigen::VectorXd& field, const GroundTruth& truth,
                      RegionMode mode, const std::vector<bool>* mask) {
  check_size(truth.field, mesh.num_nodes(), "evaluate");
  const RecoveredRegion region = recovered_region(mesh, field, mode, mask);
  const ContrastValues contrast = average_contrast(field, region.nodes, truth);
  MetricReport r;
  r.localization_error = localization_error(truth.centroid, region.centroid);
  r.average_contrast = contrast.anomaly;
  r.average_contrast_nodewise = contrast.nodewise;
  r.psnr = psnr(field, truth.field, mask);
  r.relative_recovered_volume = relative_recovered_volume(region.measure, truth.measure);
  r.recovered_nodes = static_cast<Index>(region.nodes.size());
  r.hausdorff = hausdorff_distance(mesh, region.nodes, truth.activation);
  return r;
}

}  // namespace tvdot
