#pragma once

#include "tvdot/mesh.hpp"

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <vector>

namespace tvdot {

class MetricError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Reference field plus its activation region.
struct GroundTruth {
  Eigen::VectorXd field;
  std::vector<Index> activation;  // sorted node indices of the true anomaly
  Eigen::VectorXd centroid;       // X_s, control-measure weighted
  double measure = 0.0;           // V_s
  double anomaly_value = 0.0;     // truth value inside the activation region

  /// Same truth expressed relative to `baseline` (field and anomaly value shifted).
  GroundTruth shifted(double baseline) const;
};

/// Builds a GroundTruth from a field and its activation node set.
GroundTruth make_ground_truth(const Mesh& mesh, Eigen::VectorXd field, std::vector<Index> activation,
                              double anomaly_value);

enum class RegionMode { Positive, Magnitude };

struct RecoveredRegion {
  std::vector<Index> nodes;  // sorted
  Eigen::VectorXd centroid;  // X_r
  double measure = 0.0;      // V_r
};

/// Nodes whose recovered change reaches 60% of the maximum recovered change.
/// Positive mode thresholds the signed change, Magnitude its absolute value.
/// An optional node mask restricts the candidate set.
RecoveredRegion recovered_region(const Mesh& mesh, const Eigen::VectorXd& field,
                                 RegionMode mode = RegionMode::Positive,
                                 const std::vector<bool>* mask = nullptr);

double localization_error(const Eigen::VectorXd& truth_centroid,
                          const Eigen::VectorXd& recovered_centroid);

struct ContrastValues {
  /// Denominator: the truth anomaly value when the region overlaps the
  /// activation set, otherwise the node-wise truth mean.
  double anomaly = 0.0;
  /// Denominator: mean truth over the recovered region; empty when that mean is 0.
  std::optional<double> nodewise;
};

/// Mean recovered value over `region` divided by the truth value there.
/// Throws MetricError on an empty region or a zero denominator.
ContrastValues average_contrast(const Eigen::VectorXd& field, const std::vector<Index>& region,
                                const GroundTruth& truth);

/// 10 log10(max(field)^2 / MSE); empty when the MSE is zero. The mask, if
/// given, restricts both the maximum and the MSE to the selected nodes.
std::optional<double> psnr(const Eigen::VectorXd& field, const Eigen::VectorXd& truth,
                           const std::vector<bool>* mask = nullptr);

/// V_r / V_s * 100. Throws MetricError when V_s is not positive.
double relative_recovered_volume(double recovered_measure, double truth_measure);

/// Symmetric Hausdorff distance between two node sets of the same mesh.
double hausdorff_distance(const Mesh& mesh, const std::vector<Index>& a, const std::vector<Index>& b);

struct MetricReport {
  double localization_error = 0.0;
  double average_contrast = 0.0;
  std::optional<double> average_contrast_nodewise;
  std::optional<double> psnr;
  double relative_recovered_volume = 0.0;
  Index recovered_nodes = 0;
  double hausdorff = 0.0;
};

/// All metrics for one reconstruction. `field` and `truth` must share a baseline
/// (typically both expressed as changes from the background).
MetricReport evaluate(const Mesh& mesh, const Eigen::VectorXd& field, const GroundTruth& truth,
                      RegionMode mode = RegionMode::Positive,
                      const std::vector<bool>* mask = nullptr);

}  // namespace tvdot
