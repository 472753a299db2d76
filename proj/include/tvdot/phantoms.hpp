#pragma once

#include "tvdot/forward.hpp"
#include "tvdot/mesh.hpp"
#include "tvdot/metrics.hpp"

#include <Eigen/Core>

#include <utility>
#include <vector>

namespace tvdot {

/// Structured disk triangulation centred at the origin: concentric rings of
/// 6k nodes zipped together, giving 6K^2 triangles for K rings. K is chosen
/// so the mean element area is close to `target_element_area`.
Mesh make_circle_mesh(double radius, double target_element_area);

/// Structured cube [0, size]^3 with `cells` cells per side, each split into six tetrahedra.
Mesh make_cube_mesh(int cells, double size);

struct CircleAnomaly {
  Eigen::Vector2d center{-10.0, 10.0};
  double radius = 10.0;
  double mua = 0.03;
};

struct CirclePhantom {
  double background_mua = 0.01;
  double musp = 1.0;
  std::vector<CircleAnomaly> anomalies{CircleAnomaly{}};
};

/// Nodal properties and ground truth for disk-shaped absorbers on a 2D mesh.
/// Nodes within (or on) an anomaly disk take that anomaly's mua.
std::pair<OpticalProperties, GroundTruth> make_circle_truth(const Mesh& mesh,
                                                            const CirclePhantom& phantom = {});

/// `n_fibers` co-located source/detector fibres, equally spaced in angle around
/// the mesh centre, inset by `inset` (one scattering distance) from the outer
/// boundary. Measurements are every ordered pair with source != detector.
ProbeLayout make_ring_layout(const Mesh& mesh, int n_fibers = 16, double inset = 1.0);

struct TissueLayer {
  double outer_radius;
  double mua;
  double musp;
};

/// Five-layer adult head values (scalp, skull, CSF, grey matter, white matter),
/// outermost first, on radii scaled to a 43 mm disk.
std::vector<TissueLayer> default_head_layers();

/// Concentric layered disk. Node region labels run 1 (outermost) .. n (innermost);
/// a node belongs to the innermost layer whose outer radius contains it.
std::pair<Mesh, OpticalProperties> make_layered_disk(const std::vector<TissueLayer>& layers,
                                                     double target_element_area = 1.7);

}  // namespace tvdot
