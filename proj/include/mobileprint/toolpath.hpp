#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "mobileprint/core.hpp"
#include "mobileprint/geometry.hpp"

namespace mobileprint {

// Horizontal nozzle-to-base distance the arm can serve.
struct ReachBand {
  double min = 0.25;
  double max = 0.87;
};

inline constexpr double kDefaultStandoff = 0.3;
inline constexpr double kDefaultClearance = 0.2;
inline constexpr double kDefaultInfillSpacing = 1.0;

struct StructureSpec {
  Polygon footprint;
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;
  double layer_height = 0.0;
  double infill_spacing = 0.0;  // 0 = contour only

  // Axis-aligned length x width rectangle with its first vertex at the origin.
  static StructureSpec rectangle(double length, double width, double height,
                                 double layer_height, double infill_spacing = 0.0);

  std::size_t layer_count() const;
  // Throws InvalidSpecError on zero area, non-simple footprint, or a height
  // that is not an integer number of layers.
  void validate() const;
};

// One traversal of the layer pattern, in xy arc length along the whole plan.
struct Lap {
  double start = 0.0;
  double length = 0.0;
  double z = 0.0;
  std::vector<Eigen::Vector2d> polyline;
};

struct NozzlePath {
  PointPath path;
  std::vector<double> progress;  // xy arc length at each sample
  std::vector<Lap> laps;
  double speed = 0.0;

  // Geometry the base circuit is derived from: the CCW footprint for
  // closed prints, or the travelled polyline for open paths.
  std::vector<Eigen::Vector2d> guide;
  bool closed = false;
  std::size_t seam_edge = 0;
  double seam_t = 0.0;

  // Lap containing arc length s (the last lap owns the final point).
  std::size_t lap_index(double s) const;
};

NozzlePath slice_structure(const StructureSpec& spec, double nozzle_speed, double dt);

// Repeats the layer pattern `laps` times at constant height z (air printing).
NozzlePath slice_laps(const StructureSpec& spec, std::size_t laps, double z,
                      double nozzle_speed, double dt);

// Single open lap along a polyline (tests and straight-line prints).
NozzlePath open_nozzle_path(std::span<const Eigen::Vector3d> vertices, double nozzle_speed,
                            double dt);

struct BasePath {
  PosePath path;
  PlanarCurve circuit;
};

BasePath prescribe_base_path(const NozzlePath& nozzle, double standoff, double clearance,
                             const ReachBand& reach = {});

struct PrintPlan {
  NozzlePath nozzle;
  PosePath base;
  PlanarCurve base_circuit;
  double nozzle_speed = 0.0;
  std::size_t layer_count = 0;
  ReachBand reach;

  double duration() const { return nozzle.path.duration(); }
  std::size_t size() const { return nozzle.path.size(); }
};

// Re-times the base along its circuit so that within every lap the base arc
// length is proportional to nozzle arc length, then checks the reach band at
// every index (SynchronizationError names the first violation).
PrintPlan synchronize(const NozzlePath& nozzle, const BasePath& base, const ReachBand& reach = {});

struct PlanningOptions {
  double nozzle_speed = 0.1;
  double dt = 0.025;
  double standoff = kDefaultStandoff;
  double clearance = kDefaultClearance;
  ReachBand reach;
};

PrintPlan plan_print(const StructureSpec& spec, const PlanningOptions& options);
PrintPlan plan_air_laps(const StructureSpec& spec, std::size_t laps,
                        const PlanningOptions& options);

}  // namespace mobileprint
