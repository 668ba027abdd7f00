#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "latentslam/geometry.hpp"

namespace latentslam {

/// Integer pose-cell coordinate (x, y, theta axes).
struct CellCoords {
  int ix = 0;
  int iy = 0;
  int itheta = 0;
  bool operator==(const CellCoords&) const = default;
};

struct CANConfig {
  int nx = 40;
  int ny = 40;
  int ntheta = 36;
  double cell_size_xy = 0.5;           // meters per cell
  double excite_sigma_xy = 1.0;        // cells
  double excite_sigma_theta = 1.0;     // cells
  double inhibit_amount = 2e-5;
  double injection_energy = 0.1;

  double cell_size_theta() const { return 2.0 * kPi / ntheta; }
  void validate() const;
};

/// Non-negative activity volume over (x, y, theta); all axes wrap.
/// Activity sums to 1 after every operation.
struct PoseCellGrid {
  int nx = 0, ny = 0, ntheta = 0;
  double cell_size_xy = 0.0;
  double cell_size_theta = 0.0;
  std::vector<double> activity;  // index = (itheta * ny + iy) * nx + ix

  static PoseCellGrid make(const CANConfig& cfg);
  /// Uniform start is symmetric; callers normally inject a seed spike.
  static PoseCellGrid make_with_spike(const CANConfig& cfg, const CellCoords& at);

  size_t index(int ix, int iy, int itheta) const {
    return (static_cast<size_t>(itheta) * ny + iy) * nx + ix;
  }
  double& at(int ix, int iy, int itheta) { return activity[index(ix, iy, itheta)]; }
  double at(int ix, int iy, int itheta) const { return activity[index(ix, iy, itheta)]; }
  double total() const;
};

struct DecodedPose {
  Pose2D pose;
  CellCoords peak;
};

/// One attractor step: wrapped Gaussian excitation, constant inhibition,
/// rectification, divisive normalization.
PoseCellGrid iterate(const PoseCellGrid& grid, const CANConfig& cfg);

/// Shift activity by a body-frame odometry increment. The translation is
/// rotated into the grid frame by the currently decoded heading; fractional
/// shifts use wrapped trilinear interpolation and conserve total activity.
PoseCellGrid path_integrate(const PoseCellGrid& grid, const OdometryDelta& delta, const CANConfig& cfg);

/// Add energy at one cell, then renormalize to unit total.
PoseCellGrid inject(const PoseCellGrid& grid, const CellCoords& coords, double energy, const CANConfig& cfg);

/// Peak cell (ties broken by lowest linear index) refined by an
/// activity-weighted circular centroid over a 3-cell-radius neighborhood.
DecodedPose decode_pose(const PoseCellGrid& grid);

/// Wrapped absolute difference in cells along an axis of size n.
double wrapped_cell_distance(int a, int b, int n);

/// Euclidean distance between cell coordinates with all axes wrapped.
double coords_distance(const CellCoords& a, const CellCoords& b, int nx, int ny, int ntheta);

}  // namespace latentslam
