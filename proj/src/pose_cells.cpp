#include "latentslam/pose_cells.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace latentslam {

void CANConfig::validate() const {
  if (nx < 3 || ny < 3 || ntheta < 3) throw std::invalid_argument("CANConfig: dimensions must be >= 3");
  if (!(cell_size_xy > 0.0)) throw std::invalid_argument("CANConfig: cell_size_xy must be > 0");
  if (!(excite_sigma_xy > 0.0) || !(excite_sigma_theta > 0.0)) {
    throw std::invalid_argument("CANConfig: excitation sigmas must be > 0");
  }
  if (inhibit_amount < 0.0) throw std::invalid_argument("CANConfig: inhibit_amount must be >= 0");
  if (!(injection_energy > 0.0)) throw std::invalid_argument("CANConfig: injection_energy must be > 0");
}

PoseCellGrid PoseCellGrid::make(const CANConfig& cfg) {
  cfg.validate();
  PoseCellGrid g;
  g.nx = cfg.nx;
  g.ny = cfg.ny;
  g.ntheta = cfg.ntheta;
  g.cell_size_xy = cfg.cell_size_xy;
  g.cell_size_theta = cfg.cell_size_theta();
  const size_t n = static_cast<size_t>(cfg.nx) * cfg.ny * cfg.ntheta;
  g.activity.assign(n, 1.0 / static_cast<double>(n));
  return g;
}

PoseCellGrid PoseCellGrid::make_with_spike(const CANConfig& cfg, const CellCoords& at) {
  PoseCellGrid g = make(cfg);
  std::fill(g.activity.begin(), g.activity.end(), 0.0);
  g.at(at.ix, at.iy, at.itheta) = 1.0;
  return g;
}

double PoseCellGrid::total() const { return std::accumulate(activity.begin(), activity.end(), 0.0); }

namespace {

void check_grid(const PoseCellGrid& g, const CANConfig& cfg) {
  if (g.nx != cfg.nx || g.ny != cfg.ny || g.ntheta != cfg.ntheta) {
    throw std::invalid_argument("pose_cells: grid dimensions do not match config");
  }
  if (g.activity.size() != static_cast<size_t>(g.nx) * g.ny * g.ntheta) {
    throw std::invalid_argument("pose_cells: activity buffer size mismatch");
  }
}

/// Normalized 1D Gaussian taps at integer offsets -r..r.
std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int o = -r; o <= r; ++o) {
    k[o + r] = std::exp(-0.5 * (o * o) / (sigma * sigma));
    total += k[o + r];
  }
  for (double& v : k) v /= total;
  return k;
}

/// In-place wrapped 1D convolution along one axis of the volume.
/// axis: 0 = x, 1 = y, 2 = theta.
void convolve_axis(std::vector<double>& a, int nx, int ny, int nt, int axis,
                   const std::vector<double>& kernel) {
  const int r = (static_cast<int>(kernel.size()) - 1) / 2;
  const int n = axis == 0 ? nx : (axis == 1 ? ny : nt);
  std::vector<double> line(n);
  std::vector<double> out(n);

  auto run_lines = [&](auto&& index_of) {
    for (int i = 0; i < n; ++i) line[i] = a[index_of(i)];
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int o = -r; o <= r; ++o) {
        int j = (i - o) % n;
        if (j < 0) j += n;
        s += kernel[o + r] * line[j];
      }
      out[i] = s;
    }
    for (int i = 0; i < n; ++i) a[index_of(i)] = out[i];
  };

  if (axis == 0) {
    for (int t = 0; t < nt; ++t) {
      for (int y = 0; y < ny; ++y) {
        const size_t base = (static_cast<size_t>(t) * ny + y) * nx;
        run_lines([&](int i) { return base + i; });
      }
    }
  } else if (axis == 1) {
    for (int t = 0; t < nt; ++t) {
      for (int x = 0; x < nx; ++x) {
        const size_t base = static_cast<size_t>(t) * ny * nx + x;
        run_lines([&](int i) { return base + static_cast<size_t>(i) * nx; });
      }
    }
  } else {
    const size_t plane = static_cast<size_t>(ny) * nx;
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const size_t base = static_cast<size_t>(y) * nx + x;
        run_lines([&](int i) { return base + static_cast<size_t>(i) * plane; });
      }
    }
  }
}

/// Wrapped 1D shift by a fractional amount with linear interpolation.
void shift_axis(std::vector<double>& a, int nx, int ny, int nt, int axis, double shift) {
  const int n = axis == 0 ? nx : (axis == 1 ? ny : nt);
  const double sf = std::floor(shift);
  int k = static_cast<int>(sf) % n;
  if (k < 0) k += n;
  const double f = shift - sf;

  std::vector<double> line(n);
  std::vector<double> out(n);
  auto run_lines = [&](auto&& index_of) {
    for (int i = 0; i < n; ++i) line[i] = a[index_of(i)];
    for (int i = 0; i < n; ++i) {
      int j0 = (i - k) % n;
      if (j0 < 0) j0 += n;
      int j1 = j0 - 1;
      if (j1 < 0) j1 += n;
      out[i] = (1.0 - f) * line[j0] + f * line[j1];
    }
    for (int i = 0; i < n; ++i) a[index_of(i)] = out[i];
  };

  if (axis == 0) {
    for (int t = 0; t < nt; ++t) {
      for (int y = 0; y < ny; ++y) {
        const size_t base = (static_cast<size_t>(t) * ny + y) * nx;
        run_lines([&](int i) { return base + i; });
      }
    }
  } else if (axis == 1) {
    for (int t = 0; t < nt; ++t) {
      for (int x = 0; x < nx; ++x) {
        const size_t base = static_cast<size_t>(t) * ny * nx + x;
        run_lines([&](int i) { return base + static_cast<size_t>(i) * nx; });
      }
    }
  } else {
    const size_t plane = static_cast<size_t>(ny) * nx;
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        const size_t base = static_cast<size_t>(y) * nx + x;
        run_lines([&](int i) { return base + static_cast<size_t>(i) * plane; });
      }
    }
  }
}

}  // namespace

PoseCellGrid iterate(const PoseCellGrid& grid, const CANConfig& cfg) {
  check_grid(grid, cfg);
  PoseCellGrid out = grid;
  // separable wrapped Gaussian: the 3D kernel is the outer product of the
  // per-axis kernels, so three 1D passes equal the full convolution
  const auto kxy = gaussian_kernel(cfg.excite_sigma_xy);
  const auto kth = gaussian_kernel(cfg.excite_sigma_theta);
  convolve_axis(out.activity, out.nx, out.ny, out.ntheta, 0, kxy);
  convolve_axis(out.activity, out.nx, out.ny, out.ntheta, 1, kxy);
  convolve_axis(out.activity, out.nx, out.ny, out.ntheta, 2, kth);

  double total = 0.0;
  for (double& v : out.activity) {
    v = std::max(0.0, v - cfg.inhibit_amount);
    total += v;
  }
  if (!(total > 0.0)) {
    throw std::runtime_error("iterate: all activity inhibited away (degenerate configuration)");
  }
  const double inv = 1.0 / total;
  for (double& v : out.activity) v *= inv;
  return out;
}

PoseCellGrid path_integrate(const PoseCellGrid& grid, const OdometryDelta& delta, const CANConfig& cfg) {
  check_grid(grid, cfg);
  const double theta = decode_pose(grid).pose.theta;
  const double c = std::cos(theta), s = std::sin(theta);
  const double gx = c * delta.dx - s * delta.dy;
  const double gy = s * delta.dx + c * delta.dy;

  PoseCellGrid out = grid;
  shift_axis(out.activity, out.nx, out.ny, out.ntheta, 0, gx / grid.cell_size_xy);
  shift_axis(out.activity, out.nx, out.ny, out.ntheta, 1, gy / grid.cell_size_xy);
  shift_axis(out.activity, out.nx, out.ny, out.ntheta, 2, delta.dtheta / grid.cell_size_theta);
  return out;
}

PoseCellGrid inject(const PoseCellGrid& grid, const CellCoords& coords, double energy, const CANConfig& cfg) {
  check_grid(grid, cfg);
  if (coords.ix < 0 || coords.ix >= grid.nx || coords.iy < 0 || coords.iy >= grid.ny ||
      coords.itheta < 0 || coords.itheta >= grid.ntheta) {
    throw std::invalid_argument("inject: coordinates out of range");
  }
  if (!(energy > 0.0)) throw std::invalid_argument("inject: energy must be > 0");
  PoseCellGrid out = grid;
  out.at(coords.ix, coords.iy, coords.itheta) += energy;
  const double total = out.total();
  const double inv = 1.0 / total;
  for (double& v : out.activity) v *= inv;
  return out;
}

DecodedPose decode_pose(const PoseCellGrid& grid) {
  double best = -1.0;
  size_t best_idx = 0;
  for (size_t i = 0; i < grid.activity.size(); ++i) {
    if (grid.activity[i] > best) {
      best = grid.activity[i];
      best_idx = i;
    }
  }
  if (!(best > 0.0)) throw std::runtime_error("decode_pose: grid has no activity");

  CellCoords peak;
  peak.ix = static_cast<int>(best_idx % grid.nx);
  peak.iy = static_cast<int>((best_idx / grid.nx) % grid.ny);
  peak.itheta = static_cast<int>(best_idx / (static_cast<size_t>(grid.nx) * grid.ny));

  // activity-weighted centroid over a wrapped radius-3 box around the peak;
  // the radius is clamped so no cell is visited twice on small grids
  const int Rx = std::min(3, (grid.nx - 1) / 2);
  const int Ry = std::min(3, (grid.ny - 1) / 2);
  const int Rt = std::min(3, (grid.ntheta - 1) / 2);
  double wsum = 0.0, ox = 0.0, oy = 0.0, ot = 0.0;
  for (int dt = -Rt; dt <= Rt; ++dt) {
    int t = (peak.itheta + dt) % grid.ntheta;
    if (t < 0) t += grid.ntheta;
    for (int dy = -Ry; dy <= Ry; ++dy) {
      int y = (peak.iy + dy) % grid.ny;
      if (y < 0) y += grid.ny;
      for (int dx = -Rx; dx <= Rx; ++dx) {
        int x = (peak.ix + dx) % grid.nx;
        if (x < 0) x += grid.nx;
        const double w = grid.at(x, y, t);
        wsum += w;
        ox += w * dx;
        oy += w * dy;
        ot += w * dt;
      }
    }
  }
  const double cx = peak.ix + ox / wsum;
  const double cy = peak.iy + oy / wsum;
  const double ct = peak.itheta + ot / wsum;

  DecodedPose out;
  out.peak = peak;
  out.pose = Pose2D(cx * grid.cell_size_xy, cy * grid.cell_size_xy, wrap_angle(ct * grid.cell_size_theta));
  return out;
}

double wrapped_cell_distance(int a, int b, int n) {
  int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

double coords_distance(const CellCoords& a, const CellCoords& b, int nx, int ny, int ntheta) {
  const double dx = wrapped_cell_distance(a.ix, b.ix, nx);
  const double dy = wrapped_cell_distance(a.iy, b.iy, ny);
  const double dt = wrapped_cell_distance(a.itheta, b.itheta, ntheta);
  return std::sqrt(dx * dx + dy * dy + dt * dt);
}

}  // namespace latentslam
