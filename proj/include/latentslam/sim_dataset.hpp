#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentslam/frame.hpp"

namespace latentslam {

/// Procedural warehouse: parallel aisles along +x, connected by cross
/// corridors past both ends. Rendering is a pure function of (pose, spec,
/// texture seed); aliasing_level 1 makes corresponding positions in
/// different aisles pixel-identical.
struct WarehouseSpec {
  int num_aisles = 3;
  double aisle_length = 12.0;   // meters
  double aisle_spacing = 2.0;   // meters between aisle centerlines
  uint64_t texture_seed = 7;
  double aliasing_level = 0.9;  // 1 = aisles indistinguishable
  ImageShape obs_shape{64, 64, 3};
  int action_dim = 4;           // forward, lateral, vertical, yaw-rate
  double step_length = 0.1;     // meters of travel per frame
  double action_noise_std = 0.02;

  double corridor_half_width() const { return 0.4 * aisle_spacing; }
  double end_margin() const { return 1.0; }
  void validate() const;
};

struct OdometryNoiseSpec {
  double gaussian_std_xy = 0.0;     // meters, per frame component
  double gaussian_std_theta = 0.0;  // radians, per frame
  double reset_probability = 0.0;   // per-frame chance of a dead-reckoning reset

  void validate() const;
};

struct Trajectory {
  std::vector<Pose2D> poses;
  std::vector<Action> actions;        // actions[t] drives the step t-1 -> t; actions[0] is zero
  std::vector<OdometryDelta> deltas;  // true body-frame increments; deltas[0] is zero
};

/// Constant-speed polyline walk through the waypoints with smoothed heading.
/// The final waypoint is always sampled exactly.
Trajectory generate_trajectory(const WarehouseSpec& spec, const std::vector<Pose2D>& waypoints,
                               uint64_t seed);

/// A closed circuit covering the first three aisles (out along aisle 0,
/// cross, back along aisle 1, cross, out along aisle 2, return through
/// aisle 0), repeated `loops` times. Every lap repeats the same headings.
std::vector<Pose2D> default_loop_plan(const WarehouseSpec& spec, int loops);

/// Raycast view down the aisle nearest to the pose. Quantized to 8-bit
/// levels so PNG round trips are exact.
Observation render_observation(const Pose2D& pose, const WarehouseSpec& spec, uint64_t seed);

bool pose_in_bounds(const Pose2D& pose, const WarehouseSpec& spec);

struct CorruptedOdometry {
  std::vector<OdometryDelta> deltas;
  std::vector<uint8_t> reset_flags;  // evaluation only, never fed to the pipeline
};

/// Seeded Gaussian noise per component; with reset_probability per frame the
/// emitted delta instead snaps the dead-reckoned position (not orientation)
/// back to the origin. Extra reset frames can be forced for tests.
CorruptedOdometry corrupt_odometry(const std::vector<OdometryDelta>& true_deltas,
                                   const OdometryNoiseSpec& noise, uint64_t seed,
                                   const std::vector<int64_t>& force_reset_frames = {});

/// One recorded sequence plus the generation metadata echoed in its manifest.
struct SequenceData {
  std::string name;
  FrameSequence frames;
  WarehouseSpec spec;
  OdometryNoiseSpec noise;
  uint64_t seed = 0;
  std::vector<uint8_t> reset_flags;
};

/// Full generation pipeline: trajectory -> rendered frames -> corrupted
/// odometry. Ground truth is attached to every frame.
SequenceData generate_sequence(const WarehouseSpec& spec, const OdometryNoiseSpec& noise,
                               const std::vector<Pose2D>& waypoints, uint64_t seed,
                               const std::string& name = "seq_000");

/// Directory layout: top-level manifest.json naming the sequences; each
/// sequence directory holds manifest.json, odometry.csv, resets.csv and
/// frames/%06d.png. load_dataset also accepts a bare sequence directory.
void save_dataset(const std::filesystem::path& dir, const std::vector<SequenceData>& sequences);
std::vector<SequenceData> load_dataset(const std::filesystem::path& dir);

}  // namespace latentslam
