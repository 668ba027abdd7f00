#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "latentslam/geometry.hpp"
#include "latentslam/view_cells.hpp"

namespace latentslam {

/// One node: a view cell paired with pose-cell coordinates and a map-frame
/// pose. The map frame is unwrapped (no torus), anchored at the first node.
struct Experience {
  int id = 0;
  Pose2D map_pose;
  int view_cell_id = 0;
  CellCoords pose_coords;
  int visit_count = 1;
  int64_t created_frame = 0;
};

struct Link {
  int from_id = 0;
  int to_id = 0;
  Pose2D relative_pose;  // odometry accumulated between the two activations
  bool is_loop_closure = false;
};

enum class MapEvent { Created, LoopClosure, Stay };

struct ExperienceMapConfig {
  double gate_radius_cells = 4.0;  // pose-cell agreement gate for transitions
  int nx = 40, ny = 40, ntheta = 36;
  double relax_alpha = 0.25;
  int relax_iterations = 20;

  void validate() const;
};

class ExperienceMap {
 public:
  explicit ExperienceMap(ExperienceMapConfig cfg = {});

  /// Per-frame update. Creates a node on a new view cell, transitions to a
  /// pose-agreeing node on a match (loop closure when the target is old), or
  /// stays. A matched view cell whose stored pose disagrees with the decoded
  /// peak spawns a new node sharing the view cell id.
  MapEvent step(const MatchResult& view_match, const DecodedPose& decoded, const CellCoords& peak,
                const OdometryDelta& odometry, int64_t frame);

  /// Damped iterative relaxation. Each iteration moves every node by alpha
  /// times the mean disagreement with its link-implied poses; the step is
  /// halved as needed so the total squared link residual never increases.
  void relax(int iterations, double alpha);
  void relax() { relax(cfg_.relax_iterations, cfg_.relax_alpha); }

  double total_link_residual() const;

  const std::vector<Experience>& experiences() const { return experiences_; }
  const std::vector<Link>& links() const { return links_; }
  int current_experience_id() const { return current_id_; }
  const Pose2D& accumulated_odometry() const { return accumulated_; }
  const ExperienceMapConfig& config() const { return cfg_; }

  /// Used by map-file loading.
  void restore(std::vector<Experience> experiences, std::vector<Link> links, int current_id,
               Pose2D accumulated);

 private:
  ExperienceMapConfig cfg_;
  std::vector<Experience> experiences_;
  std::vector<Link> links_;
  int current_id_ = -1;
  Pose2D accumulated_;  // odometry since the last node transition

  int create_experience(int view_cell_id, const CellCoords& coords, int64_t frame);
  bool link_exists(int from, int to) const;
};

/// Versioned JSON map file holding the experience graph and the view-cell
/// store (templates included). Round trips are lossless.
void save_map(const std::filesystem::path& path, const ExperienceMap& map, const ViewCellStore& store);

struct LoadedMap {
  ExperienceMap map;
  ViewCellStore store;
};

LoadedMap load_map(const std::filesystem::path& path);

/// Edge list for plotting: from_x, from_y, to_x, to_y, is_loop_closure.
void write_edge_csv(const std::filesystem::path& path, const ExperienceMap& map);

struct TopologyMetrics {
  std::optional<double> revisit_match_rate;  // unset when the run has no revisits
  double false_closure_rate = 0.0;
  int node_count = 0;
  int link_count = 0;
  int loop_closure_count = 0;
  int revisit_count = 0;
};

/// Ground-truth quality metrics. gt_poses[i] is the true pose where
/// experience i was created; rho is the place radius in meters; min_id_gap
/// excludes trivially-adjacent nodes from counting as revisits.
TopologyMetrics topology_metrics(const ExperienceMap& map, const std::vector<Pose2D>& gt_poses, double rho,
                                 int min_id_gap);

}  // namespace latentslam
