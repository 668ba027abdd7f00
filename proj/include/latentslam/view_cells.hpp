#pragma once

#include <cstdint>
#include <vector>

#include "latentslam/pose_cells.hpp"

namespace latentslam {

/// A stored latent template linked to the pose-cell coordinate where it was
/// first seen. Templates never change after creation.
struct ViewCell {
  int id = 0;
  std::vector<double> template_code;
  CellCoords linked_pose_coords;
  int64_t created_at = 0;
};

/// 1 - cos(a, b), in [0, 2]. Rejects near-zero vectors.
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

struct MatchResult {
  int cell_id = -1;
  bool is_new = false;
  double distance = 0.0;  // distance to the matched cell; 0 for a new cell
};

class ViewCellStore {
 public:
  explicit ViewCellStore(double match_threshold = 0.10);

  /// Linear scan over templates. Matches the argmin-distance cell when the
  /// minimum is strictly below the threshold (ties: lowest id); otherwise
  /// appends a new cell built from the latent.
  MatchResult match_or_create(const std::vector<double>& latent, const CellCoords& pose_coords,
                              int64_t frame);

  const ViewCell& cell(int id) const;
  const std::vector<ViewCell>& cells() const { return cells_; }
  size_t size() const { return cells_.size(); }
  double match_threshold() const { return threshold_; }

  /// Used by map-file loading; ids must be dense from 0 in order.
  void restore(std::vector<ViewCell> cells, double threshold);

 private:
  std::vector<ViewCell> cells_;
  double threshold_;
};

struct InjectionRequest {
  CellCoords coords;
  double energy = 0.0;
};

/// The pose-cell injection a matched view cell asks for.
InjectionRequest active_injection(const ViewCell& cell, const CANConfig& cfg);

}  // namespace latentslam
