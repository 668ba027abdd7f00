#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "latentslam/experience_map.hpp"
#include "latentslam/latent_model.hpp"
#include "latentslam/pose_cells.hpp"
#include "latentslam/view_cells.hpp"

namespace latentslam {

struct SlamConfig {
  CANConfig can;
  double match_threshold = 0.10;
  double gate_radius_cells = 4.0;
  int iterations_per_frame = 1;
  bool relax_on_closure = true;
  double relax_alpha = 0.25;
  int relax_iterations = 20;

  ExperienceMapConfig map_config() const;
  void validate() const;
};

/// Everything the per-frame update mutates.
struct SlamState {
  LatentSample prev_latent;
  PoseCellGrid grid;
  ViewCellStore store;
  ExperienceMap map;
  int64_t frame_index = 0;
};

SlamState make_initial_state(const ModelParams& params, const SlamConfig& cfg);

struct FrameReport {
  int64_t frame = 0;
  LatentSample latent;
  MatchResult match;
  Pose2D decoded_pose;
  CellCoords peak;
  MapEvent event = MapEvent::Stay;
};

/// One frame through the full stack: encode, path-integrate, view-cell match
/// (with pose-cell injection on a match), attractor iterate, decode, map
/// update. Errors are rethrown with the frame index attached.
FrameReport process_frame(SlamState& state, const FrameRecord& frame, const ModelParams& params,
                          const SlamConfig& cfg);

struct RunResult {
  SlamState state;
  std::vector<FrameReport> reports;
};

RunResult run_sequence(const FrameSequence& frames, const ModelParams& params, const SlamConfig& cfg);

const char* map_event_name(MapEvent e);

/// One JSON object per line: frame, event, match decision, decoded pose,
/// peak cell, latent code.
void write_reports_jsonl(const std::filesystem::path& path, const std::vector<FrameReport>& reports);

}  // namespace latentslam
