#pragma once

#include <vector>

#include "latentslam/experience_map.hpp"
#include "latentslam/frame.hpp"
#include "latentslam/latent_model.hpp"

namespace latentslam {

/// Integrates body-frame deltas from the origin.
std::vector<Pose2D> dead_reckon(const std::vector<OdometryDelta>& deltas);

/// Re-anchors poses so the first one is the origin.
std::vector<Pose2D> relative_to_first(const std::vector<Pose2D>& poses);

/// Chained posterior-mean encoding of a whole sequence.
std::vector<std::vector<double>> encode_sequence(const FrameSequence& frames, const ModelParams& params);

/// Flattened raw pixels per frame, for the aliasing baseline.
std::vector<std::vector<double>> pixel_codes(const FrameSequence& frames);

struct SeparationConfig {
  double same_radius = 0.5;       // meters: pairs this close (and heading-aligned) are the same place
  double same_theta_tol = 0.7854; // ~45 degrees
  double diff_radius = 2.0;       // meters: pairs farther than this are different places
  int min_frame_gap = 20;         // same-place pairs must be temporally separated revisits
  int max_frames = 400;           // subsample cap so pixel codes stay tractable
};

struct SeparationStats {
  double auc = 0.5;  // P(same-place distance < different-place distance)
  double mean_same = 0.0;
  double mean_diff = 0.0;
  long same_pairs = 0;
  long diff_pairs = 0;
};

/// AUC of same-vs-different place classification by cosine distance.
SeparationStats place_separation(const std::vector<std::vector<double>>& codes,
                                 const std::vector<Pose2D>& gt, const SeparationConfig& cfg);

/// Mean xy error of experience poses against ground truth, both re-anchored
/// at their respective first nodes.
double mean_node_position_error(const ExperienceMap& map, const std::vector<Pose2D>& gt_per_experience);

/// Ground-truth pose at each experience's creation frame.
std::vector<Pose2D> experience_ground_truth(const ExperienceMap& map, const FrameSequence& frames);

}  // namespace latentslam
