#include "latentslam/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "latentslam/view_cells.hpp"

namespace latentslam {

std::vector<Pose2D> dead_reckon(const std::vector<OdometryDelta>& deltas) {
  std::vector<Pose2D> out;
  out.reserve(deltas.size());
  Pose2D p;
  for (const OdometryDelta& d : deltas) {
    p = compose(p, d);
    out.push_back(p);
  }
  return out;
}

std::vector<Pose2D> relative_to_first(const std::vector<Pose2D>& poses) {
  std::vector<Pose2D> out;
  out.reserve(poses.size());
  if (poses.empty()) return out;
  const Pose2D anchor = inverse(poses.front());
  for (const Pose2D& p : poses) out.push_back(compose(anchor, p));
  return out;
}

std::vector<std::vector<double>> encode_sequence(const FrameSequence& frames, const ModelParams& params) {
  std::vector<std::vector<double>> out;
  out.reserve(frames.size());
  LatentSample prev = LatentSample::zeros(params.arch.latent_dim);
  for (const FrameRecord& f : frames) {
    prev = encode(prev, f.action, f.observation, params);
    out.push_back(prev.values);
  }
  return out;
}

std::vector<std::vector<double>> pixel_codes(const FrameSequence& frames) {
  std::vector<std::vector<double>> out;
  out.reserve(frames.size());
  for (const FrameRecord& f : frames) out.push_back(f.observation.pixels);
  return out;
}

SeparationStats place_separation(const std::vector<std::vector<double>>& codes,
                                 const std::vector<Pose2D>& gt, const SeparationConfig& cfg) {
  if (codes.size() != gt.size()) throw std::invalid_argument("place_separation: codes/gt size mismatch");
  const int n = static_cast<int>(codes.size());
  if (n < 2) throw std::invalid_argument("place_separation: need at least two frames");

  // deterministic frame subsampling
  const int stride = std::max(1, (n + cfg.max_frames - 1) / cfg.max_frames);
  std::vector<int> idx;
  for (int i = 0; i < n; i += stride) idx.push_back(i);

  std::vector<double> same_d, diff_d;
  double sum_same = 0.0, sum_diff = 0.0;
  for (size_t a = 0; a < idx.size(); ++a) {
    for (size_t b = a + 1; b < idx.size(); ++b) {
      const int i = idx[a], j = idx[b];
      const double xy = euclidean_xy(gt[i], gt[j]);
      const double dth = std::abs(wrap_angle(gt[i].theta - gt[j].theta));
      const bool same = xy < cfg.same_radius && dth <= cfg.same_theta_tol && (j - i) >= cfg.min_frame_gap;
      const bool diff = xy > cfg.diff_radius;
      if (!same && !diff) continue;
      const double d = cosine_distance(codes[i], codes[j]);
      if (same) {
        same_d.push_back(d);
        sum_same += d;
      } else {
        diff_d.push_back(d);
        sum_diff += d;
      }
    }
  }

  SeparationStats stats;
  stats.same_pairs = static_cast<long>(same_d.size());
  stats.diff_pairs = static_cast<long>(diff_d.size());
  if (same_d.empty() || diff_d.empty()) return stats;  // AUC stays at the 0.5 prior
  stats.mean_same = sum_same / static_cast<double>(same_d.size());
  stats.mean_diff = sum_diff / static_cast<double>(diff_d.size());

  std::sort(diff_d.begin(), diff_d.end());
  double wins = 0.0;
  for (double d : same_d) {
    const auto lo = std::lower_bound(diff_d.begin(), diff_d.end(), d);
    const auto hi = std::upper_bound(diff_d.begin(), diff_d.end(), d);
    const double greater = static_cast<double>(diff_d.end() - hi);
    const double ties = static_cast<double>(hi - lo);
    wins += greater + 0.5 * ties;
  }
  stats.auc = wins / (static_cast<double>(same_d.size()) * static_cast<double>(diff_d.size()));
  return stats;
}

double mean_node_position_error(const ExperienceMap& map, const std::vector<Pose2D>& gt_per_experience) {
  const auto& exps = map.experiences();
  if (exps.empty()) throw std::invalid_argument("mean_node_position_error: empty map");
  if (gt_per_experience.size() != exps.size()) {
    throw std::invalid_argument("mean_node_position_error: ground truth count mismatch");
  }
  const Pose2D map_anchor = inverse(exps.front().map_pose);
  const Pose2D gt_anchor = inverse(gt_per_experience.front());
  double sum = 0.0;
  for (size_t i = 0; i < exps.size(); ++i) {
    const Pose2D m = compose(map_anchor, exps[i].map_pose);
    const Pose2D g = compose(gt_anchor, gt_per_experience[i]);
    sum += euclidean_xy(m, g);
  }
  return sum / static_cast<double>(exps.size());
}

std::vector<Pose2D> experience_ground_truth(const ExperienceMap& map, const FrameSequence& frames) {
  std::vector<Pose2D> out;
  out.reserve(map.experiences().size());
  for (const Experience& e : map.experiences()) {
    if (e.created_frame < 0 || static_cast<size_t>(e.created_frame) >= frames.size()) {
      throw std::invalid_argument("experience_ground_truth: creation frame out of range");
    }
    const auto& gt = frames[static_cast<size_t>(e.created_frame)].ground_truth;
    if (!gt) throw std::invalid_argument("experience_ground_truth: missing ground truth");
    out.push_back(*gt);
  }
  return out;
}

}  // namespace latentslam
