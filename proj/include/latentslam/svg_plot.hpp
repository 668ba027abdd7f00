#pragma once

#include <string>
#include <vector>

#include "latentslam/experience_map.hpp"

namespace latentslam {

/// Self-contained SVG: experience nodes as circles, links as segments with
/// loop closures highlighted, and an optional dead-reckoning overlay.
/// Deterministic output (fixed-precision coordinates) for golden-file tests.
std::string render_map_svg(const ExperienceMap& map, const std::vector<Pose2D>& odometry_overlay = {});

}  // namespace latentslam
