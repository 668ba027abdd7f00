#include "latentslam/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace latentslam {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string render_map_svg(const ExperienceMap& map, const std::vector<Pose2D>& odometry_overlay) {
  constexpr double kCanvas = 800.0;
  constexpr double kMargin = 40.0;

  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = max_x;
  auto grow = [&](double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  for (const Experience& e : map.experiences()) grow(e.map_pose.x, e.map_pose.y);
  for (const Pose2D& p : odometry_overlay) grow(p.x, p.y);
  if (map.experiences().empty() && odometry_overlay.empty()) {
    min_x = min_y = -1.0;
    max_x = max_y = 1.0;
  }

  const double span = std::max({max_x - min_x, max_y - min_y, 1e-6});
  const double scale = (kCanvas - 2.0 * kMargin) / span;
  auto sx = [&](double x) { return kMargin + (x - min_x) * scale; };
  auto sy = [&](double y) { return kCanvas - kMargin - (y - min_y) * scale; };  // y up

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\"" << kCanvas
      << "\" viewBox=\"0 0 " << kCanvas << " " << kCanvas << "\">\n";
  svg << "  <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  if (!odometry_overlay.empty()) {
    svg << "  <polyline fill=\"none\" stroke=\"#4a7bd0\" stroke-width=\"1\" stroke-dasharray=\"4 3\" points=\"";
    for (size_t i = 0; i < odometry_overlay.size(); ++i) {
      if (i) svg << ' ';
      svg << fmt(sx(odometry_overlay[i].x)) << ',' << fmt(sy(odometry_overlay[i].y));
    }
    svg << "\"/>\n";
  }

  for (const Link& l : map.links()) {
    const Pose2D& a = map.experiences()[l.from_id].map_pose;
    const Pose2D& b = map.experiences()[l.to_id].map_pose;
    if (l.is_loop_closure) {
      svg << "  <line class=\"closure\" x1=\"" << fmt(sx(a.x)) << "\" y1=\"" << fmt(sy(a.y)) << "\" x2=\""
          << fmt(sx(b.x)) << "\" y2=\"" << fmt(sy(b.y)) << "\" stroke=\"#d0342c\" stroke-width=\"1.8\"/>\n";
    } else {
      svg << "  <line x1=\"" << fmt(sx(a.x)) << "\" y1=\"" << fmt(sy(a.y)) << "\" x2=\"" << fmt(sx(b.x))
          << "\" y2=\"" << fmt(sy(b.y)) << "\" stroke=\"#9a9a9a\" stroke-width=\"1\"/>\n";
    }
  }
  for (const Experience& e : map.experiences()) {
    svg << "  <circle cx=\"" << fmt(sx(e.map_pose.x)) << "\" cy=\"" << fmt(sy(e.map_pose.y))
        << "\" r=\"2.2\" fill=\"#2f2f2f\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace latentslam
