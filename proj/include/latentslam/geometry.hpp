#pragma once

#include <cmath>
#include <stdexcept>

namespace latentslam {

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into [-pi, pi). Throws on non-finite input.
inline double wrap_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  double r = std::fmod(theta + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  return r - kPi;
}

/// Planar pose, theta kept in [-pi, pi).
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}
};

/// Body-frame per-frame odometry increment (dx forward, dy lateral).
struct OdometryDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  OdometryDelta() = default;
  OdometryDelta(double dx_, double dy_, double dtheta_) : dx(dx_), dy(dy_), dtheta(wrap_angle(dtheta_)) {
    if (!std::isfinite(dx) || !std::isfinite(dy)) {
      throw std::invalid_argument("OdometryDelta: non-finite translation");
    }
  }
};

/// Rigid 2D composition: apply a body-frame delta to a pose.
inline Pose2D compose(const Pose2D& p, const OdometryDelta& d) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return Pose2D(p.x + c * d.dx - s * d.dy, p.y + s * d.dx + c * d.dy, p.theta + d.dtheta);
}

/// Composition of two poses treated as rigid transforms (a then b-in-a's-frame).
inline Pose2D compose(const Pose2D& a, const Pose2D& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return Pose2D(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta);
}

/// Inverse transform: inverse(p) composed with p is the identity.
inline Pose2D inverse(const Pose2D& p) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return Pose2D(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta);
}

/// b expressed in the frame of a: compose(a, between(a, b)) == b.
inline Pose2D between(const Pose2D& a, const Pose2D& b) {
  return compose(inverse(a), b);
}

inline double euclidean_xy(const Pose2D& a, const Pose2D& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace latentslam
