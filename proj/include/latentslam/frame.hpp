#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "latentslam/geometry.hpp"

namespace latentslam {

/// Image dimensions for a dataset. Channel-last, row-major.
struct ImageShape {
  int height = 64;
  int width = 64;
  int channels = 3;

  int pixel_count() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

/// Camera image with entries in [0,1], stored row-major H x W x C.
struct Observation {
  ImageShape shape;
  std::vector<double> pixels;

  Observation() = default;
  Observation(ImageShape s, std::vector<double> px) : shape(s), pixels(std::move(px)) {
    if (static_cast<int>(pixels.size()) != shape.pixel_count()) {
      throw std::invalid_argument("Observation: pixel buffer does not match shape");
    }
    for (double v : pixels) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("Observation: pixel outside [0,1]");
      }
    }
  }

  double& at(int r, int c, int ch) { return pixels[(static_cast<size_t>(r) * shape.width + c) * shape.channels + ch]; }
  double at(int r, int c, int ch) const { return pixels[(static_cast<size_t>(r) * shape.width + c) * shape.channels + ch]; }
};

/// Control vector applied between the previous frame and this one.
struct Action {
  std::vector<double> controls;

  Action() = default;
  explicit Action(std::vector<double> c) : controls(std::move(c)) {
    for (double v : controls) {
      if (!std::isfinite(v)) throw std::invalid_argument("Action: non-finite control");
    }
  }

  int dim() const { return static_cast<int>(controls.size()); }
};

/// One timestep of a recorded or simulated flight.
struct FrameRecord {
  int64_t t = 0;
  Observation observation;
  Action action;
  OdometryDelta odometry;
  std::optional<Pose2D> ground_truth;
};

using FrameSequence = std::vector<FrameRecord>;

}  // namespace latentslam
