#include "latentslam/sim_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "latentslam/png_io.hpp"
#include "latentslam/rng.hpp"

namespace latentslam {

using ordered_json = nlohmann::ordered_json;

void WarehouseSpec::validate() const {
  if (num_aisles < 2) throw std::invalid_argument("WarehouseSpec: need at least 2 aisles");
  if (!(aisle_length > 1.0)) throw std::invalid_argument("WarehouseSpec: aisle_length too short");
  if (!(aisle_spacing > 0.5)) throw std::invalid_argument("WarehouseSpec: aisle_spacing too small");
  if (!(aliasing_level >= 0.0 && aliasing_level <= 1.0)) {
    throw std::invalid_argument("WarehouseSpec: aliasing_level must be in [0,1]");
  }
  if (obs_shape.channels != 1 && obs_shape.channels != 3) {
    throw std::invalid_argument("WarehouseSpec: observations must be grayscale or RGB");
  }
  if (obs_shape.height < 4 || obs_shape.width < 4) throw std::invalid_argument("WarehouseSpec: image too small");
  if (action_dim < 1) throw std::invalid_argument("WarehouseSpec: action_dim must be >= 1");
  if (!(step_length > 0.0)) throw std::invalid_argument("WarehouseSpec: step_length must be > 0");
  if (action_noise_std < 0.0) throw std::invalid_argument("WarehouseSpec: action_noise_std must be >= 0");
}

void OdometryNoiseSpec::validate() const {
  if (gaussian_std_xy < 0.0 || gaussian_std_theta < 0.0) {
    throw std::invalid_argument("OdometryNoiseSpec: negative noise std");
  }
  if (!(reset_probability >= 0.0 && reset_probability < 1.0)) {
    throw std::invalid_argument("OdometryNoiseSpec: reset_probability must be in [0,1)");
  }
}

bool pose_in_bounds(const Pose2D& pose, const WarehouseSpec& spec) {
  const double hw = spec.corridor_half_width();
  const double ymax = (spec.num_aisles - 1) * spec.aisle_spacing + hw;
  return pose.x >= -spec.end_margin() && pose.x <= spec.aisle_length + spec.end_margin() &&
         pose.y >= -hw && pose.y <= ymax;
}

// --- trajectory -----------------------------------------------------------------

Trajectory generate_trajectory(const WarehouseSpec& spec, const std::vector<Pose2D>& waypoints,
                               uint64_t seed) {
  spec.validate();
  if (waypoints.empty()) throw std::invalid_argument("generate_trajectory: empty waypoint list");
  for (const Pose2D& w : waypoints) {
    if (!pose_in_bounds(w, spec)) {
      throw std::invalid_argument("generate_trajectory: waypoint outside the warehouse");
    }
  }

  // arc-length walk along the waypoint polyline
  std::vector<double> seg_len;
  double total = 0.0;
  for (size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const double d = std::hypot(waypoints[i + 1].x - waypoints[i].x, waypoints[i + 1].y - waypoints[i].y);
    seg_len.push_back(d);
    total += d;
  }

  std::vector<std::pair<double, double>> positions;  // (x, y)
  auto point_at = [&](double s) {
    double acc = 0.0;
    for (size_t i = 0; i < seg_len.size(); ++i) {
      if (s <= acc + seg_len[i] || i + 1 == seg_len.size()) {
        const double f = seg_len[i] > 0.0 ? std::clamp((s - acc) / seg_len[i], 0.0, 1.0) : 0.0;
        return std::pair<double, double>{waypoints[i].x + f * (waypoints[i + 1].x - waypoints[i].x),
                                         waypoints[i].y + f * (waypoints[i + 1].y - waypoints[i].y)};
      }
      acc += seg_len[i];
    }
    return std::pair<double, double>{waypoints.back().x, waypoints.back().y};
  };

  if (total <= 0.0) {
    // stationary plan
    positions.assign(2, {waypoints[0].x, waypoints[0].y});
  } else {
    for (double s = 0.0; s < total; s += spec.step_length) positions.push_back(point_at(s));
    positions.push_back({waypoints.back().x, waypoints.back().y});
  }

  const int n = static_cast<int>(positions.size());
  std::vector<double> heading(n, waypoints[0].theta);
  if (total > 0.0) {
    // direction of motion, smoothed over a +/-2 frame window
    std::vector<std::pair<double, double>> dir(n, {0.0, 0.0});
    for (int i = 0; i + 1 < n; ++i) {
      dir[i] = {positions[i + 1].first - positions[i].first, positions[i + 1].second - positions[i].second};
    }
    if (n >= 2) dir[n - 1] = dir[n - 2];
    for (int i = 0; i < n; ++i) {
      double sx = 0.0, sy = 0.0;
      for (int k = std::max(0, i - 2); k <= std::min(n - 1, i + 2); ++k) {
        sx += dir[k].first;
        sy += dir[k].second;
      }
      heading[i] = (sx == 0.0 && sy == 0.0) ? (i > 0 ? heading[i - 1] : waypoints[0].theta)
                                            : std::atan2(sy, sx);
    }
  }

  Trajectory traj;
  traj.poses.reserve(n);
  for (int i = 0; i < n; ++i) {
    traj.poses.emplace_back(positions[i].first, positions[i].second, heading[i]);
  }

  NormalSource normals(mix_seed(seed, 0xac710bULL));
  traj.deltas.resize(n);
  traj.actions.resize(n);
  traj.deltas[0] = OdometryDelta();
  traj.actions[0] = Action(std::vector<double>(spec.action_dim, 0.0));
  for (int i = 1; i < n; ++i) {
    const Pose2D rel = between(traj.poses[i - 1], traj.poses[i]);
    traj.deltas[i] = OdometryDelta(rel.x, rel.y, rel.theta);
    std::vector<double> full{rel.x, rel.y, 0.0, rel.theta};
    const bool moving = rel.x != 0.0 || rel.y != 0.0 || rel.theta != 0.0;
    std::vector<double> a(static_cast<size_t>(spec.action_dim), 0.0);
    for (int d = 0; d < spec.action_dim && d < 4; ++d) {
      a[d] = full[d] + (moving ? spec.action_noise_std * normals.next() : 0.0);
    }
    traj.actions[i] = Action(std::move(a));
  }
  return traj;
}

std::vector<Pose2D> default_loop_plan(const WarehouseSpec& spec, int loops) {
  spec.validate();
  if (loops < 1) throw std::invalid_argument("default_loop_plan: loops must be >= 1");
  if (spec.num_aisles < 3) throw std::invalid_argument("default_loop_plan: needs at least 3 aisles");
  const double L = spec.aisle_length;
  const double s = spec.aisle_spacing;
  const double in = 0.3;        // how far inside the aisle the turns happen
  const double out = 0.6;       // cross-corridor x position
  const double y0 = 0.0, y1 = s, y2 = 2.0 * s;

  std::vector<Pose2D> lap{
      {in, y0, 0},      {L - in, y0, 0},  {L + out, y0, 0}, {L + out, y1, 0}, {L - in, y1, 0},
      {in, y1, 0},      {-out, y1, 0},    {-out, y2, 0},    {in, y2, 0},      {L - in, y2, 0},
      {L + out, y2, 0}, {L + out, y0, 0}, {L - in, y0, 0},
  };
  std::vector<Pose2D> plan;
  plan.emplace_back(in, y0, 0.0);
  for (int k = 0; k < loops; ++k) {
    for (size_t i = 1; i < lap.size(); ++i) plan.push_back(lap[i]);
    plan.emplace_back(in, y0, 0.0);  // close the lap
  }
  return plan;
}

// --- rendering ------------------------------------------------------------------

namespace {

double hash01(uint64_t seed, uint64_t a, uint64_t b, uint64_t c = 0) {
  const uint64_t h = splitmix64(mix_seed(mix_seed(seed, a), b) ^ (c * 0x9e3779b97f4a7c15ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct RayHit {
  double t = 0.0;
  double coord = 0.0;  // position along the wall that was hit
  int kind = 0;        // 0 side wall, 1 end wall
};

RayHit cast_ray(double u, double v, double beta, double hw, double x_lo, double x_hi) {
  const double c = std::cos(beta), s = std::sin(beta);
  const double eps = 1e-9;
  double t_side = std::numeric_limits<double>::infinity();
  if (s > eps) t_side = (hw - v) / s;
  else if (s < -eps) t_side = (-hw - v) / s;
  double t_end = std::numeric_limits<double>::infinity();
  if (c > eps) t_end = (x_hi - u) / c;
  else if (c < -eps) t_end = (x_lo - u) / c;

  RayHit hit;
  if (t_side <= t_end) {
    hit.t = t_side;
    hit.kind = 0;
    hit.coord = u + t_side * c;
  } else {
    hit.t = t_end;
    hit.kind = 1;
    hit.coord = v + t_end * s;
  }
  hit.t = std::min(hit.t, 200.0);
  return hit;
}

constexpr double kCamHeight = 1.3;   // camera above the floor
constexpr double kWallHalf = 1.3;    // wall extends this far above/below the camera axis

/// Brightness (and for RGB a small chroma pair) of a wall point.
void wall_texture(uint64_t seed, int kind, double h, double wall_y, double& lum, double& cr, double& cb) {
  const int64_t si = static_cast<int64_t>(std::floor(h / 0.35));
  lum = 0.35 + 0.5 * hash01(seed, 11 + kind, static_cast<uint64_t>(si + (1 << 20)));
  cr = hash01(seed, 13 + kind, static_cast<uint64_t>(si + (1 << 20))) - 0.5;
  cb = hash01(seed, 17 + kind, static_cast<uint64_t>(si + (1 << 20))) - 0.5;
  const double post_phase = h / 1.4 - std::floor(h / 1.4);
  if (post_phase < 0.06) {
    lum = 0.12;
    cr = cb = 0.0;
  } else if (kind == 0) {
    const double band = (wall_y + kWallHalf) / 0.65;
    if (band - std::floor(band) < 0.14) lum *= 0.45;
  }
}

void floor_texture(uint64_t seed, double px, double py, double& lum, double& cr, double& cb) {
  const int64_t tu = static_cast<int64_t>(std::floor(px / 0.5));
  const int64_t tv = static_cast<int64_t>(std::floor(py / 0.5));
  const double base = ((tu + tv) & 1) ? 0.30 : 0.44;
  lum = base + 0.10 * hash01(seed, 23, static_cast<uint64_t>(tu + (1 << 20)),
                             static_cast<uint64_t>(tv + (1 << 20)));
  cr = 0.0;
  cb = 0.0;
}

}  // namespace

Observation render_observation(const Pose2D& pose, const WarehouseSpec& spec, uint64_t seed) {
  spec.validate();
  if (!pose_in_bounds(pose, spec)) {
    throw std::invalid_argument("render_observation: pose outside the warehouse");
  }
  const int H = spec.obs_shape.height, W = spec.obs_shape.width, C = spec.obs_shape.channels;
  const double hw = spec.corridor_half_width();

  const int aisle = std::clamp(static_cast<int>(std::lround(pose.y / spec.aisle_spacing)), 0,
                               spec.num_aisles - 1);
  const double u = pose.x;
  const double v = std::clamp(pose.y - aisle * spec.aisle_spacing, -0.95 * hw, 0.95 * hw);
  const double x_lo = -(spec.end_margin() + 0.5);
  const double x_hi = spec.aisle_length + spec.end_margin() + 0.5;

  // per-aisle identity cue, zeroed out at full aliasing
  const double cue_gain = 1.0 - spec.aliasing_level;
  double cue[3] = {0.0, 0.0, 0.0};
  for (int ch = 0; ch < 3; ++ch) {
    cue[ch] = cue_gain * 0.2 * (2.0 * hash01(seed, 0xA15E, static_cast<uint64_t>(aisle), ch) - 1.0);
  }

  const double fov_h = kPi / 2.0;
  const double fv = 0.5 * H / std::tan(kPi / 6.0);  // 60 degree vertical field of view

  std::vector<double> px(static_cast<size_t>(H) * W * C);
  for (int col = 0; col < W; ++col) {
    const double beta = pose.theta + fov_h * (0.5 - (col + 0.5) / W);
    const RayHit hit = cast_ray(u, v, beta, hw, x_lo, x_hi);
    const double wall_shade = 1.0 / (1.0 + 0.12 * hit.t);
    const double wall_rows = fv * kWallHalf / std::max(hit.t, 1e-6);

    for (int row = 0; row < H; ++row) {
      const double dy = (row + 0.5) - 0.5 * H;  // positive is down
      double lum, cr, cb;
      double shade;
      bool on_wall = std::abs(dy) <= wall_rows;
      if (on_wall) {
        const double wall_y = dy * hit.t / fv;
        wall_texture(seed, hit.kind, hit.coord, wall_y, lum, cr, cb);
        shade = wall_shade;
      } else if (dy > 0.0) {
        const double tf = fv * kCamHeight / dy;
        const double fx = u + tf * std::cos(beta);
        const double fy = v + tf * std::sin(beta);
        floor_texture(seed, fx, fy, lum, cr, cb);
        shade = 1.0 / (1.0 + 0.10 * tf);
      } else {
        const double tc = fv * kCamHeight / (-dy);
        lum = 0.22 + 0.10 / (1.0 + 0.3 * tc);
        cr = cb = 0.0;
        shade = 1.0;
      }

      const size_t base = (static_cast<size_t>(row) * W + col) * C;
      if (C == 1) {
        const double val = std::clamp(lum * shade + cue[0], 0.0, 1.0);
        px[base] = std::round(val * 255.0) / 255.0;
      } else {
        const double r = std::clamp((lum + 0.25 * cr) * shade + cue[0], 0.0, 1.0);
        const double g = std::clamp(lum * shade + cue[1], 0.0, 1.0);
        const double b = std::clamp((lum + 0.25 * cb) * shade + cue[2], 0.0, 1.0);
        px[base + 0] = std::round(r * 255.0) / 255.0;
        px[base + 1] = std::round(g * 255.0) / 255.0;
        px[base + 2] = std::round(b * 255.0) / 255.0;
      }
    }
  }
  return Observation(spec.obs_shape, std::move(px));
}

// --- odometry corruption ----------------------------------------------------------

CorruptedOdometry corrupt_odometry(const std::vector<OdometryDelta>& true_deltas,
                                   const OdometryNoiseSpec& noise, uint64_t seed,
                                   const std::vector<int64_t>& force_reset_frames) {
  noise.validate();
  CorruptedOdometry out;
  out.deltas.resize(true_deltas.size());
  out.reset_flags.assign(true_deltas.size(), 0);

  NormalSource normals(mix_seed(seed, 0x0d0eULL));
  std::mt19937_64 reset_gen(mix_seed(seed, 0x2e5e7ULL));
  Pose2D dead_reckoned;

  for (size_t t = 0; t < true_deltas.size(); ++t) {
    OdometryDelta d = true_deltas[t];
    if (t > 0) {
      d = OdometryDelta(d.dx + noise.gaussian_std_xy * normals.next(),
                        d.dy + noise.gaussian_std_xy * normals.next(),
                        wrap_angle(d.dtheta + noise.gaussian_std_theta * normals.next()));
    }
    bool reset = t > 0 && noise.reset_probability > 0.0 &&
                 uniform_unit(reset_gen) <= noise.reset_probability;
    if (std::find(force_reset_frames.begin(), force_reset_frames.end(), static_cast<int64_t>(t)) !=
        force_reset_frames.end()) {
      reset = true;
    }
    if (reset) {
      // emit the delta that snaps the dead-reckoned position (not the
      // orientation) back to the origin, like an EKF losing optical flow
      const double c = std::cos(dead_reckoned.theta), s = std::sin(dead_reckoned.theta);
      const double bx = -(c * dead_reckoned.x + s * dead_reckoned.y);
      const double by = -(-s * dead_reckoned.x + c * dead_reckoned.y);
      d = OdometryDelta(bx, by, d.dtheta);
      out.reset_flags[t] = 1;
    }
    dead_reckoned = compose(dead_reckoned, d);
    out.deltas[t] = d;
  }
  return out;
}

// --- sequence generation ------------------------------------------------------------

SequenceData generate_sequence(const WarehouseSpec& spec, const OdometryNoiseSpec& noise,
                               const std::vector<Pose2D>& waypoints, uint64_t seed,
                               const std::string& name) {
  Trajectory traj = generate_trajectory(spec, waypoints, seed);
  CorruptedOdometry odo = corrupt_odometry(traj.deltas, noise, mix_seed(seed, 0x0d03ULL));

  SequenceData data;
  data.name = name;
  data.spec = spec;
  data.noise = noise;
  data.seed = seed;
  data.reset_flags = odo.reset_flags;
  data.frames.resize(traj.poses.size());
  for (size_t t = 0; t < traj.poses.size(); ++t) {
    FrameRecord& f = data.frames[t];
    f.t = static_cast<int64_t>(t);
    f.observation = render_observation(traj.poses[t], spec, spec.texture_seed);
    f.action = traj.actions[t];
    f.odometry = odo.deltas[t];
    f.ground_truth = traj.poses[t];
  }
  return data;
}

// --- dataset io -----------------------------------------------------------------

namespace {

constexpr int kDatasetVersion = 1;

ordered_json spec_to_json(const WarehouseSpec& s) {
  return ordered_json{{"num_aisles", s.num_aisles},
                      {"aisle_length", s.aisle_length},
                      {"aisle_spacing", s.aisle_spacing},
                      {"texture_seed", s.texture_seed},
                      {"aliasing_level", s.aliasing_level},
                      {"step_length", s.step_length},
                      {"action_noise_std", s.action_noise_std}};
}

void spec_from_json(const ordered_json& j, WarehouseSpec& s) {
  s.num_aisles = j.at("num_aisles").get<int>();
  s.aisle_length = j.at("aisle_length").get<double>();
  s.aisle_spacing = j.at("aisle_spacing").get<double>();
  s.texture_seed = j.at("texture_seed").get<uint64_t>();
  s.aliasing_level = j.at("aliasing_level").get<double>();
  s.step_length = j.at("step_length").get<double>();
  s.action_noise_std = j.at("action_noise_std").get<double>();
}

PngImage obs_to_png(const Observation& obs) {
  PngImage img;
  img.height = obs.shape.height;
  img.width = obs.shape.width;
  img.channels = obs.shape.channels;
  img.bytes.resize(obs.pixels.size());
  for (size_t i = 0; i < obs.pixels.size(); ++i) {
    img.bytes[i] = static_cast<uint8_t>(std::lround(obs.pixels[i] * 255.0));
  }
  return img;
}

Observation png_to_obs(const PngImage& img) {
  std::vector<double> px(img.bytes.size());
  for (size_t i = 0; i < img.bytes.size(); ++i) px[i] = static_cast<double>(img.bytes[i]) / 255.0;
  return Observation(ImageShape{img.height, img.width, img.channels}, std::move(px));
}

std::string frame_filename(int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.png", static_cast<long long>(t));
  return buf;
}

void save_sequence(const std::filesystem::path& dir, const SequenceData& seq) {
  std::filesystem::create_directories(dir / "frames");
  const bool has_gt =
      !seq.frames.empty() && std::all_of(seq.frames.begin(), seq.frames.end(),
                                         [](const FrameRecord& f) { return f.ground_truth.has_value(); });
  const int action_dim = seq.frames.empty() ? seq.spec.action_dim : seq.frames.front().action.dim();

  ordered_json man;
  man["format"] = "latentslam-sequence";
  man["version"] = kDatasetVersion;
  man["name"] = seq.name;
  man["frame_count"] = seq.frames.size();
  man["image"] = ordered_json{{"height", seq.spec.obs_shape.height},
                              {"width", seq.spec.obs_shape.width},
                              {"channels", seq.spec.obs_shape.channels}};
  man["action_dim"] = action_dim;
  man["seed"] = seq.seed;
  man["has_ground_truth"] = has_gt;
  man["warehouse"] = spec_to_json(seq.spec);
  man["noise"] = ordered_json{{"gaussian_std_xy", seq.noise.gaussian_std_xy},
                              {"gaussian_std_theta", seq.noise.gaussian_std_theta},
                              {"reset_probability", seq.noise.reset_probability}};
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir.string());
    out << man.dump(2) << '\n';
  }

  std::ofstream odo(dir / "odometry.csv");
  if (!odo) throw std::runtime_error("save_dataset: cannot write odometry.csv in " + dir.string());
  odo.precision(17);
  odo << "t,dx,dy,dtheta";
  for (int d = 0; d < action_dim; ++d) odo << ",a" << d;
  if (has_gt) odo << ",gt_x,gt_y,gt_theta";
  odo << '\n';
  for (const FrameRecord& f : seq.frames) {
    odo << f.t << ',' << f.odometry.dx << ',' << f.odometry.dy << ',' << f.odometry.dtheta;
    for (double a : f.action.controls) odo << ',' << a;
    if (has_gt) {
      odo << ',' << f.ground_truth->x << ',' << f.ground_truth->y << ',' << f.ground_truth->theta;
    }
    odo << '\n';
    write_png(dir / "frames" / frame_filename(f.t), obs_to_png(f.observation));
  }

  std::ofstream resets(dir / "resets.csv");
  resets << "t,reset\n";
  for (size_t t = 0; t < seq.frames.size(); ++t) {
    resets << seq.frames[t].t << ',' << (t < seq.reset_flags.size() && seq.reset_flags[t] ? 1 : 0) << '\n';
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

SequenceData load_sequence(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw std::runtime_error("load_dataset: missing manifest.json in " + dir.string());
  ordered_json man;
  try {
    min >> man;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (man.value("format", "") != "latentslam-sequence" || man.value("version", -1) != kDatasetVersion) {
    throw std::runtime_error("load_dataset: unsupported sequence manifest in " + dir.string());
  }

  SequenceData seq;
  seq.name = man.value("name", dir.filename().string());
  seq.seed = man.at("seed").get<uint64_t>();
  spec_from_json(man.at("warehouse"), seq.spec);
  seq.spec.obs_shape = ImageShape{man.at("image").at("height").get<int>(),
                                  man.at("image").at("width").get<int>(),
                                  man.at("image").at("channels").get<int>()};
  seq.spec.action_dim = man.at("action_dim").get<int>();
  seq.noise.gaussian_std_xy = man.at("noise").at("gaussian_std_xy").get<double>();
  seq.noise.gaussian_std_theta = man.at("noise").at("gaussian_std_theta").get<double>();
  seq.noise.reset_probability = man.at("noise").at("reset_probability").get<double>();
  const size_t frame_count = man.at("frame_count").get<size_t>();
  const bool has_gt = man.at("has_ground_truth").get<bool>();
  const int action_dim = seq.spec.action_dim;

  std::ifstream odo(dir / "odometry.csv");
  if (!odo) throw std::runtime_error("load_dataset: missing odometry.csv in " + dir.string());
  std::string line;
  if (!std::getline(odo, line)) throw std::runtime_error("load_dataset: empty odometry.csv in " + dir.string());

  while (std::getline(odo, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const size_t expected = 4 + static_cast<size_t>(action_dim) + (has_gt ? 3 : 0);
    if (f.size() != expected) {
      throw std::runtime_error("load_dataset: bad odometry row in " + dir.string() + ": " + line);
    }
    FrameRecord rec;
    rec.t = std::stoll(f[0]);
    rec.odometry = OdometryDelta(std::stod(f[1]), std::stod(f[2]), std::stod(f[3]));
    std::vector<double> a(static_cast<size_t>(action_dim));
    for (int d = 0; d < action_dim; ++d) a[static_cast<size_t>(d)] = std::stod(f[4 + d]);
    rec.action = Action(std::move(a));
    if (has_gt) {
      rec.ground_truth = Pose2D(std::stod(f[4 + action_dim]), std::stod(f[5 + action_dim]),
                                std::stod(f[6 + action_dim]));
    }
    rec.observation = png_to_obs(read_png(dir / "frames" / frame_filename(rec.t)));
    if (!(rec.observation.shape == seq.spec.obs_shape)) {
      throw std::runtime_error("load_dataset: frame image shape mismatch in " + dir.string());
    }
    seq.frames.push_back(std::move(rec));
  }
  if (seq.frames.size() != frame_count) {
    throw std::runtime_error("load_dataset: manifest frame count (" + std::to_string(frame_count) +
                             ") does not match odometry rows (" + std::to_string(seq.frames.size()) +
                             ") in " + dir.string());
  }

  std::ifstream resets(dir / "resets.csv");
  if (resets) {
    seq.reset_flags.assign(seq.frames.size(), 0);
    std::getline(resets, line);
    while (std::getline(resets, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 2) continue;
      const size_t t = static_cast<size_t>(std::stoll(f[0]));
      if (t < seq.reset_flags.size()) seq.reset_flags[t] = static_cast<uint8_t>(std::stoi(f[1]));
    }
  }
  return seq;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const std::vector<SequenceData>& sequences) {
  if (sequences.empty()) throw std::invalid_argument("save_dataset: no sequences");
  std::filesystem::create_directories(dir);

  ordered_json top;
  top["format"] = "latentslam-dataset";
  top["version"] = kDatasetVersion;
  ordered_json names = ordered_json::array();
  for (const SequenceData& s : sequences) names.push_back(s.name);
  top["sequences"] = names;
  top["image"] = ordered_json{{"height", sequences.front().spec.obs_shape.height},
                              {"width", sequences.front().spec.obs_shape.width},
                              {"channels", sequences.front().spec.obs_shape.channels}};
  top["action_dim"] = sequences.front().spec.action_dim;
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest.json in " + dir.string());
    out << top.dump(2) << '\n';
  }
  for (const SequenceData& s : sequences) save_sequence(dir / s.name, s);
}

std::vector<SequenceData> load_dataset(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw std::runtime_error("load_dataset: missing manifest.json in " + dir.string());
  ordered_json man;
  try {
    min >> man;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: malformed manifest in " + dir.string() + ": " + e.what());
  }
  const std::string format = man.value("format", "");
  if (format == "latentslam-sequence") {
    return {load_sequence(dir)};
  }
  if (format != "latentslam-dataset" || man.value("version", -1) != kDatasetVersion) {
    throw std::runtime_error("load_dataset: unsupported manifest in " + dir.string());
  }
  std::vector<SequenceData> out;
  for (const auto& name : man.at("sequences")) {
    out.push_back(load_sequence(dir / name.get<std::string>()));
  }
  if (out.empty()) throw std::runtime_error("load_dataset: dataset lists no sequences: " + dir.string());
  return out;
}

}  // namespace latentslam
