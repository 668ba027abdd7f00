#include "latentslam/experience_map.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace latentslam {

using ordered_json = nlohmann::ordered_json;

void ExperienceMapConfig::validate() const {
  if (!(gate_radius_cells > 0.0)) throw std::invalid_argument("ExperienceMapConfig: gate radius must be > 0");
  if (nx < 1 || ny < 1 || ntheta < 1) throw std::invalid_argument("ExperienceMapConfig: bad grid dims");
  if (!(relax_alpha > 0.0 && relax_alpha <= 0.5)) {
    throw std::invalid_argument("ExperienceMapConfig: relax_alpha must be in (0, 0.5]");
  }
  if (relax_iterations < 0) throw std::invalid_argument("ExperienceMapConfig: relax_iterations must be >= 0");
}

ExperienceMap::ExperienceMap(ExperienceMapConfig cfg) : cfg_(cfg) { cfg_.validate(); }

int ExperienceMap::create_experience(int view_cell_id, const CellCoords& coords, int64_t frame) {
  Experience e;
  e.id = static_cast<int>(experiences_.size());
  e.view_cell_id = view_cell_id;
  e.pose_coords = coords;
  e.created_frame = frame;
  if (current_id_ >= 0) {
    e.map_pose = compose(experiences_[current_id_].map_pose, accumulated_);
  } else {
    e.map_pose = Pose2D();
  }
  experiences_.push_back(e);
  return e.id;
}

bool ExperienceMap::link_exists(int from, int to) const {
  for (const Link& l : links_) {
    if (l.from_id == from && l.to_id == to) return true;
  }
  return false;
}

MapEvent ExperienceMap::step(const MatchResult& view_match, const DecodedPose& decoded,
                             const CellCoords& peak, const OdometryDelta& odometry, int64_t frame) {
  (void)decoded;
  if (current_id_ < 0) {
    current_id_ = create_experience(view_match.cell_id, peak, frame);
    accumulated_ = Pose2D();
    return MapEvent::Created;
  }

  accumulated_ = compose(accumulated_, odometry);

  auto create_and_link = [&]() {
    const int prev = current_id_;
    const int id = create_experience(view_match.cell_id, peak, frame);
    links_.push_back({prev, id, accumulated_, false});
    current_id_ = id;
    accumulated_ = Pose2D();
  };

  if (view_match.is_new) {
    create_and_link();
    return MapEvent::Created;
  }

  // candidate experiences: same view cell, pose-cell coords near the decoded peak
  int best = -1;
  double best_dist = 0.0;
  for (const Experience& e : experiences_) {
    if (e.view_cell_id != view_match.cell_id) continue;
    const double d = coords_distance(e.pose_coords, peak, cfg_.nx, cfg_.ny, cfg_.ntheta);
    if (d <= cfg_.gate_radius_cells && (best < 0 || d < best_dist)) {
      best = e.id;
      best_dist = d;
    }
  }

  if (best < 0) {
    // view matched but the pose gate disagrees: same appearance, new place
    create_and_link();
    return MapEvent::Created;
  }
  if (best == current_id_) {
    experiences_[best].visit_count += 1;
    return MapEvent::Stay;
  }

  const int prev = current_id_;
  const bool closure = experiences_[best].id < prev - 1;
  if (!link_exists(prev, best)) {
    links_.push_back({prev, best, accumulated_, closure});
  }
  experiences_[best].visit_count += 1;
  current_id_ = best;
  accumulated_ = Pose2D();
  return closure ? MapEvent::LoopClosure : MapEvent::Stay;
}

double ExperienceMap::total_link_residual() const {
  double e = 0.0;
  for (const Link& l : links_) {
    const Pose2D implied = compose(experiences_[l.from_id].map_pose, l.relative_pose);
    const Pose2D& to = experiences_[l.to_id].map_pose;
    const double dx = to.x - implied.x;
    const double dy = to.y - implied.y;
    const double dt = wrap_angle(to.theta - implied.theta);
    e += dx * dx + dy * dy + dt * dt;
  }
  return e;
}

void ExperienceMap::relax(int iterations, double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw std::invalid_argument("relax: alpha must be in (0, 0.5]");
  if (experiences_.empty() || links_.empty()) return;

  const size_t n = experiences_.size();
  std::vector<double> sum_dx(n), sum_dy(n), sum_sin(n), sum_cos(n);
  std::vector<int> count(n);

  for (int it = 0; it < iterations; ++it) {
    std::fill(sum_dx.begin(), sum_dx.end(), 0.0);
    std::fill(sum_dy.begin(), sum_dy.end(), 0.0);
    std::fill(sum_sin.begin(), sum_sin.end(), 0.0);
    std::fill(sum_cos.begin(), sum_cos.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);

    for (const Link& l : links_) {
      const Pose2D& pa = experiences_[l.from_id].map_pose;
      const Pose2D& pb = experiences_[l.to_id].map_pose;
      // pose of b implied by a, and of a implied by b
      const Pose2D ib = compose(pa, l.relative_pose);
      const Pose2D ia = compose(pb, inverse(l.relative_pose));
      const double db_t = wrap_angle(ib.theta - pb.theta);
      const double da_t = wrap_angle(ia.theta - pa.theta);
      sum_dx[l.to_id] += ib.x - pb.x;
      sum_dy[l.to_id] += ib.y - pb.y;
      sum_sin[l.to_id] += std::sin(db_t);
      sum_cos[l.to_id] += std::cos(db_t);
      count[l.to_id] += 1;
      sum_dx[l.from_id] += ia.x - pa.x;
      sum_dy[l.from_id] += ia.y - pa.y;
      sum_sin[l.from_id] += std::sin(da_t);
      sum_cos[l.from_id] += std::cos(da_t);
      count[l.from_id] += 1;
    }

    const double before = total_link_residual();
    std::vector<Pose2D> saved;
    saved.reserve(n);
    for (const Experience& e : experiences_) saved.push_back(e.map_pose);

    double step_alpha = alpha;
    bool accepted = false;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      for (size_t i = 0; i < n; ++i) {
        if (count[i] == 0) continue;
        const double inv = 1.0 / static_cast<double>(count[i]);
        const double mean_dt = std::atan2(sum_sin[i] * inv, sum_cos[i] * inv);
        const Pose2D& s = saved[i];
        experiences_[i].map_pose =
            Pose2D(s.x + step_alpha * sum_dx[i] * inv, s.y + step_alpha * sum_dy[i] * inv,
                   s.theta + step_alpha * mean_dt);
      }
      if (total_link_residual() <= before + 1e-15) {
        accepted = true;
      } else {
        step_alpha *= 0.5;
      }
    }
    if (!accepted) {
      for (size_t i = 0; i < n; ++i) experiences_[i].map_pose = saved[i];
      return;  // stuck at a point where any damped move increases residual
    }
  }
}

void ExperienceMap::restore(std::vector<Experience> experiences, std::vector<Link> links, int current_id,
                            Pose2D accumulated) {
  for (size_t i = 0; i < experiences.size(); ++i) {
    if (experiences[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("ExperienceMap: ids must be dense from 0");
    }
  }
  const int n = static_cast<int>(experiences.size());
  for (const Link& l : links) {
    if (l.from_id < 0 || l.from_id >= n || l.to_id < 0 || l.to_id >= n || l.from_id == l.to_id) {
      throw std::invalid_argument("ExperienceMap: dangling or degenerate link");
    }
  }
  if (n > 0 && (current_id < 0 || current_id >= n)) {
    throw std::invalid_argument("ExperienceMap: invalid current experience id");
  }
  experiences_ = std::move(experiences);
  links_ = std::move(links);
  current_id_ = n > 0 ? current_id : -1;
  accumulated_ = accumulated;
}

// --- persistence ---------------------------------------------------------------

namespace {

constexpr int kMapVersion = 1;

ordered_json pose_to_json(const Pose2D& p) { return ordered_json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

Pose2D pose_from_json(const ordered_json& j) {
  return Pose2D(j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>());
}

}  // namespace

void save_map(const std::filesystem::path& path, const ExperienceMap& map, const ViewCellStore& store) {
  ordered_json doc;
  doc["format"] = "latentslam-map";
  doc["version"] = kMapVersion;
  const ExperienceMapConfig& cfg = map.config();
  doc["config"] = ordered_json{{"gate_radius_cells", cfg.gate_radius_cells},
                               {"nx", cfg.nx},
                               {"ny", cfg.ny},
                               {"ntheta", cfg.ntheta},
                               {"relax_alpha", cfg.relax_alpha},
                               {"relax_iterations", cfg.relax_iterations}};

  ordered_json exps = ordered_json::array();
  for (const Experience& e : map.experiences()) {
    exps.push_back(ordered_json{{"id", e.id},
                                {"pose", pose_to_json(e.map_pose)},
                                {"view_cell_id", e.view_cell_id},
                                {"pose_ix", e.pose_coords.ix},
                                {"pose_iy", e.pose_coords.iy},
                                {"pose_itheta", e.pose_coords.itheta},
                                {"visit_count", e.visit_count},
                                {"created_frame", e.created_frame}});
  }
  doc["experiences"] = std::move(exps);

  ordered_json links = ordered_json::array();
  for (const Link& l : map.links()) {
    links.push_back(ordered_json{{"from", l.from_id},
                                 {"to", l.to_id},
                                 {"relative", pose_to_json(l.relative_pose)},
                                 {"is_loop_closure", l.is_loop_closure}});
  }
  doc["links"] = std::move(links);

  ordered_json cells = ordered_json::array();
  for (const ViewCell& c : store.cells()) {
    cells.push_back(ordered_json{{"id", c.id},
                                 {"template", c.template_code},
                                 {"ix", c.linked_pose_coords.ix},
                                 {"iy", c.linked_pose_coords.iy},
                                 {"itheta", c.linked_pose_coords.itheta},
                                 {"created_at", c.created_at}});
  }
  doc["view_cells"] = ordered_json{{"match_threshold", store.match_threshold()}, {"cells", std::move(cells)}};
  doc["current_experience_id"] = map.current_experience_id();
  doc["accumulated_odometry"] = pose_to_json(map.accumulated_odometry());

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("save_map: cannot open " + tmp.string());
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("save_map: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_map: cannot open " + path.string());
  ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_map: malformed map file " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "latentslam-map") {
    throw std::runtime_error("load_map: not a map file: " + path.string());
  }
  if (doc.value("version", -1) != kMapVersion) {
    throw std::runtime_error("load_map: unsupported map version in " + path.string());
  }

  try {
    ExperienceMapConfig cfg;
    const auto& jc = doc.at("config");
    cfg.gate_radius_cells = jc.at("gate_radius_cells").get<double>();
    cfg.nx = jc.at("nx").get<int>();
    cfg.ny = jc.at("ny").get<int>();
    cfg.ntheta = jc.at("ntheta").get<int>();
    cfg.relax_alpha = jc.at("relax_alpha").get<double>();
    cfg.relax_iterations = jc.at("relax_iterations").get<int>();

    std::vector<Experience> exps;
    for (const auto& je : doc.at("experiences")) {
      Experience e;
      e.id = je.at("id").get<int>();
      e.map_pose = pose_from_json(je.at("pose"));
      e.view_cell_id = je.at("view_cell_id").get<int>();
      e.pose_coords = {je.at("pose_ix").get<int>(), je.at("pose_iy").get<int>(),
                       je.at("pose_itheta").get<int>()};
      e.visit_count = je.at("visit_count").get<int>();
      e.created_frame = je.at("created_frame").get<int64_t>();
      exps.push_back(e);
    }

    std::vector<Link> links;
    for (const auto& jl : doc.at("links")) {
      Link l;
      l.from_id = jl.at("from").get<int>();
      l.to_id = jl.at("to").get<int>();
      l.relative_pose = pose_from_json(jl.at("relative"));
      l.is_loop_closure = jl.at("is_loop_closure").get<bool>();
      links.push_back(l);
    }

    std::vector<ViewCell> cells;
    const auto& jv = doc.at("view_cells");
    for (const auto& jcell : jv.at("cells")) {
      ViewCell c;
      c.id = jcell.at("id").get<int>();
      c.template_code = jcell.at("template").get<std::vector<double>>();
      c.linked_pose_coords = {jcell.at("ix").get<int>(), jcell.at("iy").get<int>(),
                              jcell.at("itheta").get<int>()};
      c.created_at = jcell.at("created_at").get<int64_t>();
      cells.push_back(std::move(c));
    }

    LoadedMap out{ExperienceMap(cfg), ViewCellStore(jv.at("match_threshold").get<double>())};
    out.map.restore(std::move(exps), std::move(links), doc.at("current_experience_id").get<int>(),
                    pose_from_json(doc.at("accumulated_odometry")));
    out.store.restore(std::move(cells), jv.at("match_threshold").get<double>());
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_map: missing or malformed field in " + path.string() + ": " + e.what());
  }
}

void write_edge_csv(const std::filesystem::path& path, const ExperienceMap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_edge_csv: cannot open " + path.string());
  out << "from_x,from_y,to_x,to_y,is_loop_closure\n";
  out.precision(17);
  for (const Link& l : map.links()) {
    const Pose2D& a = map.experiences()[l.from_id].map_pose;
    const Pose2D& b = map.experiences()[l.to_id].map_pose;
    out << a.x << ',' << a.y << ',' << b.x << ',' << b.y << ',' << (l.is_loop_closure ? 1 : 0) << '\n';
  }
}

TopologyMetrics topology_metrics(const ExperienceMap& map, const std::vector<Pose2D>& gt_poses, double rho,
                                 int min_id_gap) {
  if (gt_poses.size() != map.experiences().size()) {
    throw std::invalid_argument("topology_metrics: ground truth count does not match experiences");
  }
  TopologyMetrics out;
  out.node_count = static_cast<int>(map.experiences().size());
  out.link_count = static_cast<int>(map.links().size());

  const int n = out.node_count;
  int revisits = 0, matched = 0;
  for (int j = 0; j < n; ++j) {
    bool has_partner = false;
    for (int i = 0; i < j - min_id_gap; ++i) {
      if (euclidean_xy(gt_poses[i], gt_poses[j]) < rho) {
        has_partner = true;
        break;
      }
    }
    if (!has_partner) continue;
    ++revisits;
    bool is_matched = false;
    for (const Link& l : map.links()) {
      const int other = l.from_id == j ? l.to_id : (l.to_id == j ? l.from_id : -1);
      if (other < 0) continue;
      if (std::abs(other - j) <= min_id_gap) continue;
      if (euclidean_xy(gt_poses[other], gt_poses[j]) < rho) {
        is_matched = true;
        break;
      }
    }
    if (is_matched) ++matched;
  }
  out.revisit_count = revisits;
  if (revisits > 0) {
    out.revisit_match_rate = static_cast<double>(matched) / static_cast<double>(revisits);
  }

  int closures = 0, false_closures = 0;
  for (const Link& l : map.links()) {
    if (!l.is_loop_closure) continue;
    ++closures;
    if (euclidean_xy(gt_poses[l.from_id], gt_poses[l.to_id]) > rho) ++false_closures;
  }
  out.loop_closure_count = closures;
  out.false_closure_rate = closures > 0 ? static_cast<double>(false_closures) / closures : 0.0;
  return out;
}

}  // namespace latentslam
