#include "latentslam/slam_pipeline.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace latentslam {

ExperienceMapConfig SlamConfig::map_config() const {
  ExperienceMapConfig m;
  m.gate_radius_cells = gate_radius_cells;
  m.nx = can.nx;
  m.ny = can.ny;
  m.ntheta = can.ntheta;
  m.relax_alpha = relax_alpha;
  m.relax_iterations = relax_iterations;
  return m;
}

void SlamConfig::validate() const {
  can.validate();
  map_config().validate();
  if (!(match_threshold > 0.0 && match_threshold < 2.0)) {
    throw std::invalid_argument("SlamConfig: match_threshold must be in (0, 2)");
  }
  if (iterations_per_frame < 1) throw std::invalid_argument("SlamConfig: iterations_per_frame must be >= 1");
}

SlamState make_initial_state(const ModelParams& params, const SlamConfig& cfg) {
  cfg.validate();
  SlamState s;
  s.prev_latent = LatentSample::zeros(params.arch.latent_dim);
  s.grid = PoseCellGrid::make_with_spike(cfg.can, {cfg.can.nx / 2, cfg.can.ny / 2, 0});
  s.store = ViewCellStore(cfg.match_threshold);
  s.map = ExperienceMap(cfg.map_config());
  s.frame_index = 0;
  return s;
}

FrameReport process_frame(SlamState& state, const FrameRecord& frame, const ModelParams& params,
                          const SlamConfig& cfg) {
  try {
    FrameReport report;
    report.frame = frame.t;

    // 1. posterior mean of the latent state
    report.latent = encode(state.prev_latent, frame.action, frame.observation, params);

    // 2. shift attractor activity by odometry
    state.grid = path_integrate(state.grid, frame.odometry, cfg.can);

    // 3. match or create a view cell at the current peak; a match injects
    //    energy at the cell's linked coordinates
    const CellCoords peak_before = decode_pose(state.grid).peak;
    report.match = state.store.match_or_create(report.latent.values, peak_before, frame.t);
    if (!report.match.is_new) {
      const InjectionRequest req = active_injection(state.store.cell(report.match.cell_id), cfg.can);
      state.grid = inject(state.grid, req.coords, req.energy, cfg.can);
    }

    // 4. settle
    for (int i = 0; i < cfg.iterations_per_frame; ++i) state.grid = iterate(state.grid, cfg.can);

    // 5. decode the pose estimate
    const DecodedPose decoded = decode_pose(state.grid);
    report.decoded_pose = decoded.pose;
    report.peak = decoded.peak;

    // 6. experience map update
    report.event = state.map.step(report.match, decoded, decoded.peak, frame.odometry, frame.t);
    if (report.event == MapEvent::LoopClosure && cfg.relax_on_closure) {
      state.map.relax();
    }

    state.prev_latent = report.latent;
    state.frame_index = frame.t + 1;
    return report;
  } catch (const std::exception& e) {
    throw std::runtime_error("process_frame: frame " + std::to_string(frame.t) + ": " + e.what());
  }
}

RunResult run_sequence(const FrameSequence& frames, const ModelParams& params, const SlamConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("run_sequence: empty frame sequence");
  RunResult result{make_initial_state(params, cfg), {}};
  result.reports.reserve(frames.size());
  for (const FrameRecord& f : frames) {
    result.reports.push_back(process_frame(result.state, f, params, cfg));
  }
  return result;
}

const char* map_event_name(MapEvent e) {
  switch (e) {
    case MapEvent::Created: return "created";
    case MapEvent::LoopClosure: return "loop_closure";
    case MapEvent::Stay: return "stay";
  }
  return "unknown";
}

void write_reports_jsonl(const std::filesystem::path& path, const std::vector<FrameReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_reports_jsonl: cannot open " + path.string());
  for (const FrameReport& r : reports) {
    nlohmann::ordered_json j{
        {"frame", r.frame},
        {"event", map_event_name(r.event)},
        {"view_cell", r.match.cell_id},
        {"is_new", r.match.is_new},
        {"match_distance", r.match.distance},
        {"pose", {{"x", r.decoded_pose.x}, {"y", r.decoded_pose.y}, {"theta", r.decoded_pose.theta}}},
        {"peak", {{"ix", r.peak.ix}, {"iy", r.peak.iy}, {"itheta", r.peak.itheta}}},
        {"latent", r.latent.values},
    };
    out << j.dump() << '\n';
  }
}

}  // namespace latentslam
