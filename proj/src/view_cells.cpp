#include "latentslam/view_cells.hpp"

#include <cmath>
#include <stdexcept>

namespace latentslam {

namespace {
constexpr double kMinNorm = 1e-12;

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}
}  // namespace

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_distance: dimension mismatch");
  const double na = norm(a), nb = norm(b);
  if (na <= kMinNorm || nb <= kMinNorm) throw std::invalid_argument("cosine_distance: zero-norm vector");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return 1.0 - dot / (na * nb);
}

ViewCellStore::ViewCellStore(double match_threshold) : threshold_(match_threshold) {
  if (!(match_threshold > 0.0 && match_threshold < 2.0)) {
    throw std::invalid_argument("ViewCellStore: match_threshold must be in (0, 2)");
  }
}

MatchResult ViewCellStore::match_or_create(const std::vector<double>& latent, const CellCoords& pose_coords,
                                           int64_t frame) {
  if (norm(latent) <= kMinNorm) throw std::invalid_argument("match_or_create: zero latent");

  int best_id = -1;
  double best_dist = 0.0;
  for (const ViewCell& c : cells_) {
    const double d = cosine_distance(latent, c.template_code);
    if (best_id < 0 || d < best_dist) {  // strict <: ties keep the lowest id
      best_id = c.id;
      best_dist = d;
    }
  }
  if (best_id >= 0 && best_dist < threshold_) {
    return {best_id, false, best_dist};
  }
  ViewCell cell;
  cell.id = static_cast<int>(cells_.size());
  cell.template_code = latent;
  cell.linked_pose_coords = pose_coords;
  cell.created_at = frame;
  cells_.push_back(std::move(cell));
  return {cells_.back().id, true, 0.0};
}

const ViewCell& ViewCellStore::cell(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= cells_.size()) {
    throw std::out_of_range("ViewCellStore: no cell with id " + std::to_string(id));
  }
  return cells_[static_cast<size_t>(id)];
}

void ViewCellStore::restore(std::vector<ViewCell> cells, double threshold) {
  if (!(threshold > 0.0 && threshold < 2.0)) {
    throw std::invalid_argument("ViewCellStore: match_threshold must be in (0, 2)");
  }
  for (size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].id != static_cast<int>(i)) {
      throw std::invalid_argument("ViewCellStore: ids must be dense from 0");
    }
  }
  cells_ = std::move(cells);
  threshold_ = threshold;
}

InjectionRequest active_injection(const ViewCell& cell, const CANConfig& cfg) {
  return {cell.linked_pose_coords, cfg.injection_energy};
}

}  // namespace latentslam
