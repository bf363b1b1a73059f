#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "hiaer/retarget.hpp"

namespace hiaer::retarget {

std::size_t WorkspaceGrid::cell_of(const motion::Vec3& p) const {
  if (resolution == 0) throw ConfigError("workspace grid resolution must be positive");
  std::size_t idx[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - bounds.lo[a]) / (bounds.hi[a] - bounds.lo[a]);
    const double cell = std::floor(u * static_cast<double>(resolution));
    idx[a] = static_cast<std::size_t>(std::clamp(cell, 0.0, static_cast<double>(resolution - 1)));
  }
  return idx[0] + resolution * (idx[1] + resolution * idx[2]);
}

std::vector<std::size_t> Occupancy::counts(WristMode mode) const {
  switch (mode) {
    case WristMode::Left:
      return left;
    case WristMode::Right:
      return right;
    case WristMode::Both:
      break;
  }
  std::vector<std::size_t> sum(left.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = left[i] + right[i];
  return sum;
}

Occupancy occupancy(const std::vector<RobotPose>& frames, const WorkspaceGrid& grid, const RobotDescriptor& desc) {
  Occupancy o;
  o.left.assign(grid.cell_count(), 0);
  o.right.assign(grid.cell_count(), 0);
  for (const auto& q : frames) {
    const WristPositions w = fk_wrist(q, desc);
    ++o.left[grid.cell_of(w.left)];
    ++o.right[grid.cell_of(w.right)];
  }
  return o;
}

OccupancyStats occupancy_stats(const std::vector<std::size_t>& counts) {
  OccupancyStats s;
  double total = 0.0;
  std::size_t biggest = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    ++s.nonempty;
    total += static_cast<double>(c);
    biggest = std::max(biggest, c);
  }
  if (s.nonempty == 0) return s;
  s.max_share = static_cast<double>(biggest) / total;
  s.mean_nonempty_share = 1.0 / static_cast<double>(s.nonempty);
  const double mean = total / static_cast<double>(s.nonempty);
  double var = 0.0;
  for (auto c : counts) {
    if (c > 0) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  }
  s.cv = std::sqrt(var / static_cast<double>(s.nonempty)) / mean;
  return s;
}

ResampleReport resample_balanced(const std::vector<RobotTrajectory>& dataset, const WorkspaceGrid& grid,
                                 std::size_t target_size, std::uint64_t rng_seed, const RobotDescriptor& desc,
                                 WristMode mode) {
  if (grid.resolution == 0) throw ConfigError("workspace grid resolution must be positive");
  std::vector<RobotPose> all;
  for (const auto& t : dataset) all.insert(all.end(), t.poses.begin(), t.poses.end());
  if (all.empty()) throw EmptyInputError("resample_balanced needs at least one frame");

  ResampleReport report;
  report.before = occupancy(all, grid, desc);

  std::vector<std::size_t> bin(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const WristPositions w = fk_wrist(all[i], desc);
    const std::size_t l = grid.cell_of(w.left);
    const std::size_t r = grid.cell_of(w.right);
    bin[i] = mode == WristMode::Left ? l : mode == WristMode::Right ? r : l * grid.cell_count() + r;
  }
  std::map<std::size_t, std::size_t> bin_count;
  for (auto b : bin) ++bin_count[b];
  if (bin_count.size() == 1) {
    report.warnings.push_back("all frames fall in one workspace cell; drawing uniformly");
  }

  // Frames grouped by bin so that each bin owns one contiguous unit of
  // cumulative weight; systematic sampling then gives every nonempty bin
  // floor or ceil of target_size / bins draws.
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return bin[a] < bin[b]; });

  std::mt19937_64 rng(rng_seed);
  const double total = static_cast<double>(bin_count.size());
  const double u0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < target_size; ++k) {
    const double point = (u0 + static_cast<double>(k)) / static_cast<double>(target_size) * total;
    while (pos + 1 < order.size() && cum + 1.0 / static_cast<double>(bin_count[bin[order[pos]]]) <= point) {
      cum += 1.0 / static_cast<double>(bin_count[bin[order[pos]]]);
      ++pos;
    }
    report.source_index.push_back(order[pos]);
  }
  std::shuffle(report.source_index.begin(), report.source_index.end(), rng);
  report.frames.reserve(target_size);
  for (auto i : report.source_index) report.frames.push_back(all[i]);
  report.after = occupancy(report.frames, grid, desc);
  return report;
}

nlohmann::json occupancy_to_json(const Occupancy& o, const WorkspaceGrid& grid) {
  auto stats = [](const std::vector<std::size_t>& c) {
    const auto s = occupancy_stats(c);
    return nlohmann::json{{"nonempty", s.nonempty},
                          {"max_share", s.max_share},
                          {"mean_nonempty_share", s.mean_nonempty_share},
                          {"cv", s.cv}};
  };
  return {{"resolution", grid.resolution},
          {"lo", {grid.bounds.lo.x(), grid.bounds.lo.y(), grid.bounds.lo.z()}},
          {"hi", {grid.bounds.hi.x(), grid.bounds.hi.y(), grid.bounds.hi.z()}},
          {"left", o.left},
          {"right", o.right},
          {"left_stats", stats(o.left)},
          {"right_stats", stats(o.right)}};
}

}  // namespace hiaer::retarget
