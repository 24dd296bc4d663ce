#pragma once

// Whole-image restoration: overlapping patches through a network (or the
// iterative dual-domain baseline), optional interval projection, overlap
// averaging; and the easy-to-hard transfer chain over quality factors.

#include <d3/error.hpp>
#include <d3/image.hpp>
#include <d3/network.hpp>
#include <d3/patches.hpp>
#include <d3/sparse_coding.hpp>
#include <d3/train.hpp>

#include <chrono>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace d3 {

/// Which patches get their stage-1 DCT reconstruction clamped into matched intervals.
enum class ProjectMode {
  off,
  on,     // every patch, using the most similar coding block's intervals
  exact,  // only patches whose matched block is pixel-identical (all grid-aligned patches)
};

inline std::string to_string(ProjectMode m) {
  switch (m) {
    case ProjectMode::off: return "off";
    case ProjectMode::on: return "on";
    case ProjectMode::exact: return "exact";
  }
  return "?";
}

inline ProjectMode parse_project_mode(const std::string& s) {
  if (s == "off") return ProjectMode::off;
  if (s == "on") return ProjectMode::on;
  if (s == "exact") return ProjectMode::exact;
  throw ValidationError("--project must be on, off or exact, got '" + s + "'");
}

struct RestoreOptions {
  int stride = 4;
  ProjectMode project = ProjectMode::exact;
};

struct RestoreStats {
  std::size_t patches = 0;
  std::size_t projected = 0;      // patches whose z was clamped
  std::size_t exact_matches = 0;  // patches with a distance-0 interval match
  double network_seconds = 0.0;   // time inside the network / solver only
};

struct Restored {
  GrayImage image;
  RestoreStats stats;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Matched intervals (network units) for every patch; unconstrained where the mode skips it.
inline net::IntervalBatch patch_intervals(const GrayImage& degraded, const BlockGrid& blocks, const PatchGrid& grid,
                                          ProjectMode mode, RestoreStats& stats) {
  const auto n = static_cast<Eigen::Index>(grid.origins.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  net::IntervalBatch iv{net::Matrix::Constant(kBlockSize, n, -inf), net::Matrix::Constant(kBlockSize, n, inf)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const IntervalMatch m = match_intervals(degraded, blocks, grid.origins[static_cast<std::size_t>(j)]);
    if (m.distance == 0.0) ++stats.exact_matches;
    if (mode == ProjectMode::exact && m.distance != 0.0) continue;
    iv.lower.col(j) = net::kSampleScale * m.intervals.lower;
    iv.upper.col(j) = net::kSampleScale * m.intervals.upper;
    ++stats.projected;
  }
  return iv;
}

}  // namespace detail

/// Runs `net` (network units in, network units out) over all patches and averages overlaps.
inline Restored restore_patchwise(const GrayImage& degraded, int stride,
                                  const std::function<net::Matrix(const net::Matrix&, const PatchGrid&)>& net) {
  PatchGrid grid = extract_patches(degraded, stride);
  Restored r;
  r.stats.patches = grid.origins.size();
  const auto t0 = detail::Clock::now();
  net::Matrix out = net(net::kSampleScale * grid.patches, grid);
  r.stats.network_seconds = detail::seconds_since(t0);
  if (out.rows() != kBlockSize || out.cols() != grid.patches.cols())
    throw ValidationError("patch model returned the wrong number of values");
  grid.patches = out / net::kSampleScale;
  r.image = aggregate(grid, degraded.width, degraded.height);
  return r;
}

inline Restored restore_image(const net::D3Model& model, const GrayImage& degraded, const BlockGrid& blocks,
                              const RestoreOptions& opt = {}) {
  net::validate(model);
  RestoreStats pre;
  const auto body = [&](const net::Matrix& x, const PatchGrid& grid) {
    if (opt.project == ProjectMode::off) return net::forward(x, model).out;
    const net::IntervalBatch iv = detail::patch_intervals(degraded, blocks, grid, opt.project, pre);
    return net::forward(x, model, &iv).out;
  };
  Restored r = restore_patchwise(degraded, opt.stride, body);
  r.stats.projected = pre.projected;
  r.stats.exact_matches = pre.exact_matches;
  return r;
}

inline Restored restore_image(const net::DBaseModel& model, const GrayImage& degraded, int stride = 4) {
  return restore_patchwise(degraded, stride,
                           [&](const net::Matrix& x, const PatchGrid&) { return net::dbase_forward(x, model).out; });
}

/// Iterative dual-domain restoration of every patch (the slow baseline).
inline Restored restore_image(const sparse::DualDomainSolver& solver, const GrayImage& degraded,
                              const BlockGrid& blocks, int stride = 4) {
  return restore_patchwise(degraded, stride, [&](const net::Matrix& x, const PatchGrid& grid) {
    net::Matrix out(kBlockSize, x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const IntervalMatch m = match_intervals(degraded, blocks, grid.origins[static_cast<std::size_t>(j)]);
      jpeg::DegradedPatch p{x.col(j), {net::kSampleScale * m.intervals.lower, net::kSampleScale * m.intervals.upper}};
      out.col(j) = solver.solve(p).restored;
    }
    return out;
  });
}

/// Trains one model per quality (strictly decreasing), each initialised from the previous one.
inline std::vector<net::D3Model> transfer_chain(
    const std::vector<int>& qualities, const net::TrainConfig& cfg, net::D3Model initial,
    const std::function<net::TrainingTensors(int quality)>& data_for,
    const std::function<void(int quality, const net::D3Model& start)>& on_start = {}) {
  if (qualities.empty()) throw ValidationError("transfer chain needs at least one quality");
  for (std::size_t i = 1; i < qualities.size(); ++i)
    if (qualities[i] >= qualities[i - 1]) throw ValidationError("transfer chain qualities must be strictly decreasing");
  std::vector<net::D3Model> out;
  net::D3Model current = std::move(initial);
  for (int q : qualities) {
    current.meta.quality = q;
    if (on_start) on_start(q, current);
    net::D3Model trained = net::train(data_for(q), cfg, current);
    trained.meta.quality = q;
    out.push_back(trained);
    current = std::move(trained);
  }
  return out;
}

}  // namespace d3
