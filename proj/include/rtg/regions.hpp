#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <unordered_map>
#include <vector>

#include "rtg/error.hpp"
#include "rtg/mlp.hpp"
#include "rtg/pattern.hpp"

namespace rtg {

/// Points stored as columns of a (dim x count) matrix.
struct InputSet {
  enum class Kind { grid, explicit_points };

  Kind kind = Kind::explicit_points;
  Eigen::MatrixXd points;
  std::size_t resolution = 0;  // grid only
  double lo = 0.0;
  double hi = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(points.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points.rows()); }
};

/// resolution^2 points of [lo,hi]^2, endpoints included, x1 varying fastest.
inline InputSet make_grid(std::size_t resolution, double lo, double hi) {
  require(resolution >= 2, "make_grid: resolution must be >= 2");
  require(lo < hi, "make_grid: lo must be < hi");
  InputSet set;
  set.kind = InputSet::Kind::grid;
  set.resolution = resolution;
  set.lo = lo;
  set.hi = hi;
  std::vector<double> axis(resolution);
  // Divide last so no multiply-add gets contracted; the center of a symmetric odd grid stays exactly 0.
  const double intervals = static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < resolution; ++i) axis[i] = lo + (hi - lo) * static_cast<double>(i) / intervals;
  axis.back() = hi;
  set.points.resize(2, static_cast<Eigen::Index>(resolution * resolution));
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      const auto col = static_cast<Eigen::Index>(r * resolution + c);
      set.points(0, col) = axis[c];
      set.points(1, col) = axis[r];
    }
  }
  return set;
}

inline InputSet make_explicit_inputs(Eigen::MatrixXd points) {
  require(points.allFinite(), "make_explicit_inputs: points must be finite");
  InputSet set;
  set.kind = InputSet::Kind::explicit_points;
  set.points = std::move(points);
  return set;
}

enum class OutputMode { raw, softmax };

struct Region {
  std::size_t id = 0;
  ActivationPattern pattern;
  std::size_t member_count = 0;
  double mass = 0.0;
  Eigen::VectorXd centroid;
  Eigen::VectorXd mean_output;
};

/// Deduplicated regions in first-occurrence order with a hash index from
/// pattern to region id.
class RegionTable {
 public:
  RegionTable() = default;

  RegionTable(std::vector<Region> regions, std::size_t total_points, std::size_t n_bits, OutputMode mode)
      : regions_(std::move(regions)), total_points_(total_points), n_bits_(n_bits), mode_(mode) {
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      require(regions_[i].id == i, "RegionTable: region ids must be dense and ordered");
      require(regions_[i].pattern.size() == n_bits_, "RegionTable: pattern length mismatch");
      const auto [it, inserted] = index_.emplace(regions_[i].pattern, i);
      require(inserted, "RegionTable: duplicate pattern");
    }
  }

  const std::vector<Region>& regions() const noexcept { return regions_; }
  const Region& operator[](std::size_t id) const { return regions_.at(id); }
  std::size_t size() const noexcept { return regions_.size(); }
  bool empty() const noexcept { return regions_.empty(); }
  std::size_t total_points() const noexcept { return total_points_; }
  std::size_t n_bits() const noexcept { return n_bits_; }
  OutputMode output_mode() const noexcept { return mode_; }

  /// Id of the region holding `pattern`, if any.
  std::optional<std::size_t> lookup(const ActivationPattern& pattern) const {
    require(pattern.size() == n_bits_, "region_lookup: pattern has " + std::to_string(pattern.size()) +
                                           " bits, table has " + std::to_string(n_bits_));
    const auto it = index_.find(pattern);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<Region> regions_;
  std::unordered_map<ActivationPattern, std::size_t, PatternHash> index_;
  std::size_t total_points_ = 0;
  std::size_t n_bits_ = 0;
  OutputMode mode_ = OutputMode::raw;
};

inline std::optional<std::size_t> region_lookup(const RegionTable& table, const ActivationPattern& pattern) {
  return table.lookup(pattern);
}

/// Groups points by activation pattern. Region ids follow first occurrence in
/// input order; mass is the member fraction of all points.
inline RegionTable extract_regions(const MlpParams& params, const InputSet& inputs,
                                   OutputMode mode = OutputMode::raw) {
  require(inputs.size() > 0, "extract_regions: input set is empty");
  auto batch = forward_batch(params, inputs.points);
  const std::size_t n_bits = params.config.hidden_units();

  std::unordered_map<ActivationPattern, std::size_t, PatternHash> seen;
  std::vector<Region> regions;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    Eigen::VectorXd out = batch.outputs.col(col);
    if (mode == OutputMode::softmax) out = softmax(out);
    auto [it, inserted] = seen.try_emplace(batch.patterns[i], regions.size());
    if (inserted) {
      Region r;
      r.id = regions.size();
      r.pattern = std::move(batch.patterns[i]);
      r.centroid = Eigen::VectorXd::Zero(inputs.points.rows());
      r.mean_output = Eigen::VectorXd::Zero(out.size());
      regions.push_back(std::move(r));
    }
    Region& r = regions[it->second];
    ++r.member_count;
    r.centroid += inputs.points.col(col);
    r.mean_output += out;
  }
  const double total = static_cast<double>(inputs.size());
  for (auto& r : regions) {
    const double count = static_cast<double>(r.member_count);
    r.mass = count / total;
    r.centroid /= count;
    r.mean_output /= count;
  }
  return RegionTable(std::move(regions), inputs.size(), n_bits, mode);
}

}  // namespace rtg
