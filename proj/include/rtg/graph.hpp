#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rtg/error.hpp"
#include "rtg/regions.hpp"

namespace rtg {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected simple graph over region ids. Edges are stored once as (i, j)
/// with i < j in lexicographic order; adjacency lists are sorted.
class Rtg {
 public:
  Rtg() = default;

  Rtg(std::size_t node_count, std::size_t n_bits, std::vector<Edge> edges)
      : node_count_(node_count), n_bits_(n_bits), edges_(std::move(edges)), adjacency_(node_count) {
    std::sort(edges_.begin(), edges_.end());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto [i, j] = edges_[e];
      require(i < j, "Rtg: edge endpoints must satisfy i < j");
      require(j < node_count_, "Rtg: edge endpoint out of range");
      require(e == 0 || edges_[e - 1] != edges_[e], "Rtg: duplicate edge");
      adjacency_[i].push_back(j);
      adjacency_[j].push_back(i);
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
  }

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t n_bits() const noexcept { return n_bits_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t v) const { return adjacency_.at(v); }
  std::size_t degree(std::size_t v) const { return adjacency_.at(v).size(); }

  friend bool operator==(const Rtg& a, const Rtg& b) {
    return a.node_count_ == b.node_count_ && a.n_bits_ == b.n_bits_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t node_count_ = 0;
  std::size_t n_bits_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// Connects every pair of regions whose patterns differ in exactly one bit.
/// Each of the N*n single-bit flips is an O(1) probe of an XOR-hash index;
/// candidates are confirmed by an exact Hamming-distance check.
inline Rtg build_rtg(const RegionTable& table) {
  require(!table.empty(), "build_rtg: region table is empty");
  const auto& regions = table.regions();
  std::unordered_multimap<std::uint64_t, std::size_t> by_hash;
  by_hash.reserve(regions.size());
  for (const auto& r : regions) by_hash.emplace(r.pattern.hash(), r.id);

  std::vector<Edge> edges;
  const std::size_t n = table.n_bits();
  for (const auto& r : regions) {
    const std::uint64_t h = r.pattern.hash();
    for (std::size_t bit = 0; bit < n; ++bit) {
      const auto [lo, hi] = by_hash.equal_range(h ^ bit_key(bit));
      for (auto it = lo; it != hi; ++it) {
        const std::size_t other = it->second;
        if (other <= r.id) continue;
        if (!regions[other].pattern.test(bit) == !r.pattern.test(bit)) continue;
        if (hamming_distance(r.pattern, regions[other].pattern) == 1) edges.emplace_back(r.id, other);
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return Rtg(table.size(), n, std::move(edges));
}

/// Exhaustive O(N^2 n) check that `g` holds exactly the distance-1 pairs.
inline bool verify_rtg_bruteforce(const RegionTable& table, const Rtg& g) {
  require(table.size() <= 5000, "verify_rtg_bruteforce: table too large for the exhaustive oracle");
  if (g.node_count() != table.size()) return false;
  std::vector<Edge> expected;
  const auto& regions = table.regions();
  for (std::size_t i = 0; i < regions.size(); ++i)
    for (std::size_t j = i + 1; j < regions.size(); ++j)
      if (hamming_distance(regions[i].pattern, regions[j].pattern) == 1) expected.emplace_back(i, j);
  return expected == g.edges();
}

struct DegreeStats {
  std::vector<std::size_t> degrees;
  double mean_degree = 0.0;
  std::map<std::size_t, std::size_t> histogram;
  std::size_t n = 0;  // hypercube dimension, total hidden units
  double p_hat = 0.0;
};

inline DegreeStats make_degree_stats(std::vector<std::size_t> degrees, std::size_t n_bits) {
  DegreeStats s;
  s.n = n_bits;
  s.degrees = std::move(degrees);
  for (auto d : s.degrees) ++s.histogram[d];
  if (!s.degrees.empty()) {
    const double sum = static_cast<double>(std::accumulate(s.degrees.begin(), s.degrees.end(), std::size_t{0}));
    s.mean_degree = sum / static_cast<double>(s.degrees.size());
  }
  s.p_hat = n_bits ? s.mean_degree / static_cast<double>(n_bits) : 0.0;
  return s;
}

inline DegreeStats degree_stats(const Rtg& g) {
  require(g.node_count() >= 1, "degree_stats: graph has no nodes");
  std::vector<std::size_t> degrees(g.node_count());
  for (std::size_t v = 0; v < g.node_count(); ++v) degrees[v] = g.degree(v);
  return make_degree_stats(std::move(degrees), g.n_bits());
}

/// Concatenates degree samples from graphs sharing the same n.
inline DegreeStats pool_degree_stats(const std::vector<DegreeStats>& parts) {
  require(!parts.empty(), "pool_degree_stats: nothing to pool");
  std::vector<std::size_t> all;
  for (const auto& p : parts) {
    require(p.n == parts.front().n, "pool_degree_stats: mismatched n");
    all.insert(all.end(), p.degrees.begin(), p.degrees.end());
  }
  return make_degree_stats(std::move(all), parts.front().n);
}

struct ComponentInfo {
  std::vector<std::size_t> component_id;  // per node
  std::vector<std::size_t> sizes;         // indexed by component id
  std::vector<std::size_t> sizes_desc;

  std::size_t count() const noexcept { return sizes.size(); }

  /// Id of the biggest component; ties go to the lower id.
  std::size_t largest() const {
    require(!sizes.empty(), "ComponentInfo: no components");
    return static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  }

  std::vector<std::size_t> members(std::size_t id) const {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < component_id.size(); ++v)
      if (component_id[v] == id) out.push_back(v);
    return out;
  }
};

/// Components are numbered in order of their smallest node id.
inline ComponentInfo connected_components(const Rtg& g) {
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  ComponentInfo info;
  info.component_id.assign(g.node_count(), kUnset);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < g.node_count(); ++start) {
    if (info.component_id[start] != kUnset) continue;
    const std::size_t id = info.sizes.size();
    info.sizes.push_back(0);
    info.component_id[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ++info.sizes[id];
      for (auto w : g.neighbors(v)) {
        if (info.component_id[w] == kUnset) {
          info.component_id[w] = id;
          stack.push_back(w);
        }
      }
    }
  }
  info.sizes_desc = info.sizes;
  std::sort(info.sizes_desc.begin(), info.sizes_desc.end(), std::greater<>());
  return info;
}

/// Subgraph induced by `nodes` (sorted, distinct), relabelled 0..k-1 in order.
inline Rtg induced_subgraph(const Rtg& g, const std::vector<std::size_t>& nodes) {
  constexpr auto kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local(g.node_count(), kAbsent);
  for (std::size_t i = 0; i < nodes.size(); ++i) local.at(nodes[i]) = i;
  std::vector<Edge> edges;
  for (const auto& [i, j] : g.edges()) {
    if (local[i] != kAbsent && local[j] != kAbsent) {
      edges.emplace_back(std::min(local[i], local[j]), std::max(local[i], local[j]));
    }
  }
  return Rtg(nodes.size(), g.n_bits(), std::move(edges));
}

}  // namespace rtg
