#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "rtg/error.hpp"
#include "rtg/graph.hpp"
#include "rtg/mlp.hpp"
#include "rtg/regions.hpp"

namespace rtg {

// ---------------------------------------------------------------------------
// Edge expansion

struct ExpansionReport {
  std::size_t subset_size = 0;
  std::size_t sample_count = 0;
  std::vector<double> values;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::uint64_t seed = 0;
  std::size_t component_size = 0;
};

/// |boundary(S)| / |S|, counting edges with exactly one endpoint in S.
inline double subset_expansion(const Rtg& g, const std::vector<std::size_t>& subset) {
  require(!subset.empty(), "subset_expansion: empty subset");
  std::vector<char> in(g.node_count(), 0);
  for (auto v : subset) {
    require(v < g.node_count(), "subset_expansion: node out of range");
    require(!in[v], "subset_expansion: repeated node");
    in[v] = 1;
  }
  std::size_t boundary = 0;
  for (auto v : subset)
    for (auto w : g.neighbors(v))
      if (!in[w]) ++boundary;
  return static_cast<double>(boundary) / static_cast<double>(subset.size());
}

/// Samples `samples` uniform subsets of the largest component and records h(S).
inline ExpansionReport edge_expansion(const Rtg& g, std::size_t subset_size = 10, std::size_t samples = 500,
                                      std::uint64_t seed = 0) {
  require(subset_size >= 1, "edge_expansion: subset_size must be >= 1");
  require(samples >= 1, "edge_expansion: samples must be >= 1");
  require(g.node_count() > 0, "edge_expansion: empty graph");
  const auto comps = connected_components(g);
  const auto nodes = comps.members(comps.largest());
  if (nodes.size() <= subset_size) {
    throw InvalidArgument("edge_expansion: largest component has " + std::to_string(nodes.size()) +
                          " nodes, need more than subset_size " + std::to_string(subset_size));
  }
  ExpansionReport rep;
  rep.subset_size = subset_size;
  rep.sample_count = samples;
  rep.seed = seed;
  rep.component_size = nodes.size();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool = nodes;
  std::vector<std::size_t> subset(subset_size);
  for (std::size_t s = 0; s < samples; ++s) {
    // Partial Fisher-Yates: the first subset_size slots become the sample.
    for (std::size_t i = 0; i < subset_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      subset[i] = pool[i];
    }
    rep.values.push_back(subset_expansion(g, subset));
  }
  rep.min = *std::min_element(rep.values.begin(), rep.values.end());
  rep.max = *std::max_element(rep.values.begin(), rep.values.end());
  double sum = 0.0;
  for (double v : rep.values) sum += v;
  rep.mean = sum / static_cast<double>(rep.values.size());
  return rep;
}

// ---------------------------------------------------------------------------
// Region entropy

struct EntropyReport {
  double entropy_nats = 0.0;
  std::size_t region_count = 0;
  double max_entropy = 0.0;  // ln(total points), the sampling ceiling
  std::size_t n_eff = 0;     // top-mass regions covering >= 99% of the mass
  double n_eff_coverage = 0.99;
};

inline EntropyReport region_entropy(const RegionTable& table, double coverage = 0.99) {
  require(!table.empty(), "region_entropy: empty table");
  EntropyReport rep;
  rep.region_count = table.size();
  rep.max_entropy = std::log(static_cast<double>(table.total_points()));
  rep.n_eff_coverage = coverage;
  std::vector<double> masses;
  masses.reserve(table.size());
  for (const auto& r : table.regions()) {
    masses.push_back(r.mass);
    if (r.mass > 0.0) rep.entropy_nats -= r.mass * std::log(r.mass);
  }
  rep.entropy_nats = std::max(rep.entropy_nats, 0.0);
  std::sort(masses.begin(), masses.end(), std::greater<>());
  double cumulative = 0.0;
  for (double m : masses) {
    cumulative += m;
    ++rep.n_eff;
    if (cumulative >= coverage - 1e-12) break;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Binomial degree fit

struct DegreeFitReport {
  std::size_t n = 0;
  double p_hat = 0.0;
  double mean_degree = 0.0;
  std::size_t node_count = 0;
  double tv_distance = 0.0;
  std::vector<double> empirical;  // index = degree, 0..n
  std::vector<double> binomial;
};

/// Binomial(n, p) pmf over 0..n, evaluated through lgamma.
inline std::vector<double> binomial_pmf(std::size_t n, double p) {
  std::vector<double> pmf(n + 1, 0.0);
  if (p <= 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  if (p >= 1.0) {
    pmf[n] = 1.0;
    return pmf;
  }
  const double nn = static_cast<double>(n);
  const double lp = std::log(p), lq = std::log1p(-p);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double log_choose = std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0);
    pmf[k] = std::exp(log_choose + kk * lp + (nn - kk) * lq);
  }
  return pmf;
}

inline DegreeFitReport binomial_fit(const DegreeStats& stats) {
  require(stats.n >= 1, "binomial_fit: n must be >= 1");
  require(!stats.degrees.empty(), "binomial_fit: no degrees");
  DegreeFitReport rep;
  rep.n = stats.n;
  rep.p_hat = stats.p_hat;
  rep.mean_degree = stats.mean_degree;
  rep.node_count = stats.degrees.size();
  rep.empirical.assign(stats.n + 1, 0.0);
  const double total = static_cast<double>(stats.degrees.size());
  for (const auto& [degree, count] : stats.histogram) {
    require(degree <= stats.n, "binomial_fit: degree exceeds n");
    rep.empirical[degree] = static_cast<double>(count) / total;
  }
  rep.binomial = binomial_pmf(stats.n, stats.p_hat);
  double tv = 0.0;
  for (std::size_t k = 0; k <= stats.n; ++k) tv += std::abs(rep.empirical[k] - rep.binomial[k]);
  rep.tv_distance = 0.5 * tv;
  return rep;
}

// ---------------------------------------------------------------------------
// Edge KL divergence

struct EdgeKlReport {
  std::vector<double> per_edge_kl;  // KL(p_i || p_j) for edge (i, j), i < j
  double mean_kl = 0.0;
  double mean_symmetric_kl = 0.0;
  double epsilon = 1e-8;
  bool edgeless = false;
};

/// Floors every entry at epsilon and renormalizes.
inline Eigen::VectorXd floor_probabilities(const Eigen::VectorXd& p, double epsilon) {
  Eigen::VectorXd q = p.cwiseMax(epsilon);
  return q / q.sum();
}

inline double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double epsilon = 1e-8) {
  require(p.size() == q.size(), "kl_divergence: size mismatch");
  const Eigen::VectorXd a = floor_probabilities(p, epsilon);
  const Eigen::VectorXd b = floor_probabilities(q, epsilon);
  double kl = 0.0;
  for (Eigen::Index c = 0; c < a.size(); ++c) kl += a(c) * std::log(a(c) / b(c));
  return std::max(kl, 0.0);
}

/// Mean over RTG edges of the KL divergence between the regions' mean softmax
/// outputs, directed from lower to higher region id.
inline EdgeKlReport mean_edge_kl(const Rtg& g, const RegionTable& table, double epsilon = 1e-8) {
  require(table.output_mode() == OutputMode::softmax, "mean_edge_kl: table must carry softmax mean outputs");
  require(g.node_count() == table.size(), "mean_edge_kl: graph and table sizes differ");
  require(epsilon > 0.0 && epsilon < 1.0, "mean_edge_kl: epsilon must lie in (0, 1)");
  EdgeKlReport rep;
  rep.epsilon = epsilon;
  if (g.edge_count() == 0) {
    rep.edgeless = true;
    return rep;
  }
  double sum = 0.0, sym = 0.0;
  for (const auto& [i, j] : g.edges()) {
    const auto& p = table[i].mean_output;
    const auto& q = table[j].mean_output;
    const double forward_kl = kl_divergence(p, q, epsilon);
    rep.per_edge_kl.push_back(forward_kl);
    sum += forward_kl;
    sym += 0.5 * (forward_kl + kl_divergence(q, p, epsilon));
  }
  const double e = static_cast<double>(g.edge_count());
  rep.mean_kl = sum / e;
  rep.mean_symmetric_kl = sym / e;
  return rep;
}

// ---------------------------------------------------------------------------
// Generalization gap

struct GenReport {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double gap = 0.0;
};

inline GenReport generalization_gap(const MlpParams& params, const LabeledDataset& data) {
  data.validate();
  GenReport rep;
  rep.train_accuracy = accuracy(params, data.train_inputs(), data.train_labels());
  rep.test_accuracy = accuracy(params, data.test_inputs(), data.test_labels());
  rep.gap = rep.train_accuracy - rep.test_accuracy;
  return rep;
}

}  // namespace rtg
