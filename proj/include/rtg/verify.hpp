#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rtg/graph.hpp"
#include "rtg/mlp.hpp"
#include "rtg/regions.hpp"
#include "rtg/spectral.hpp"

namespace rtg {

/// Outcome of one self-check suite.
struct VerifyResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;  // largest observed error (or smallest slack for inequalities)
  std::string detail;
};

namespace detail {

inline MlpConfig random_small_config(std::mt19937_64& rng, std::size_t max_width, std::size_t outputs) {
  return {2, 1 + rng() % 3, 2 + rng() % max_width, outputs, std::sqrt(2.0), rng()};
}

inline Rtg random_largest_component(std::mt19937_64& rng, std::size_t min_nodes, std::size_t max_nodes) {
  for (;;) {
    const auto table = extract_regions(init_mlp(random_small_config(rng, 40, 1)), make_grid(20 + rng() % 60, -1, 1));
    const auto g = build_rtg(table);
    const auto comps = connected_components(g);
    const auto size = comps.sizes[comps.largest()];
    if (size >= min_nodes && size <= max_nodes) return induced_subgraph(g, comps.members(comps.largest()));
  }
}

}  // namespace detail

/// build_rtg against the all-pairs Hamming scan on random small nets.
inline VerifyResult verify_graph_oracle(std::uint64_t seed, std::size_t nets) {
  VerifyResult r;
  r.name = "graph_oracle";
  std::mt19937_64 rng(seed);
  while (r.cases < nets) {
    const auto table =
        extract_regions(init_mlp(detail::random_small_config(rng, 24, 1)), make_grid(10 + rng() % 70, -1, 1));
    if (table.size() > 5000) continue;
    if (!verify_rtg_bruteforce(table, build_rtg(table))) {
      r.passed = false;
      r.detail = "edge set mismatch on case " + std::to_string(r.cases);
      return r;
    }
    ++r.cases;
  }
  return r;
}

/// Iterative against dense second eigenvalue on random components.
inline VerifyResult verify_spectral(std::uint64_t seed, std::size_t components, double tol = 1e-6) {
  VerifyResult r;
  r.name = "spectral";
  std::mt19937_64 rng(seed);
  for (; r.cases < components; ++r.cases) {
    const auto g = detail::random_largest_component(rng, 50, 2000);
    for (auto kind : {LaplacianKind::normalized, LaplacianKind::combinatorial}) {
      const double diff = std::abs(lambda2_iterative(g, kind).value - lambda2_dense(g, kind).value);
      r.worst = std::max(r.worst, diff);
    }
  }
  r.passed = r.worst <= tol;
  if (!r.passed) r.detail = "iterative and dense disagree beyond tolerance";
  return r;
}

/// Dirichlet energy >= lambda2 * variance for random signals.
inline VerifyResult verify_fiedler(std::uint64_t seed, std::size_t components, double slack_tol = 1e-9) {
  VerifyResult r;
  r.name = "fiedler";
  r.worst = INFINITY;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  for (; r.cases < components; ++r.cases) {
    const auto g = detail::random_largest_component(rng, 5, 1000);
    const double l2 = lambda2(g, LaplacianKind::combinatorial).eigen.value;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(g.node_count()), 1 + static_cast<Eigen::Index>(rng() % 3));
    for (Eigen::Index k = 0; k < values.size(); ++k) values.data()[k] = n01(rng);
    const RegionSignal phi{values};
    r.worst = std::min(r.worst, dirichlet_energy(g, phi) - l2 * signal_variance(phi));
  }
  r.passed = r.worst >= -slack_tol;
  if (!r.passed) r.detail = "negative slack";
  return r;
}

/// Backprop against central differences, skipping samples near a ReLU kink.
inline VerifyResult verify_gradients(std::uint64_t seed, std::size_t nets, double tol = 1e-4) {
  VerifyResult r;
  r.name = "gradient";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  const double h = 1e-5;
  while (r.cases < nets) {
    const MlpConfig cfg{2, 1 + rng() % 3, 1 + rng() % 8, 2 + rng() % 3, std::sqrt(2.0), rng()};
    auto p = init_mlp(cfg);
    Eigen::MatrixXd xs(2, 8);
    std::vector<int> ys(8);
    for (Eigen::Index c = 0; c < xs.cols(); ++c) {
      xs.col(c) << u(rng), u(rng);
      ys[static_cast<std::size_t>(c)] = static_cast<int>(rng() % cfg.output_dim);
    }
    double margin = INFINITY;
    Eigen::MatrixXd act = xs;
    for (std::size_t l = 0; l + 1 < p.weights.size(); ++l) {
      Eigen::MatrixXd z = p.weights[l] * act;
      z.colwise() += p.biases[l];
      margin = std::min(margin, z.cwiseAbs().minCoeff());
      act = z.cwiseMax(0.0);
    }
    if (margin < 1e-3) continue;

    const auto grad = loss_and_gradient(p, xs, ys).second;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = cross_entropy_loss(p, xs, ys);
      param = saved - h;
      const double down = cross_entropy_loss(p, xs, ys);
      param = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
      r.worst = std::max(r.worst, std::abs(analytic - numeric) / scale);
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) check(p.weights[l].data()[i], grad.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) check(p.biases[l](i), grad.biases[l](i));
    }
    ++r.cases;
  }
  r.passed = r.worst <= tol;
  if (!r.passed) r.detail = "relative gradient error above tolerance";
  return r;
}

inline std::vector<VerifyResult> verify_all(std::uint64_t seed) {
  return {verify_graph_oracle(seed, 50), verify_spectral(seed + 1, 20), verify_fiedler(seed + 2, 50),
          verify_gradients(seed + 3, 20)};
}

}  // namespace rtg
