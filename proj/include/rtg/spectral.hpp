#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rtg/error.hpp"
#include "rtg/graph.hpp"

namespace rtg {

enum class LaplacianKind { normalized, combinatorial };
enum class SolverKind { dense, iterative };

inline const char* to_string(LaplacianKind k) { return k == LaplacianKind::normalized ? "normalized" : "combinatorial"; }
inline const char* to_string(SolverKind k) { return k == SolverKind::dense ? "dense" : "iterative"; }

/// Components up to this size use the dense eigensolver.
inline constexpr std::size_t kDenseSolverLimit = 2000;

namespace detail {

inline std::vector<double> inv_sqrt_degrees(const Rtg& g) {
  std::vector<double> out(g.node_count());
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    if (g.degree(v) == 0) throw InvalidArgument("normalized Laplacian undefined at isolated node " + std::to_string(v));
    out[v] = 1.0 / std::sqrt(static_cast<double>(g.degree(v)));
  }
  return out;
}

/// Unit vector spanning the Laplacian null space of a connected graph.
inline Eigen::VectorXd null_vector(const Rtg& g, LaplacianKind kind) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(g.node_count()));
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    u(static_cast<Eigen::Index>(v)) =
        kind == LaplacianKind::normalized ? std::sqrt(static_cast<double>(g.degree(v))) : 1.0;
  }
  return u.normalized();
}

}  // namespace detail

inline Eigen::MatrixXd laplacian_dense(const Rtg& g, LaplacianKind kind) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  if (kind == LaplacianKind::combinatorial) {
    for (const auto& [i, j] : g.edges()) {
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      lap(a, b) = lap(b, a) = -1.0;
      lap(a, a) += 1.0;
      lap(b, b) += 1.0;
    }
    return lap;
  }
  const auto s = detail::inv_sqrt_degrees(g);
  lap.diagonal().setOnes();
  for (const auto& [i, j] : g.edges()) {
    const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
    lap(a, b) = lap(b, a) = -s[i] * s[j];
  }
  return lap;
}

inline Eigen::SparseMatrix<double> laplacian_sparse(const Rtg& g, LaplacianKind kind) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(g.node_count() + 2 * g.edge_count());
  if (kind == LaplacianKind::combinatorial) {
    for (std::size_t v = 0; v < g.node_count(); ++v) {
      trips.emplace_back(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(v), static_cast<double>(g.degree(v)));
    }
    for (const auto& [i, j] : g.edges()) {
      trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), -1.0);
      trips.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i), -1.0);
    }
  } else {
    const auto s = detail::inv_sqrt_degrees(g);
    for (std::size_t v = 0; v < g.node_count(); ++v)
      trips.emplace_back(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(v), 1.0);
    for (const auto& [i, j] : g.edges()) {
      trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), -s[i] * s[j]);
      trips.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i), -s[i] * s[j]);
    }
  }
  Eigen::SparseMatrix<double> lap(n, n);
  lap.setFromTriplets(trips.begin(), trips.end());
  return lap;
}

/// All Laplacian eigenvalues in ascending order.
inline Eigen::VectorXd laplacian_spectrum_dense(const Rtg& g, LaplacianKind kind) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian_dense(g, kind), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("dense eigensolver failed");
  return solver.eigenvalues();
}

struct EigenResult {
  double value = 0.0;
  Eigen::VectorXd vector;
  SolverKind solver = SolverKind::dense;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Second-smallest Laplacian eigenpair of a connected graph via a full dense
/// symmetric eigendecomposition.
inline EigenResult lambda2_dense(const Rtg& g, LaplacianKind kind) {
  require(g.node_count() >= 2, "lambda2: need at least 2 nodes");
  const Eigen::MatrixXd lap = laplacian_dense(g, kind);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
  if (solver.info() != Eigen::Success) throw NumericError("dense eigensolver failed");
  EigenResult r;
  r.solver = SolverKind::dense;
  r.value = solver.eigenvalues()(1);
  r.vector = solver.eigenvectors().col(1);
  r.residual = (lap * r.vector - r.value * r.vector).norm();
  r.iterations = 1;
  return r;
}

struct IterativeOptions {
  double tolerance = 1e-8;  // on ||L v - lambda v|| with ||v|| = 1
  std::size_t basis = 40;   // Lanczos steps per restart
  std::size_t max_restarts = 200;
  double shift = 1e-3;
};

/// Second-smallest Laplacian eigenpair of a connected graph by shift-invert
/// Lanczos on (L + shift I)^{-1}, with the known null vector projected out of
/// every Krylov vector. Restarts from the current Ritz vector until the
/// residual on L itself meets the tolerance.
inline EigenResult lambda2_iterative(const Rtg& g, LaplacianKind kind, const IterativeOptions& opt = {}) {
  require(g.node_count() >= 2, "lambda2: need at least 2 nodes");
  const auto n = static_cast<Eigen::Index>(g.node_count());
  const Eigen::SparseMatrix<double> lap = laplacian_sparse(g, kind);
  Eigen::SparseMatrix<double> shifted = lap;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += opt.shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw NumericError("lambda2_iterative: factorization failed");

  const Eigen::VectorXd u0 = detail::null_vector(g, kind);
  auto deflate = [&](Eigen::VectorXd& x) { x -= u0.dot(x) * u0; };

  Eigen::VectorXd start(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    start(i) = static_cast<double>(detail::splitmix64(static_cast<std::uint64_t>(i) + 17) >> 11) * 0x1.0p-53 - 0.5;
  }
  deflate(start);
  start.normalize();

  const auto k_max = static_cast<Eigen::Index>(std::min<std::size_t>(opt.basis, g.node_count() - 1));
  EigenResult r;
  r.solver = SolverKind::iterative;
  Eigen::MatrixXd basis(n, k_max + 1);
  for (std::size_t restart = 0; restart <= opt.max_restarts; ++restart) {
    basis.col(0) = start;
    std::vector<double> alpha, beta;
    Eigen::Index steps = 0;
    for (Eigen::Index j = 0; j < k_max; ++j) {
      Eigen::VectorXd w = ldlt.solve(Eigen::VectorXd(basis.col(j)));
      deflate(w);
      alpha.push_back(basis.col(j).dot(w));
      // Two passes of full reorthogonalization.
      for (int pass = 0; pass < 2; ++pass) {
        w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
        deflate(w);
      }
      ++steps;
      ++r.iterations;
      const double b = w.norm();
      if (j + 1 == k_max || b < 1e-12) break;
      beta.push_back(b);
      basis.col(j + 1) = w / b;
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(t);
    Eigen::VectorXd ritz = basis.leftCols(steps) * small.eigenvectors().col(steps - 1);
    deflate(ritz);
    ritz.normalize();
    const Eigen::VectorXd lv = lap * ritz;
    r.value = ritz.dot(lv);
    r.vector = ritz;
    r.residual = (lv - r.value * ritz).norm();
    if (r.residual <= opt.tolerance) return r;
    start = ritz;
  }
  throw NumericError("lambda2_iterative: no convergence, residual " + std::to_string(r.residual));
}

struct Lambda2Result {
  EigenResult eigen;
  std::size_t component_id = 0;
  std::size_t component_size = 0;
};

/// lambda_2 of the largest connected component. Dense solver up to
/// kDenseSolverLimit nodes, iterative above.
inline Lambda2Result lambda2(const Rtg& g, LaplacianKind kind) {
  const auto comps = connected_components(g);
  require(comps.count() > 0, "lambda2: graph has no nodes");
  const std::size_t id = comps.largest();
  if (comps.sizes[id] < 2) throw InvalidArgument("lambda2: every node is isolated, no component with an edge");
  const Rtg sub = induced_subgraph(g, comps.members(id));
  Lambda2Result out;
  out.component_id = id;
  out.component_size = sub.node_count();
  out.eigen = sub.node_count() <= kDenseSolverLimit ? lambda2_dense(sub, kind) : lambda2_iterative(sub, kind);
  return out;
}

struct SpectralReport {
  double lambda2_normalized = 0.0;
  double lambda2_combinatorial = 0.0;
  std::size_t component_id = 0;
  std::size_t component_size = 0;
  SolverKind solver = SolverKind::dense;
  std::size_t iterations = 0;
  double residual = 0.0;
};

inline SpectralReport spectral_report(const Rtg& g) {
  const auto norm = lambda2(g, LaplacianKind::normalized);
  const auto comb = lambda2(g, LaplacianKind::combinatorial);
  SpectralReport rep;
  rep.lambda2_normalized = norm.eigen.value;
  rep.lambda2_combinatorial = comb.eigen.value;
  rep.component_id = norm.component_id;
  rep.component_size = norm.component_size;
  rep.solver = norm.eigen.solver;
  rep.iterations = norm.eigen.iterations + comb.eigen.iterations;
  rep.residual = std::max(norm.eigen.residual, comb.eigen.residual);
  return rep;
}

/// One row per node, one column per signal dimension.
struct RegionSignal {
  Eigen::MatrixXd values;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
};

/// Smoothness energy with unit edge weights, summed over ordered node pairs
/// with the 1/2 prefactor. Equals trace(phi^T L phi) for the combinatorial
/// Laplacian.
inline double dirichlet_energy(const Rtg& g, const RegionSignal& phi) {
  require(phi.size() == g.node_count(), "dirichlet_energy: signal has " + std::to_string(phi.size()) +
                                            " rows, graph has " + std::to_string(g.node_count()) + " nodes");
  require(phi.values.allFinite(), "dirichlet_energy: signal must be finite");
  double energy = 0.0;
  for (const auto& [i, j] : g.edges()) {
    energy += (phi.values.row(static_cast<Eigen::Index>(i)) - phi.values.row(static_cast<Eigen::Index>(j))).squaredNorm();
  }
  return energy;
}

/// Sum of squared deviations from the unweighted mean signal.
inline double signal_variance(const RegionSignal& phi) {
  require(phi.size() >= 1, "signal_variance: empty signal");
  const Eigen::RowVectorXd mean = phi.values.colwise().mean();
  return (phi.values.rowwise() - mean).squaredNorm();
}

/// Network output at each region centroid.
inline RegionSignal centroid_signal(const MlpParams& params, const RegionTable& table) {
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(params.config.input_dim), static_cast<Eigen::Index>(table.size()));
  for (const auto& r : table.regions()) centroids.col(static_cast<Eigen::Index>(r.id)) = r.centroid;
  return {forward_outputs(params, centroids).transpose()};
}

/// Restriction of a signal to a subset of node ids.
inline RegionSignal restrict_signal(const RegionSignal& phi, const std::vector<std::size_t>& nodes) {
  RegionSignal out;
  out.values.resize(static_cast<Eigen::Index>(nodes.size()), phi.values.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    out.values.row(static_cast<Eigen::Index>(i)) = phi.values.row(static_cast<Eigen::Index>(nodes[i]));
  return out;
}

}  // namespace rtg
