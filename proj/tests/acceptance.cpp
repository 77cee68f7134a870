// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails. Pass criterion numbers as arguments
// to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rtg/rtg.hpp"
#include "test_util.hpp"

namespace {

using namespace rtg;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

template <typename T>
std::string join(const std::vector<T>& xs, int prec = 4) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + fmt(static_cast<double>(xs[i]), prec);
  return out;
}

std::vector<RunRow> rows_at(const RunRecord& rec, std::size_t depth, std::size_t width) {
  std::vector<RunRow> out;
  for (const auto& r : rec.rows)
    if (r.depth == depth && r.width == width) out.push_back(r);
  return out;
}

std::string failure_text(const RunRecord& rec) {
  std::string out;
  for (const auto& f : rec.failures) out += " [" + f.stage + " d" + std::to_string(f.depth) + " w" + std::to_string(f.width) +
                                            " s" + std::to_string(f.seed) + ": " + f.message + "]";
  return out;
}

Outcome entropy_saturation() {
  const auto cfg = default_config(ExperimentKind::e3_entropy);
  const auto rec = run_experiment(cfg);
  if (!rec.ok()) return {false, "stage failures:" + failure_text(rec)};
  std::size_t inversions = 0;
  for (auto seed : cfg.seeds) {
    double prev = -1.0;
    for (auto w : cfg.widths) {
      for (const auto& r : rec.rows) {
        if (r.seed != seed || r.width != w) continue;
        const double count = r.get("region_count");
        if (count < prev) ++inversions;
        prev = count;
      }
    }
  }
  const auto top = rows_at(rec, 2, 1024);
  double min_regions = INFINITY, min_h = INFINITY, max_h = -INFINITY;
  for (const auto& r : top) {
    min_regions = std::min(min_regions, r.get("region_count"));
    min_h = std::min(min_h, r.get("entropy_nats"));
    max_h = std::max(max_h, r.get("entropy_nats"));
  }
  const bool pass = inversions <= 1 && top.size() == cfg.seeds.size() && min_regions >= 9900 && min_h >= 9.15 &&
                    max_h <= 9.2103;
  return {pass, "inversions=" + std::to_string(inversions) + " width1024 min_regions=" + fmt(min_regions, 6) +
                    " entropy=[" + fmt(min_h, 6) + ", " + fmt(max_h, 6) + "]"};
}

Outcome degree_law() {
  const auto cfg = default_config(ExperimentKind::e4_degree);
  const auto rec = run_experiment(cfg);
  if (!rec.ok()) return {false, "stage failures:" + failure_text(rec)};
  const std::vector<double> reference{0.11, 0.05, 0.02};
  std::vector<double> p_hat, tv;
  for (const auto& agg : rec.aggregates) {
    p_hat.push_back(agg.extra["pooled_degree_fit"]["p_hat"].get<double>());
    tv.push_back(agg.extra["pooled_degree_fit"]["tv_distance"].get<double>());
  }
  bool pass = p_hat.size() == 3;
  for (std::size_t i = 0; pass && i < p_hat.size(); ++i) {
    pass = tv[i] < 0.2 && std::abs(p_hat[i] - reference[i]) <= 0.06 && (i == 0 || p_hat[i] < p_hat[i - 1]);
  }
  return {pass, "widths 16/32/64 p_hat=" + join(p_hat) + " tv=" + join(tv)};
}

Outcome expansion() {
  const auto cfg = default_config(ExperimentKind::e1_expansion);
  const auto rec = run_experiment(cfg);
  if (!rec.ok()) return {false, "stage failures:" + failure_text(rec)};
  double min_h = INFINITY;
  std::vector<double> means;
  for (const auto& r : rec.rows) {
    min_h = std::min(min_h, r.get("expansion_min"));
    means.push_back(r.get("expansion_mean"));
  }
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  const bool pass = rec.rows.size() == cfg.seeds.size() && min_h > 1.0 && *lo >= 2.0 && *hi <= 5.0;
  return {pass, "min=" + fmt(min_h) + " per-seed mean in [" + fmt(*lo) + ", " + fmt(*hi) + "]"};
}

Outcome spectral_gap() {
  auto cfg = default_config(ExperimentKind::e2_spectral);
  cfg.seeds = {0, 1, 2, 3, 4};
  const auto rec = run_experiment(cfg);
  if (!rec.ok()) return {false, "stage failures:" + failure_text(rec)};
  bool pass = rec.rows.size() == 5;
  std::vector<double> train, gap, l2;
  for (const auto& r : rec.rows) {
    train.push_back(r.get("train_accuracy"));
    gap.push_back(r.get("gen_gap"));
    l2.push_back(r.get("lambda2_normalized"));
    pass = pass && train.back() == 1.0 && gap.back() <= 0.02 && l2.back() > 0.0 && l2.back() >= 0.005 &&
           l2.back() <= 0.1;
  }
  return {pass, "train=" + join(train) + " gap=" + join(gap) + " lambda2=" + join(l2)};
}

Outcome compression_duality() {
  const auto cfg = default_config(ExperimentKind::e5_kl);
  const auto rec = run_experiment(cfg);
  if (!rec.ok()) return {false, "stage failures:" + failure_text(rec)};
  std::vector<double> kl, train, gap;
  for (auto depth : cfg.depths) {
    const auto r = rows_at(rec, depth, 256).at(0);
    kl.push_back(r.get("mean_kl"));
    train.push_back(r.get("train_accuracy"));
    gap.push_back(r.get("gen_gap"));
  }
  std::size_t inversions = 0;
  for (std::size_t i = 1; i < kl.size(); ++i)
    if (!(kl[i] < kl[i - 1])) ++inversions;
  const bool trained = std::all_of(train.begin(), train.end(), [](double a) { return a >= 0.99; });
  const bool pass = trained && inversions <= 1 && kl.back() < 0.1 * kl.front();
  return {pass, "depths 2..6 mean_kl=" + join(kl) + " train=" + join(train) + " gap=" + join(gap) +
                    " inversions=" + std::to_string(inversions)};
}

Outcome graph_oracle() {
  std::mt19937_64 rng(606);
  std::size_t nets = 0, largest = 0, edges = 0;
  while (nets < 50) {
    const MlpConfig cfg{2, 1 + rng() % 3, 2 + rng() % 62, 1, std::sqrt(2.0), rng()};
    const auto table = extract_regions(init_mlp(cfg), make_grid(10 + rng() % 90, -1, 1));
    if (table.size() > 5000) continue;
    const auto g = build_rtg(table);
    if (g.edges() != testing_util::bruteforce_edges(table))
      return {false, "mismatch on net " + std::to_string(nets) + " (" + std::to_string(table.size()) + " regions)"};
    largest = std::max(largest, table.size());
    edges += g.edge_count();
    ++nets;
  }
  return {true, std::to_string(nets) + " nets, up to " + std::to_string(largest) + " regions, " + std::to_string(edges) +
                    " edges total"};
}

Outcome spectral_oracle() {
  std::mt19937_64 rng(707);
  double worst = 0.0;
  std::size_t largest = 0;
  for (int i = 0; i < 50; ++i) {
    Rtg g;
    for (;;) {
      const MlpConfig cfg{2, 1 + rng() % 3, 4 + rng() % 60, 1, std::sqrt(2.0), rng()};
      const auto full = build_rtg(extract_regions(init_mlp(cfg), make_grid(20 + rng() % 80, -1, 1)));
      const auto comps = connected_components(full);
      const auto size = comps.sizes[comps.largest()];
      if (size < 50 || size > 2000) continue;
      g = induced_subgraph(full, comps.members(comps.largest()));
      break;
    }
    largest = std::max(largest, g.node_count());
    const Eigen::MatrixXd lap = testing_util::oracle_laplacian(g);
    const Eigen::VectorXd inv_sqrt = lap.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd norm = inv_sqrt.asDiagonal() * lap * inv_sqrt.asDiagonal();
    const double dense = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(norm, Eigen::EigenvaluesOnly).eigenvalues()(1);
    const auto iter = lambda2_iterative(g, LaplacianKind::normalized);
    worst = std::max(worst, std::abs(iter.value - dense));
  }
  const double k2 = lambda2(testing_util::k2(), LaplacianKind::normalized).eigen.value;
  const double c4 = lambda2(testing_util::cycle4(), LaplacianKind::normalized).eigen.value;
  const bool pass = worst <= 1e-6 && std::abs(k2 - 2.0) <= 1e-10 && std::abs(c4 - 1.0) <= 1e-10;
  return {pass, "max |iterative - dense|=" + fmt(worst, 3) + " over 50 components (largest " + std::to_string(largest) +
                    ") K2=" + fmt(k2, 15) + " C4=" + fmt(c4, 15)};
}

Outcome fiedler_property() {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> n01;
  double min_slack = INFINITY;
  for (int i = 0; i < 100; ++i) {
    const auto g = testing_util::random_component(rng, 5, 1500);
    const double l2 = lambda2(g, LaplacianKind::combinatorial).eigen.value;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(g.node_count()), 1 + static_cast<Eigen::Index>(rng() % 3));
    for (Eigen::Index k = 0; k < values.size(); ++k) values.data()[k] = n01(rng);
    const RegionSignal phi{values};
    min_slack = std::min(min_slack, dirichlet_energy(g, phi) - l2 * signal_variance(phi));
  }
  return {min_slack >= -1e-9, "min slack=" + fmt(min_slack, 6) + " over 100 components"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0.0;
  int nets = 0;
  while (nets < 20) {
    const MlpConfig cfg{2, 1 + rng() % 3, 1 + rng() % 8, 2 + rng() % 3, std::sqrt(2.0), rng()};
    const auto p = init_mlp(cfg);
    Eigen::MatrixXd xs(2, 8);
    std::vector<int> ys(8);
    for (int c = 0; c < 8; ++c) {
      xs.col(c) << u(rng), u(rng);
      ys[static_cast<std::size_t>(c)] = static_cast<int>(rng() % cfg.output_dim);
    }
    if (testing_util::min_abs_preactivation(p, xs) < 1e-3) continue;
    const auto analytic = testing_util::flatten(loss_and_gradient(p, xs, ys).second);
    const auto numeric = testing_util::fd_gradient(p, xs, ys);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-5});
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    ++nets;
  }
  return {worst <= 1e-4, "max relative error=" + fmt(worst, 3) + " over 20 nets"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("rtg_accept_" + std::to_string(std::random_device{}()));
  std::vector<ExperimentConfig> configs;
  for (auto kind : {ExperimentKind::e1_expansion, ExperimentKind::e2_spectral, ExperimentKind::e3_entropy,
                    ExperimentKind::e4_degree, ExperimentKind::e5_kl}) {
    auto cfg = default_config(kind);
    cfg.seeds = {0, 1};
    cfg.grid_resolution = 50;
    if (kind == ExperimentKind::e3_entropy) cfg.widths = {8, 64};
    if (kind == ExperimentKind::e1_expansion) cfg.samples = 100;
    if (kind == ExperimentKind::e2_spectral || kind == ExperimentKind::e5_kl) {
      cfg.depths = {2};
      cfg.widths = {16};
      cfg.dataset.count = 400;
      cfg.train.epochs = 20;
      cfg.train.batch_size = 32;
    }
    configs.push_back(cfg);
  }
  std::string detail;
  bool pass = true;
  for (auto& cfg : configs) {
    const std::string name = to_string(cfg.experiment);
    cfg.out_dir = (root / "a").string();
    run_experiment(cfg);
    cfg.out_dir = (root / "b").string();
    run_experiment(cfg);
    const auto a = slurp(root / "a" / (name + ".csv"));
    const bool same = !a.empty() && a == slurp(root / "b" / (name + ".csv"));
    pass = pass && same;
    detail += name + (same ? "=identical " : "=DIFFERENT ");
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "entropy saturation", 300, entropy_saturation},
      {2, "degree law", 600, degree_law},
      {3, "edge expansion", 120, expansion},
      {4, "spectral gap", 600, spectral_gap},
      {5, "compression duality", 1200, compression_duality},
      {6, "graph oracle", 0, graph_oracle},
      {7, "spectral oracle", 0, spectral_oracle},
      {8, "fiedler property", 0, fiedler_property},
      {9, "gradient check", 0, gradient_check},
      {10, "determinism", 0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += " runtime over " + fmt(c.time_limit_s) + "s";
    }
    std::printf("[%s] %2d %-20s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
