#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rtg/graph.hpp"
#include "rtg/io.hpp"
#include "rtg/metrics.hpp"
#include "rtg/mlp.hpp"
#include "rtg/regions.hpp"
#include "rtg/spectral.hpp"

namespace rtg {

enum class ExperimentKind { e1_expansion, e2_spectral, e3_entropy, e4_degree, e5_kl };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::e1_expansion: return "e1_expansion";
    case ExperimentKind::e2_spectral: return "e2_spectral";
    case ExperimentKind::e3_entropy: return "e3_entropy";
    case ExperimentKind::e4_degree: return "e4_degree";
    case ExperimentKind::e5_kl: return "e5_kl";
  }
  return "unknown";
}

/// Accepts "e3", "e3_entropy", ...
inline ExperimentKind experiment_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::e1_expansion, ExperimentKind::e2_spectral, ExperimentKind::e3_entropy,
                 ExperimentKind::e4_degree, ExperimentKind::e5_kl}) {
    const std::string name = to_string(k);
    if (s == name || s == name.substr(0, 2)) return k;
  }
  throw InvalidArgument("unknown experiment '" + s + "' (expected e1..e5)");
}

struct DatasetConfig {
  std::size_t count = 10000;
  double radius = default_circle_radius();  // circle task
  std::size_t classes = 2;                  // random-label task
  double split = 0.8;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::e3_entropy;
  std::vector<std::size_t> depths{2};
  std::vector<std::size_t> widths{32};
  std::vector<std::uint64_t> seeds{0};
  std::size_t grid_resolution = 100;
  double grid_lo = -1.0;
  double grid_hi = 1.0;
  std::size_t output_dim = 1;
  double init_std = std::sqrt(2.0);
  std::size_t subset_size = 10;
  std::size_t samples = 500;
  DatasetConfig dataset;
  TrainConfig train;
  double kl_epsilon = 1e-8;
  std::string out_dir;

  void validate() const {
    require(!depths.empty() && !widths.empty(), "config: depths and widths must be non-empty");
    require(!seeds.empty(), "config: seeds must be non-empty");
    require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), "config: seeds must be distinct");
    for (auto d : depths) require(d >= 1, "config: depths must be >= 1");
    for (auto w : widths) require(w >= 1, "config: widths must be >= 1");
    require(grid_resolution >= 2, "config: grid_resolution must be >= 2");
    require(grid_lo < grid_hi, "config: grid_lo must be < grid_hi");
    require(output_dim >= 1, "config: output_dim must be >= 1");
    require(init_std > 0.0, "config: init_std must be positive");
    if (experiment == ExperimentKind::e1_expansion) {
      require(samples >= 1, "config: samples must be >= 1");
      require(subset_size >= 1, "config: subset_size must be >= 1");
    }
    if (experiment == ExperimentKind::e2_spectral || experiment == ExperimentKind::e5_kl) {
      require(dataset.count >= 10, "config: dataset.count must be >= 10");
      require(dataset.split > 0.0 && dataset.split < 1.0, "config: dataset.split must lie in (0, 1)");
      require(dataset.classes >= 2, "config: dataset.classes must be >= 2");
      require(train.epochs >= 1 && train.batch_size >= 1, "config: train.epochs and train.batch_size must be >= 1");
      require(train.learning_rate >= 0.0, "config: train.learning_rate must be >= 0");
    }
    require(kl_epsilon > 0.0 && kl_epsilon < 1.0, "config: kl_epsilon must lie in (0, 1)");
  }
};

/// Per-experiment defaults mirroring the reference setup.
inline ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  std::vector<std::uint64_t> ten(10);
  for (std::size_t i = 0; i < ten.size(); ++i) ten[i] = i;
  switch (kind) {
    case ExperimentKind::e1_expansion:
      c.depths = {3};
      c.widths = {32};
      c.seeds = ten;
      break;
    case ExperimentKind::e2_spectral:
      c.depths = {4};
      c.widths = {64};
      c.seeds = {0};
      c.output_dim = 2;
      c.dataset.count = 10000;
      c.train.epochs = 1000;
      c.train.schedule = LrSchedule::cosine;
      break;
    case ExperimentKind::e3_entropy:
      c.depths = {2};
      c.widths = {4, 8, 16, 32, 64, 128, 256, 512, 1024};
      c.seeds = ten;
      break;
    case ExperimentKind::e4_degree:
      c.depths = {2};
      c.widths = {16, 32, 64};
      c.seeds.resize(20);
      for (std::size_t i = 0; i < c.seeds.size(); ++i) c.seeds[i] = i;
      break;
    case ExperimentKind::e5_kl:
      c.depths = {2, 3, 4, 5, 6};
      c.widths = {256};
      c.seeds = {0};
      c.output_dim = 2;
      c.dataset.count = 1250;  // 1000 training points at an 80/20 split
      c.train.learning_rate = 3e-4;
      c.train.batch_size = 128;
      c.train.epochs = 2000;
      c.train.schedule = LrSchedule::cosine;
      c.train.early_stop_accuracy = 0.99;
      break;
  }
  return c;
}

namespace detail {

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw InvalidArgument("config: unknown optimizer '" + s + "'");
}

inline LrSchedule schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  throw InvalidArgument("config: unknown schedule '" + s + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Overlays a JSON config document onto the defaults of its experiment.
inline ExperimentConfig config_from_json(const json& j) {
  require(j.is_object(), "config: document must be an object");
  require(j.contains("experiment") && j["experiment"].is_string(), "config: missing 'experiment'");
  ExperimentConfig c = default_config(experiment_from_string(j["experiment"].get<std::string>()));
  detail::maybe(j, "depths", c.depths);
  detail::maybe(j, "widths", c.widths);
  detail::maybe(j, "seeds", c.seeds);
  detail::maybe(j, "grid_resolution", c.grid_resolution);
  detail::maybe(j, "grid_lo", c.grid_lo);
  detail::maybe(j, "grid_hi", c.grid_hi);
  detail::maybe(j, "output_dim", c.output_dim);
  detail::maybe(j, "init_std", c.init_std);
  detail::maybe(j, "subset_size", c.subset_size);
  detail::maybe(j, "samples", c.samples);
  detail::maybe(j, "kl_epsilon", c.kl_epsilon);
  detail::maybe(j, "out_dir", c.out_dir);
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    detail::maybe(d, "count", c.dataset.count);
    detail::maybe(d, "radius", c.dataset.radius);
    detail::maybe(d, "classes", c.dataset.classes);
    detail::maybe(d, "split", c.dataset.split);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::maybe(t, "learning_rate", c.train.learning_rate);
    detail::maybe(t, "epochs", c.train.epochs);
    detail::maybe(t, "batch_size", c.train.batch_size);
    if (t.contains("optimizer")) c.train.optimizer = detail::optimizer_from_string(t["optimizer"].get<std::string>());
    if (t.contains("schedule")) c.train.schedule = detail::schedule_from_string(t["schedule"].get<std::string>());
    if (t.contains("early_stop_accuracy")) {
      if (t["early_stop_accuracy"].is_null()) {
        c.train.early_stop_accuracy.reset();
      } else {
        c.train.early_stop_accuracy = t["early_stop_accuracy"].get<double>();
      }
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return config_from_json(json::parse(in, nullptr, true, /*ignore_comments=*/true));
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

inline json to_json(const ExperimentConfig& c) {
  json train = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"optimizer", c.train.optimizer == Optimizer::adam ? "adam" : "sgd"},
                {"schedule", c.train.schedule == LrSchedule::cosine ? "cosine" : "constant"},
                {"loss", "cross_entropy"},
                {"early_stop_accuracy", c.train.early_stop_accuracy ? json(*c.train.early_stop_accuracy) : json()}};
  return {{"experiment", to_string(c.experiment)},
          {"depths", c.depths},
          {"widths", c.widths},
          {"seeds", c.seeds},
          {"grid_resolution", c.grid_resolution},
          {"grid_lo", c.grid_lo},
          {"grid_hi", c.grid_hi},
          {"output_dim", c.output_dim},
          {"init_std", c.init_std},
          {"subset_size", c.subset_size},
          {"samples", c.samples},
          {"dataset",
           {{"count", c.dataset.count},
            {"radius", c.dataset.radius},
            {"classes", c.dataset.classes},
            {"split", c.dataset.split}}},
          {"train", train},
          {"kl_epsilon", c.kl_epsilon}};
}

/// Ordered metric columns of one CSV row.
using MetricRow = std::vector<std::pair<std::string, double>>;

struct RunRow {
  std::uint64_t seed = 0;
  std::size_t depth = 0;
  std::size_t width = 0;
  MetricRow metrics;
  json details;  // full per-seed reports

  double get(const std::string& name) const {
    for (const auto& [k, v] : metrics)
      if (k == name) return v;
    throw InvalidArgument("RunRow: no metric '" + name + "'");
  }
};

struct StageFailure {
  std::string stage;
  std::size_t depth = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct Aggregate {
  std::size_t depth = 0;
  std::size_t width = 0;
  std::size_t seeds = 0;
  std::map<std::string, std::pair<double, double>> mean_stddev;
  json extra;  // experiment-specific pooled results
};

struct RunRecord {
  ExperimentConfig config;
  std::vector<RunRow> rows;  // ordered by (depth, width, seed index)
  std::vector<StageFailure> failures;
  std::vector<Aggregate> aggregates;
  double wall_seconds = 0.0;

  bool ok() const noexcept { return failures.empty(); }
};

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed * 0x100000001B3ULL + stream);
}

enum : std::uint64_t { kStreamData = 1, kStreamTrain = 2, kStreamExpansion = 3 };

/// Runs `fn`, rethrowing any failure as a StageError tagged with `stage`.
template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline MlpConfig mlp_config(const ExperimentConfig& cfg, std::size_t depth, std::size_t width, std::uint64_t seed,
                            std::size_t output_dim) {
  MlpConfig m;
  m.input_dim = 2;
  m.depth = depth;
  m.width = width;
  m.output_dim = output_dim;
  m.init_std = cfg.init_std;
  m.seed = seed;
  return m;
}

inline RunRow run_point(const ExperimentConfig& cfg, std::size_t depth, std::size_t width, std::uint64_t seed) {
  RunRow row;
  row.seed = seed;
  row.depth = depth;
  row.width = width;
  auto& m = row.metrics;
  json& d = row.details;
  const auto grid = [&] { return make_grid(cfg.grid_resolution, cfg.grid_lo, cfg.grid_hi); };

  switch (cfg.experiment) {
    case ExperimentKind::e1_expansion: {
      const auto params = stage("init", [&] { return init_mlp(mlp_config(cfg, depth, width, seed, cfg.output_dim)); });
      const auto table = stage("extract_regions", [&] { return extract_regions(params, grid()); });
      const auto g = stage("build_rtg", [&] { return build_rtg(table); });
      const auto deg = degree_stats(g);
      const auto exp = stage("edge_expansion", [&] {
        return edge_expansion(g, cfg.subset_size, cfg.samples, derive_seed(seed, kStreamExpansion));
      });
      m = {{"region_count", double(table.size())}, {"edge_count", double(g.edge_count())},
           {"component_size", double(exp.component_size)}, {"mean_degree", deg.mean_degree},
           {"expansion_mean", exp.mean}, {"expansion_min", exp.min}, {"expansion_max", exp.max}};
      d["expansion"] = to_json(exp);
      break;
    }
    case ExperimentKind::e2_spectral: {
      const auto data = stage("dataset", [&] {
        auto ds = make_circle_dataset(cfg.dataset.count, cfg.dataset.radius, derive_seed(seed, kStreamData));
        ds.split = cfg.dataset.split;
        return ds;
      });
      auto params = stage("init", [&] { return init_mlp(mlp_config(cfg, depth, width, seed, std::max<std::size_t>(2, cfg.output_dim))); });
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, kStreamTrain);
      auto trained = stage("train", [&] { return train(std::move(params), data, tc); });
      const auto gen = generalization_gap(trained.params, data);
      const auto table = stage("extract_regions", [&] { return extract_regions(trained.params, grid()); });
      const auto g = stage("build_rtg", [&] { return build_rtg(table); });
      const auto spec = stage("spectral", [&] { return spectral_report(g); });
      const double lip = stage("lipschitz", [&] { return estimate_lipschitz_upper(trained.params); });
      const auto comps = connected_components(g);
      const auto members = comps.members(spec.component_id);
      const auto sub = induced_subgraph(g, members);
      const auto phi = restrict_signal(centroid_signal(trained.params, table), members);
      const double energy = dirichlet_energy(sub, phi);
      const double var = signal_variance(phi);
      m = {{"train_accuracy", gen.train_accuracy},
           {"test_accuracy", gen.test_accuracy},
           {"gen_gap", gen.gap},
           {"epochs_run", double(trained.history.size())},
           {"region_count", double(table.size())},
           {"edge_count", double(g.edge_count())},
           {"component_size", double(spec.component_size)},
           {"lambda2_normalized", spec.lambda2_normalized},
           {"lambda2_combinatorial", spec.lambda2_combinatorial},
           {"lipschitz_upper", lip},
           {"dirichlet_energy", energy},
           {"signal_variance", var}};
      d["spectral"] = to_json(spec);
      d["generalization"] = to_json(gen);
      json hist = json::array();
      for (const auto& h : trained.history)
        hist.push_back({h.epoch, h.train_loss, h.train_accuracy, h.test_loss, h.test_accuracy});
      d["history"] = {{"columns", {"epoch", "train_loss", "train_accuracy", "test_loss", "test_accuracy"}}, {"rows", hist}};
      break;
    }
    case ExperimentKind::e3_entropy: {
      const auto params = stage("init", [&] { return init_mlp(mlp_config(cfg, depth, width, seed, cfg.output_dim)); });
      const auto table = stage("extract_regions", [&] { return extract_regions(params, grid()); });
      const auto ent = region_entropy(table);
      m = {{"region_count", double(table.size())}, {"entropy_nats", ent.entropy_nats},
           {"max_entropy", ent.max_entropy}, {"n_eff", double(ent.n_eff)}};
      d["entropy"] = to_json(ent);
      break;
    }
    case ExperimentKind::e4_degree: {
      const auto params = stage("init", [&] { return init_mlp(mlp_config(cfg, depth, width, seed, cfg.output_dim)); });
      const auto table = stage("extract_regions", [&] { return extract_regions(params, grid()); });
      const auto g = stage("build_rtg", [&] { return build_rtg(table); });
      const auto deg = degree_stats(g);
      const auto fit = binomial_fit(deg);
      m = {{"region_count", double(table.size())}, {"n", double(deg.n)},      {"mean_degree", deg.mean_degree},
           {"p_hat", deg.p_hat},                   {"tv_distance", fit.tv_distance}};
      d["degrees"] = to_json(deg);
      break;
    }
    case ExperimentKind::e5_kl: {
      const auto data = stage("dataset", [&] {
        auto ds = make_random_label_dataset(cfg.dataset.count, cfg.dataset.classes, derive_seed(seed, kStreamData));
        ds.split = cfg.dataset.split;
        return ds;
      });
      auto params = stage("init", [&] {
        return init_mlp(mlp_config(cfg, depth, width, seed, std::max(cfg.output_dim, cfg.dataset.classes)));
      });
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, kStreamTrain);
      auto trained = stage("train", [&] { return train(std::move(params), data, tc); });
      const auto gen = generalization_gap(trained.params, data);
      const auto table = stage("extract_regions", [&] {
        return extract_regions(trained.params, make_explicit_inputs(data.train_inputs()), OutputMode::softmax);
      });
      const auto g = stage("build_rtg", [&] { return build_rtg(table); });
      const auto kl = stage("edge_kl", [&] { return mean_edge_kl(g, table, cfg.kl_epsilon); });
      m = {{"train_accuracy", gen.train_accuracy},
           {"test_accuracy", gen.test_accuracy},
           {"gen_gap", gen.gap},
           {"epochs_run", double(trained.history.size())},
           {"region_count", double(table.size())},
           {"edge_count", double(g.edge_count())},
           {"mean_kl", kl.mean_kl},
           {"mean_symmetric_kl", kl.mean_symmetric_kl}};
      d["edge_kl"] = to_json(kl);
      d["generalization"] = to_json(gen);
      break;
    }
  }
  return row;
}

inline std::pair<double, double> mean_stddev(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace detail

/// Mean and sample standard deviation of every metric at every sweep point.
inline std::vector<Aggregate> aggregate_rows(const ExperimentConfig& cfg, const std::vector<RunRow>& rows) {
  std::vector<Aggregate> out;
  for (auto depth : cfg.depths) {
    for (auto width : cfg.widths) {
      Aggregate agg;
      agg.depth = depth;
      agg.width = width;
      std::map<std::string, std::vector<double>> columns;
      std::vector<DegreeStats> pooled;
      for (const auto& r : rows) {
        if (r.depth != depth || r.width != width) continue;
        ++agg.seeds;
        for (const auto& [k, v] : r.metrics) columns[k].push_back(v);
        if (cfg.experiment == ExperimentKind::e4_degree && r.details.contains("degrees")) {
          std::vector<std::size_t> degrees;
          for (const auto& [deg, count] : r.details["degrees"]["histogram"].items())
            degrees.insert(degrees.end(), count.get<std::size_t>(), std::stoul(deg));
          pooled.push_back(make_degree_stats(std::move(degrees), r.details["degrees"]["n"].get<std::size_t>()));
        }
      }
      for (const auto& [k, xs] : columns) agg.mean_stddev[k] = detail::mean_stddev(xs);
      if (!pooled.empty()) {
        const auto fit = binomial_fit(pool_degree_stats(pooled));
        agg.extra["pooled_degree_fit"] = to_json(fit);
      }
      out.push_back(std::move(agg));
    }
  }
  return out;
}

inline std::string to_csv(const RunRecord& rec) {
  std::ostringstream out;
  if (rec.rows.empty()) return "experiment,seed,depth,width\n";
  out << "experiment,seed,depth,width";
  for (const auto& [k, v] : rec.rows.front().metrics) out << ',' << k;
  out << '\n';
  for (const auto& r : rec.rows) {
    out << to_string(rec.config.experiment) << ',' << r.seed << ',' << r.depth << ',' << r.width;
    for (const auto& [k, v] : r.metrics) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

inline json to_json(const RunRecord& rec) {
  json rows = json::array();
  for (const auto& r : rec.rows) {
    json metrics = json::object();
    for (const auto& [k, v] : r.metrics) metrics[k] = v;
    rows.push_back({{"seed", r.seed}, {"depth", r.depth}, {"width", r.width}, {"metrics", metrics}, {"details", r.details}});
  }
  json failures = json::array();
  for (const auto& f : rec.failures) {
    failures.push_back({{"stage", f.stage}, {"depth", f.depth}, {"width", f.width}, {"seed", f.seed}, {"message", f.message}});
  }
  json aggs = json::array();
  for (const auto& a : rec.aggregates) {
    json stats = json::object();
    for (const auto& [k, ms] : a.mean_stddev) stats[k] = {{"mean", ms.first}, {"stddev", ms.second}};
    json entry = {{"depth", a.depth}, {"width", a.width}, {"seeds", a.seeds}, {"metrics", stats}};
    if (!a.extra.is_null()) entry["extra"] = a.extra;
    aggs.push_back(std::move(entry));
  }
  return {{"version", kFormatVersion}, {"config", to_json(rec.config)}, {"rows", rows},
          {"aggregates", aggs},        {"failures", failures}};
}

/// Writes <name>.csv and <name>_record.json (both deterministic) plus
/// <name>_meta.json holding wall-clock data.
inline void write_run(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string name = to_string(rec.config.experiment);
  detail::open_out(dir / (name + ".csv")) << to_csv(rec);
  detail::open_out(dir / (name + "_record.json")) << to_json(rec).dump(2) << '\n';
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  detail::open_out(dir / (name + "_meta.json"))
      << json{{"wall_seconds", rec.wall_seconds}, {"finished_at", stamp}, {"ok", rec.ok()}}.dump(2) << '\n';
}

/// Runs every (depth, width, seed) point of the experiment. A failing point is
/// recorded with its stage and skipped; results of other points are kept.
inline RunRecord run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg;
  for (auto depth : cfg.depths) {
    for (auto width : cfg.widths) {
      for (auto seed : cfg.seeds) {
        try {
          rec.rows.push_back(detail::run_point(cfg, depth, width, seed));
          if (log) {
            *log << to_string(cfg.experiment) << " depth=" << depth << " width=" << width << " seed=" << seed;
            for (const auto& [k, v] : rec.rows.back().metrics) *log << ' ' << k << '=' << format_double(v);
            *log << '\n';
          }
        } catch (const StageError& e) {
          rec.failures.push_back({e.stage(), depth, width, seed, e.what()});
          if (log) *log << "FAILED depth=" << depth << " width=" << width << " seed=" << seed << ": " << e.what() << '\n';
        }
      }
    }
  }
  rec.aggregates = aggregate_rows(cfg, rec.rows);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.out_dir.empty()) write_run(rec, cfg.out_dir);
  return rec;
}

}  // namespace rtg
