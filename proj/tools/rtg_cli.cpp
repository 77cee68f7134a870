#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rtg/rtg.hpp"

namespace fs = std::filesystem;
using namespace rtg;

namespace {

enum class Format { json, csv };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> width;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> grid_resolution;
  std::string out;
  Format format = Format::json;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--width", c.width, "Hidden width");
  cmd->add_option("--depth", c.depth, "Number of hidden layers");
  cmd->add_option("--grid-resolution", c.grid_resolution, "Points per axis of the input grid");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--format", c.format, "Output format")
      ->transform(CLI::CheckedTransformer(std::map<std::string, Format>{{"json", Format::json}, {"csv", Format::csv}}));
}

template <typename F>
auto in_stage(const char* stage, F&& fn) -> decltype(fn()) {
  return detail::stage(stage, std::forward<F>(fn));
}

// Two columns per line, comma or whitespace separated. Lines starting with '#'
// and a non-numeric header line are skipped.
Eigen::MatrixXd read_points(const fs::path& path) {
  auto in = detail::open_in(path);
  std::vector<double> xs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream s(line);
    double a = 0, b = 0;
    if (!(s >> a >> b)) {
      if (lineno == 1) continue;
      throw MalformedFile(path.string() + ":" + std::to_string(lineno) + ": expected two numbers");
    }
    xs.push_back(a);
    xs.push_back(b);
  }
  if (xs.empty()) throw MalformedFile(path.string() + ": no points");
  return Eigen::Map<Eigen::MatrixXd>(xs.data(), 2, static_cast<Eigen::Index>(xs.size() / 2));
}

void write_flat_csv(std::ostream& out, const json& j, const std::string& prefix = "") {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      write_flat_csv(out, v, key);
    } else if (v.is_number()) {
      out << key << ',' << format_double(v.get<double>()) << '\n';
    } else if (v.is_boolean()) {
      out << key << ',' << (v.get<bool>() ? 1 : 0) << '\n';
    }
  }
}

int cmd_build(const Common& c, const std::string& weights, const std::string& inputs, std::size_t output_dim,
              double init_std, bool softmax, double lo, double hi) {
  const auto params = in_stage("load", [&] {
    if (!weights.empty()) return load_mlp(weights);
    MlpConfig m;
    m.depth = c.depth.value_or(2);
    m.width = c.width.value_or(32);
    m.output_dim = output_dim;
    m.init_std = init_std;
    m.seed = c.seed.value_or(0);
    return init_mlp(m);
  });
  const auto points = in_stage("inputs", [&] {
    return inputs.empty() ? make_grid(c.grid_resolution.value_or(100), lo, hi) : make_explicit_inputs(read_points(inputs));
  });
  const auto table = in_stage("extract_regions", [&] {
    return extract_regions(params, points, softmax ? OutputMode::softmax : OutputMode::raw);
  });
  const auto g = in_stage("build_rtg", [&] { return build_rtg(table); });
  const fs::path out = c.out.empty() ? fs::path(".") : fs::path(c.out);
  in_stage("write", [&] {
    save_rtg(g, table, out / "rtg.json");
    auto regions = detail::open_out(out / "regions.jsonl");
    write_regions_jsonl(table, regions);
    detail::open_out(out / "graph.json") << to_json(g).dump() << '\n';
    auto edges = detail::open_out(out / "edges.txt");
    write_edge_list(g, edges);
    save_mlp(params, out / "weights.json");
    return 0;
  });
  std::cerr << "regions=" << table.size() << " edges=" << g.edge_count() << " bits=" << table.n_bits() << " -> "
            << out.string() << '\n';
  return 0;
}

int cmd_metrics(const Common& c, const std::string& rtg_path, const std::string& weights, std::size_t subset_size,
                std::size_t samples, double kl_epsilon) {
  const auto [g, table] = in_stage("load", [&] { return load_rtg(rtg_path); });
  json report;
  report["input"] = rtg_path;
  report["region_count"] = table.size();
  report["edge_count"] = g.edge_count();
  const auto deg = degree_stats(g);
  report["degrees"] = to_json(deg);
  report["degree_fit"] = to_json(binomial_fit(deg));
  report["entropy"] = to_json(region_entropy(table));
  const auto comps = connected_components(g);
  report["components"] = {{"count", comps.count()}, {"largest_size", comps.sizes.empty() ? 0 : comps.sizes[comps.largest()]}};
  if (g.edge_count() > 0) {
    report["spectral"] = to_json(in_stage("spectral", [&] { return spectral_report(g); }));
  }
  const std::size_t largest = comps.sizes.empty() ? 0 : comps.sizes[comps.largest()];
  if (largest > subset_size) {
    report["expansion"] =
        to_json(in_stage("edge_expansion", [&] { return edge_expansion(g, subset_size, samples, c.seed.value_or(0)); }));
  }
  if (table.output_mode() == OutputMode::softmax) {
    report["edge_kl"] = to_json(in_stage("edge_kl", [&] { return mean_edge_kl(g, table, kl_epsilon); }));
  }
  if (!weights.empty()) {
    const auto params = in_stage("load", [&] { return load_mlp(weights); });
    report["lipschitz_upper"] = estimate_lipschitz_upper(params);
    if (largest > 1) {
      const auto members = comps.members(comps.largest());
      const auto sub = induced_subgraph(g, members);
      const auto phi = in_stage("signal", [&] { return restrict_signal(centroid_signal(params, table), members); });
      report["dirichlet_energy"] = dirichlet_energy(sub, phi);
      report["signal_variance"] = signal_variance(phi);
    }
  }

  std::ostringstream text;
  if (c.format == Format::json) {
    text << report.dump(2) << '\n';
  } else {
    text << "metric,value\n";
    json flat = report;
    flat["degrees"].erase("degrees");
    flat["degrees"].erase("histogram");
    write_flat_csv(text, flat);
  }
  if (c.out.empty()) {
    std::cout << text.str();
  } else {
    const fs::path path = fs::path(c.out) / (c.format == Format::json ? "metrics.json" : "metrics.csv");
    in_stage("write", [&] {
      detail::open_out(path) << text.str();
      return 0;
    });
  }
  return 0;
}

int cmd_experiment(const Common& c, const std::string& name, bool quiet) {
  auto cfg = in_stage("config", [&] {
    auto base = c.config.empty() ? default_config(experiment_from_string(name)) : load_config(c.config);
    if (!c.config.empty() && base.experiment != experiment_from_string(name)) {
      throw InvalidArgument(c.config + " configures " + to_string(base.experiment) + ", not " + name);
    }
    if (c.seed) base.seeds = {*c.seed};
    if (c.width) base.widths = {*c.width};
    if (c.depth) base.depths = {*c.depth};
    if (c.grid_resolution) base.grid_resolution = *c.grid_resolution;
    if (!c.out.empty()) base.out_dir = c.out;
    base.validate();
    return base;
  });
  const auto rec = run_experiment(cfg, quiet ? nullptr : &std::cerr);
  if (c.format == Format::csv) {
    std::cout << to_csv(rec);
  } else {
    std::cout << to_json(rec).dump(2) << '\n';
  }
  for (const auto& f : rec.failures) {
    std::cerr << "rtg: error [" << f.stage << "] depth=" << f.depth << " width=" << f.width << " seed=" << f.seed
              << ": " << f.message.substr(f.stage.size() + 2) << '\n';
  }
  return rec.ok() ? 0 : 1;
}

int cmd_verify(const Common& c) {
  const auto results = verify_all(c.seed.value_or(0));
  bool ok = true;
  json out = json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    std::cerr << (r.passed ? "ok   " : "FAIL ") << r.name << " cases=" << r.cases << " worst=" << r.worst
              << (r.detail.empty() ? "" : " " + r.detail) << '\n';
    out.push_back({{"suite", r.name}, {"passed", r.passed}, {"cases", r.cases}, {"worst", r.worst}, {"detail", r.detail}});
  }
  if (c.format == Format::json) {
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << "suite,passed,cases,worst\n";
    for (const auto& r : results)
      std::cout << r.name << ',' << (r.passed ? 1 : 0) << ',' << r.cases << ',' << format_double(r.worst) << '\n';
  }
  if (!ok) std::cerr << "rtg: error [verify]: one or more oracle suites failed\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ReLU transition graphs: regions, graph metrics, and experiment sweeps"};
  app.require_subcommand(1);

  Common build_opts, metrics_opts, exp_opts, verify_opts;

  auto* build = app.add_subcommand("build", "Extract regions and the transition graph of a network");
  add_common(build, build_opts);
  std::string weights, inputs;
  std::size_t output_dim = 1;
  double init_std = std::sqrt(2.0), lo = -1.0, hi = 1.0;
  bool softmax = false;
  build->add_option("--weights", weights, "Weights JSON; a random network is initialized if omitted");
  build->add_option("--inputs", inputs, "Points file (x1,x2 per line); the grid is used if omitted");
  build->add_option("--output-dim", output_dim, "Output dimension of a random network");
  build->add_option("--init-std", init_std, "Initialization scale of a random network");
  build->add_option("--lo", lo, "Grid lower bound");
  build->add_option("--hi", hi, "Grid upper bound");
  build->add_flag("--softmax", softmax, "Record mean softmax outputs per region");

  auto* metrics = app.add_subcommand("metrics", "Compute graph metrics from a saved RTG");
  add_common(metrics, metrics_opts);
  std::string rtg_path, metrics_weights;
  std::size_t subset_size = 10, samples = 500;
  double kl_epsilon = 1e-8;
  metrics->add_option("rtg", rtg_path, "RTG file written by build")->required();
  metrics->add_option("--weights", metrics_weights, "Weights JSON for Lipschitz and Dirichlet metrics");
  metrics->add_option("--subset-size", subset_size, "Expansion subset size");
  metrics->add_option("--samples", samples, "Expansion sample count");
  metrics->add_option("--kl-epsilon", kl_epsilon, "Probability floor for KL");

  auto* experiment = app.add_subcommand("experiment", "Run an experiment sweep (e1..e5)");
  add_common(experiment, exp_opts);
  std::string exp_name;
  bool quiet = false;
  experiment->add_option("name", exp_name, "e1, e2, e3, e4 or e5")->required();
  experiment->add_option("--config", exp_opts.config, "Config file");
  experiment->add_flag("-q,--quiet", quiet, "No per-point progress on stderr");

  auto* verify = app.add_subcommand("verify", "Run the built-in oracle self-checks");
  add_common(verify, verify_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "rtg: error [args] " << e.what() << '\n';
    return 2;
  }

  try {
    if (*build) return cmd_build(build_opts, weights, inputs, output_dim, init_std, softmax, lo, hi);
    if (*metrics) return cmd_metrics(metrics_opts, rtg_path, metrics_weights, subset_size, samples, kl_epsilon);
    if (*experiment) return cmd_experiment(exp_opts, exp_name, quiet);
    if (*verify) return cmd_verify(verify_opts);
  } catch (const StageError& e) {
    std::cerr << "rtg: error [" << e.stage() << "] " << std::string(e.what()).substr(e.stage().size() + 2) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "rtg: error [internal] " << e.what() << '\n';
    return 1;
  }
  return 2;
}
