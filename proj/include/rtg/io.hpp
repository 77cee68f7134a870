#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rtg/error.hpp"
#include "rtg/graph.hpp"
#include "rtg/metrics.hpp"
#include "rtg/mlp.hpp"
#include "rtg/regions.hpp"
#include "rtg/spectral.hpp"

namespace rtg {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace detail {

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& a, const char* what) {
  if (!a.is_array()) throw MalformedFile(std::string(what) + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw MalformedFile(std::string(what) + " must hold numbers");
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  }
  return v;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw MalformedFile(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("bad field '") + key + "': " + e.what());
  }
}

inline json parse_document(std::istream& in, const std::string& source) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw MalformedFile(source + ": " + e.what());
  }
}

inline void check_version(const json& doc) {
  if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_number_integer()) {
    throw MalformedFile("document has no integer 'version' field");
  }
  const int v = doc["version"].get<int>();
  if (v != kFormatVersion) {
    throw VersionMismatch("unsupported format version " + std::to_string(v) + ", expected " +
                          std::to_string(kFormatVersion));
  }
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string() + " for reading");
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MLP weights

inline json to_json(const MlpConfig& c) {
  return {{"input_dim", c.input_dim}, {"depth", c.depth},       {"width", c.width},
          {"output_dim", c.output_dim}, {"init_std", c.init_std}, {"seed", c.seed}};
}

inline MlpConfig mlp_config_from_json(const json& j) {
  MlpConfig c;
  c.input_dim = detail::field<std::size_t>(j, "input_dim");
  c.depth = detail::field<std::size_t>(j, "depth");
  c.width = detail::field<std::size_t>(j, "width");
  c.output_dim = detail::field<std::size_t>(j, "output_dim");
  c.init_std = detail::field<double>(j, "init_std");
  c.seed = detail::field<std::uint64_t>(j, "seed");
  return c;
}

/// {"version":1, "config":{...}, "weights":[...], "biases":[...]} with each
/// weight matrix flattened row-major.
inline json to_json(const MlpParams& p) {
  json weights = json::array(), biases = json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    json flat = json::array();
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) flat.push_back(p.weights[l](r, c));
    weights.push_back(std::move(flat));
    biases.push_back(detail::vector_to_json(p.biases[l]));
  }
  return {{"version", kFormatVersion}, {"config", to_json(p.config)}, {"weights", weights}, {"biases", biases}};
}

inline MlpParams mlp_from_json(const json& doc) {
  detail::check_version(doc);
  MlpParams p;
  if (!doc.contains("config")) throw MalformedFile("missing field 'config'");
  p.config = mlp_config_from_json(doc["config"]);
  try {
    p.config.validate();
  } catch (const InvalidArgument& e) {
    throw MalformedFile(e.what());
  }
  const auto weights = detail::field<json>(doc, "weights");
  const auto biases = detail::field<json>(doc, "biases");
  if (!weights.is_array() || !biases.is_array() || weights.size() != p.config.depth + 1 ||
      biases.size() != p.config.depth + 1) {
    throw MalformedFile("weights/biases must hold depth + 1 layers");
  }
  std::size_t in = p.config.input_dim;
  for (std::size_t l = 0; l <= p.config.depth; ++l) {
    const std::size_t out = l == p.config.depth ? p.config.output_dim : p.config.width;
    const Eigen::VectorXd flat = detail::vector_from_json(weights[l], "weights");
    if (static_cast<std::size_t>(flat.size()) != out * in) throw MalformedFile("weight layer has the wrong size");
    Eigen::MatrixXd w(out, in);
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) w(r, c) = flat(static_cast<Eigen::Index>(r * in + c));
    Eigen::VectorXd b = detail::vector_from_json(biases[l], "biases");
    if (static_cast<std::size_t>(b.size()) != out) throw MalformedFile("bias layer has the wrong size");
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
    in = out;
  }
  return p;
}

inline void save_mlp(const MlpParams& p, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << to_json(p).dump() << '\n';
}

inline MlpParams load_mlp(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return mlp_from_json(detail::parse_document(in, path.string()));
}

// ---------------------------------------------------------------------------
// Regions and graphs

inline const char* to_string(OutputMode m) { return m == OutputMode::softmax ? "softmax" : "raw"; }

inline OutputMode output_mode_from_string(const std::string& s) {
  if (s == "raw") return OutputMode::raw;
  if (s == "softmax") return OutputMode::softmax;
  throw MalformedFile("unknown output mode '" + s + "'");
}

inline json to_json(const Region& r) {
  return {{"id", r.id},
          {"pattern_hex", r.pattern.to_hex()},
          {"count", r.member_count},
          {"mass", r.mass},
          {"centroid", detail::vector_to_json(r.centroid)},
          {"mean_output", detail::vector_to_json(r.mean_output)}};
}

inline Region region_from_json(const json& j, std::size_t n_bits) {
  Region r;
  r.id = detail::field<std::size_t>(j, "id");
  r.pattern = ActivationPattern::from_hex(detail::field<std::string>(j, "pattern_hex"), n_bits);
  r.member_count = detail::field<std::size_t>(j, "count");
  r.mass = detail::field<double>(j, "mass");
  r.centroid = detail::vector_from_json(detail::field<json>(j, "centroid"), "centroid");
  r.mean_output = detail::vector_from_json(detail::field<json>(j, "mean_output"), "mean_output");
  if (r.member_count == 0 || !(r.mass > 0.0)) throw MalformedFile("region with no members");
  return r;
}

/// One region per line.
inline void write_regions_jsonl(const RegionTable& table, std::ostream& out) {
  for (const auto& r : table.regions()) out << to_json(r).dump() << '\n';
}

inline json to_json(const Rtg& g) {
  json edges = json::array();
  for (const auto& [i, j] : g.edges()) edges.push_back({i, j});
  return {{"n_bits", g.n_bits()}, {"node_count", g.node_count()}, {"edges", edges}};
}

/// "i j" per line.
inline void write_edge_list(const Rtg& g, std::ostream& out) {
  for (const auto& [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

inline json rtg_document(const Rtg& g, const RegionTable& table) {
  json regions = json::array();
  for (const auto& r : table.regions()) regions.push_back(to_json(r));
  return {{"version", kFormatVersion},
          {"n_bits", table.n_bits()},
          {"total_points", table.total_points()},
          {"output_mode", to_string(table.output_mode())},
          {"regions", regions},
          {"graph", to_json(g)}};
}

inline std::pair<Rtg, RegionTable> rtg_from_document(const json& doc) {
  detail::check_version(doc);
  const auto n_bits = detail::field<std::size_t>(doc, "n_bits");
  const auto total = detail::field<std::size_t>(doc, "total_points");
  const auto mode = output_mode_from_string(detail::field<std::string>(doc, "output_mode"));
  const auto regions_json = detail::field<json>(doc, "regions");
  if (!regions_json.is_array()) throw MalformedFile("'regions' must be an array");
  std::vector<Region> regions;
  regions.reserve(regions_json.size());
  for (const auto& rj : regions_json) regions.push_back(region_from_json(rj, n_bits));

  RegionTable table;
  try {
    table = RegionTable(std::move(regions), total, n_bits, mode);
  } catch (const InvalidArgument& e) {
    throw MalformedFile(e.what());
  }

  const auto graph = detail::field<json>(doc, "graph");
  const auto node_count = detail::field<std::size_t>(graph, "node_count");
  if (node_count != table.size() || detail::field<std::size_t>(graph, "n_bits") != n_bits) {
    throw MalformedFile("graph header disagrees with the region table");
  }
  const auto edges_json = detail::field<json>(graph, "edges");
  if (!edges_json.is_array()) throw MalformedFile("'edges' must be an array");
  std::vector<Edge> edges;
  edges.reserve(edges_json.size());
  for (const auto& e : edges_json) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
      throw MalformedFile("edge must be a pair of node ids");
    }
    edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
  }
  try {
    return {Rtg(node_count, n_bits, std::move(edges)), std::move(table)};
  } catch (const InvalidArgument& e) {
    throw MalformedFile(e.what());
  }
}

inline void save_rtg(const Rtg& g, const RegionTable& table, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << rtg_document(g, table).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

inline std::pair<Rtg, RegionTable> load_rtg(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return rtg_from_document(detail::parse_document(in, path.string()));
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const ExpansionReport& r) {
  return {{"metric", "edge_expansion"}, {"subset_size", r.subset_size}, {"sample_count", r.sample_count},
          {"seed", r.seed},             {"component_size", r.component_size},
          {"mean", r.mean},             {"min", r.min},
          {"max", r.max},               {"values", r.values}};
}

inline json to_json(const EntropyReport& r) {
  return {{"metric", "region_entropy"},
          {"entropy_nats", r.entropy_nats},
          {"region_count", r.region_count},
          {"max_entropy", r.max_entropy},
          {"n_eff", r.n_eff},
          {"n_eff_definition", "top-mass regions covering " + std::to_string(r.n_eff_coverage) + " of the mass"}};
}

inline json to_json(const DegreeFitReport& r) {
  return {{"metric", "binomial_degree_fit"}, {"n", r.n},
          {"p_hat", r.p_hat},                {"mean_degree", r.mean_degree},
          {"node_count", r.node_count},      {"tv_distance", r.tv_distance},
          {"empirical", r.empirical},        {"binomial", r.binomial}};
}

inline json to_json(const EdgeKlReport& r) {
  return {{"metric", "mean_edge_kl"},
          {"definition", "KL between per-region mean softmax outputs, directed lower id -> higher id"},
          {"epsilon", r.epsilon},
          {"edge_count", r.per_edge_kl.size()},
          {"mean_kl", r.mean_kl},
          {"mean_symmetric_kl", r.mean_symmetric_kl},
          {"edgeless", r.edgeless}};
}

inline json to_json(const GenReport& r) {
  return {{"metric", "generalization_gap"},
          {"train_accuracy", r.train_accuracy},
          {"test_accuracy", r.test_accuracy},
          {"gap", r.gap}};
}

inline json to_json(const SpectralReport& r) {
  return {{"metric", "spectral_gap"},
          {"lambda2_normalized", r.lambda2_normalized},
          {"lambda2_combinatorial", r.lambda2_combinatorial},
          {"component_id", r.component_id},
          {"component_size", r.component_size},
          {"method", to_string(r.solver)},
          {"iterations", r.iterations},
          {"residual", r.residual}};
}

inline json to_json(const DegreeStats& s) {
  json hist = json::object();
  for (const auto& [d, c] : s.histogram) hist[std::to_string(d)] = c;
  return {{"n", s.n}, {"mean_degree", s.mean_degree}, {"p_hat", s.p_hat}, {"histogram", hist}};
}

inline json to_json(const ComponentInfo& c) {
  return {{"component_count", c.count()}, {"sizes_desc", c.sizes_desc}};
}

}  // namespace rtg
