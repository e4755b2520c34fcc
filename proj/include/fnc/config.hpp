#pragma once

// Run configuration: a flat `key = value` text format whose keys are the
// FncConfig member names. Unknown or repeated keys are errors.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fnc/batch.hpp"
#include "fnc/data.hpp"
#include "fnc/error.hpp"
#include "fnc/fn_detect.hpp"

namespace fnc {

enum class Strategy { baseline, eliminate, attract, attract_multicrop };
enum class DatasetKind { clusters, rings };

struct FncConfig {
  // contrastive objective and false-negative handling
  double tau = 0.1;
  Strategy strategy = Strategy::attract;
  Aggregation aggregation = Aggregation::max;
  ScreeningRule::Mode screening = ScreeningRule::Mode::top_k;
  std::size_t k = 4;
  double t = 0.5;
  std::size_t support_size = 4;
  SupportSource support_source = SupportSource::main;
  CandidatePool candidate_pool = CandidatePool::current_batch;
  bool memory_bank = false;  // implied by candidate_pool = memory_bank
  double momentum = 0.99;
  std::size_t bank_capacity = 1024;
  bool oracle_labels = false;

  // optimisation
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  double lr = 0.05;
  double optimizer_momentum = 0.9;
  std::uint64_t seed = 0;

  // data
  DatasetKind dataset = DatasetKind::clusters;
  std::string dataset_file;  // overrides the generator when set
  std::uint64_t data_seed = 1234;
  std::size_t classes = 10;
  std::size_t points_per_class = 100;
  std::size_t input_dim = 16;
  double cluster_spread = 4.0;
  double cluster_sigma = 1.0;
  double ring_noise = 0.05;
  double jitter = 0.5;
  double dropout = 0.0;
  double scale_min = 0.8;
  double scale_max = 1.2;

  // encoder
  std::vector<std::size_t> hidden = {32};
  std::size_t embed_dim = 8;

  // evaluation
  std::size_t knn_k = 5;
  std::size_t probe_epochs = 200;
  double probe_lr = 1.0;
  std::size_t eval_every = 10;

  bool operator==(const FncConfig&) const = default;

  bool detects() const { return strategy != Strategy::baseline; }
  bool uses_bank() const { return memory_bank || candidate_pool == CandidatePool::memory_bank; }
  bool uses_momentum_encoder() const {
    return uses_bank() || (support_source == SupportSource::momentum && support_size > 0);
  }
  ScreeningRule rule() const { return {screening, k, t}; }
  AugmentationSpec augmentation() const { return {jitter, dropout, scale_min, scale_max}; }
  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s{input_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(embed_dim);
    return s;
  }
};

// ---- enum names -------------------------------------------------------------

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::eliminate: return "eliminate";
    case Strategy::attract: return "attract";
    case Strategy::attract_multicrop: return "attract_multicrop";
  }
  return "?";
}
inline const char* to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "max"; }
inline const char* to_string(ScreeningRule::Mode m) {
  switch (m) {
    case ScreeningRule::Mode::top_k: return "top_k";
    case ScreeningRule::Mode::threshold: return "threshold";
    case ScreeningRule::Mode::combined: return "combined";
  }
  return "?";
}
inline const char* to_string(SupportSource s) { return s == SupportSource::main ? "main" : "momentum"; }
inline const char* to_string(CandidatePool p) {
  return p == CandidatePool::current_batch ? "current_batch" : "memory_bank";
}
inline const char* to_string(DatasetKind d) { return d == DatasetKind::clusters ? "clusters" : "rings"; }

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorKind::config, "invalid value '" + value + "' for key '" + key + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v);
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
  return out;
}

template <class E, std::size_t N>
E parse_enum(const std::string& key, const std::string& v, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, value] : table)
    if (v == name) return value;
  bad_value(key, v);
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace config_detail

/// Applies one `key = value` assignment.
inline void set_config_value(FncConfig& c, const std::string& key, const std::string& raw) {
  using namespace config_detail;
  const std::string v = trim(raw);
  static const std::pair<const char*, Strategy> strategies[] = {
      {"baseline", Strategy::baseline},
      {"eliminate", Strategy::eliminate},
      {"attract", Strategy::attract},
      {"attract_multicrop", Strategy::attract_multicrop},
      {"attract+multicrop", Strategy::attract_multicrop}};
  static const std::pair<const char*, Aggregation> aggregations[] = {{"mean", Aggregation::mean},
                                                                     {"max", Aggregation::max}};
  static const std::pair<const char*, ScreeningRule::Mode> screenings[] = {
      {"top_k", ScreeningRule::Mode::top_k},
      {"threshold", ScreeningRule::Mode::threshold},
      {"combined", ScreeningRule::Mode::combined}};
  static const std::pair<const char*, SupportSource> sources[] = {{"main", SupportSource::main},
                                                                  {"momentum", SupportSource::momentum}};
  static const std::pair<const char*, CandidatePool> pools[] = {
      {"current_batch", CandidatePool::current_batch}, {"memory_bank", CandidatePool::memory_bank}};
  static const std::pair<const char*, DatasetKind> datasets[] = {{"clusters", DatasetKind::clusters},
                                                                 {"rings", DatasetKind::rings}};

  if (key == "tau") c.tau = parse_double(key, v);
  else if (key == "strategy") c.strategy = parse_enum(key, v, strategies);
  else if (key == "aggregation") c.aggregation = parse_enum(key, v, aggregations);
  else if (key == "screening") c.screening = parse_enum(key, v, screenings);
  else if (key == "k") c.k = parse_u64(key, v);
  else if (key == "t") c.t = parse_double(key, v);
  else if (key == "support_size") c.support_size = parse_u64(key, v);
  else if (key == "support_source") c.support_source = parse_enum(key, v, sources);
  else if (key == "candidate_pool") c.candidate_pool = parse_enum(key, v, pools);
  else if (key == "memory_bank") c.memory_bank = parse_bool(key, v);
  else if (key == "momentum") c.momentum = parse_double(key, v);
  else if (key == "bank_capacity") c.bank_capacity = parse_u64(key, v);
  else if (key == "oracle_labels") c.oracle_labels = parse_bool(key, v);
  else if (key == "batch_size") c.batch_size = parse_u64(key, v);
  else if (key == "epochs") c.epochs = parse_u64(key, v);
  else if (key == "lr") c.lr = parse_double(key, v);
  else if (key == "optimizer_momentum") c.optimizer_momentum = parse_double(key, v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "dataset") c.dataset = parse_enum(key, v, datasets);
  else if (key == "dataset_file") c.dataset_file = v;
  else if (key == "data_seed") c.data_seed = parse_u64(key, v);
  else if (key == "classes") c.classes = parse_u64(key, v);
  else if (key == "points_per_class") c.points_per_class = parse_u64(key, v);
  else if (key == "input_dim") c.input_dim = parse_u64(key, v);
  else if (key == "cluster_spread") c.cluster_spread = parse_double(key, v);
  else if (key == "cluster_sigma") c.cluster_sigma = parse_double(key, v);
  else if (key == "ring_noise") c.ring_noise = parse_double(key, v);
  else if (key == "jitter") c.jitter = parse_double(key, v);
  else if (key == "dropout") c.dropout = parse_double(key, v);
  else if (key == "scale_min") c.scale_min = parse_double(key, v);
  else if (key == "scale_max") c.scale_max = parse_double(key, v);
  else if (key == "hidden") c.hidden = parse_list(key, v);
  else if (key == "embed_dim") c.embed_dim = parse_u64(key, v);
  else if (key == "knn_k") c.knn_k = parse_u64(key, v);
  else if (key == "probe_epochs") c.probe_epochs = parse_u64(key, v);
  else if (key == "probe_lr") c.probe_lr = parse_double(key, v);
  else if (key == "eval_every") c.eval_every = parse_u64(key, v);
  else fail(ErrorKind::config, "unknown config key '" + key + "'");
}

/// Every field as (key, canonical value), in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const FncConfig& c) {
  using config_detail::fmt;
  std::string hidden;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
  if (hidden.empty()) hidden = "none";
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"tau", fmt(c.tau)},
      {"strategy", to_string(c.strategy)},
      {"aggregation", to_string(c.aggregation)},
      {"screening", to_string(c.screening)},
      {"k", std::to_string(c.k)},
      {"t", fmt(c.t)},
      {"support_size", std::to_string(c.support_size)},
      {"support_source", to_string(c.support_source)},
      {"candidate_pool", to_string(c.candidate_pool)},
      {"memory_bank", b(c.memory_bank)},
      {"momentum", fmt(c.momentum)},
      {"bank_capacity", std::to_string(c.bank_capacity)},
      {"oracle_labels", b(c.oracle_labels)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"lr", fmt(c.lr)},
      {"optimizer_momentum", fmt(c.optimizer_momentum)},
      {"seed", std::to_string(c.seed)},
      {"dataset", to_string(c.dataset)},
      {"dataset_file", c.dataset_file},
      {"data_seed", std::to_string(c.data_seed)},
      {"classes", std::to_string(c.classes)},
      {"points_per_class", std::to_string(c.points_per_class)},
      {"input_dim", std::to_string(c.input_dim)},
      {"cluster_spread", fmt(c.cluster_spread)},
      {"cluster_sigma", fmt(c.cluster_sigma)},
      {"ring_noise", fmt(c.ring_noise)},
      {"jitter", fmt(c.jitter)},
      {"dropout", fmt(c.dropout)},
      {"scale_min", fmt(c.scale_min)},
      {"scale_max", fmt(c.scale_max)},
      {"hidden", hidden},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"knn_k", std::to_string(c.knn_k)},
      {"probe_epochs", std::to_string(c.probe_epochs)},
      {"probe_lr", fmt(c.probe_lr)},
      {"eval_every", std::to_string(c.eval_every)},
  };
}

inline std::string serialize_config(const FncConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

/// 64-bit FNV-1a over the canonical text of every field except the seed.
inline std::string config_fingerprint(const FncConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : config_entries(c)) {
    if (k == "seed") continue;
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void validate_config(const FncConfig& c) {
  auto need = [](bool ok, const std::string& what) { require(ok, ErrorKind::config, what); };
  need(std::isfinite(c.tau) && c.tau > 0.0, "tau must be > 0");
  if (c.detects() && !c.oracle_labels) c.rule().validate();
  need(c.momentum >= 0.0 && c.momentum <= 1.0, "momentum must lie in [0, 1]");
  need(c.bank_capacity >= 1, "bank_capacity must be >= 1");
  need(!(c.oracle_labels && !c.detects()), "oracle_labels needs a cancellation strategy");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(std::isfinite(c.lr) && c.lr >= 0.0, "lr must be >= 0");
  need(c.optimizer_momentum >= 0.0 && c.optimizer_momentum < 1.0, "optimizer_momentum must lie in [0, 1)");
  need(c.classes >= 2, "classes must be >= 2");
  need(c.points_per_class >= 1, "points_per_class must be >= 1");
  need(c.input_dim >= 1, "input_dim must be >= 1");
  need(c.dataset != DatasetKind::rings || c.input_dim == 2 || !c.dataset_file.empty(),
       "rings dataset is two-dimensional; set input_dim = 2");
  for (std::size_t h : c.hidden) need(h >= 1, "hidden widths must be >= 1");
  need(c.embed_dim >= 1, "embed_dim must be >= 1");
  need(c.knn_k >= 1, "knn_k must be >= 1");
  need(c.eval_every >= 1, "eval_every must be >= 1");
  need(std::isfinite(c.probe_lr) && c.probe_lr > 0.0, "probe_lr must be > 0");
  c.augmentation().validate();
}

inline FncConfig parse_config(const std::string& text, FncConfig base = {}) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    for (const auto& s : seen)
      require(s != key, ErrorKind::config, "duplicate config key '" + key + "'");
    seen.push_back(key);
    set_config_value(base, key, line.substr(eq + 1));
  }
  validate_config(base);
  return base;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline FncConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

}  // namespace fnc
