#pragma once

// Experiment driver: full training runs with per-epoch metrics, CSV/JSON
// records, and the ablation grid runner.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fnc/config.hpp"
#include "fnc/data.hpp"
#include "fnc/eval.hpp"
#include "fnc/model.hpp"
#include "fnc/trainer.hpp"

namespace fnc {

/// Mixes any number of 64-bit values into one seed.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> loss;
  std::size_t fn_detected = 0;
  std::optional<double> fn_accuracy;
  std::optional<double> knn_acc;
  std::optional<double> probe_acc;

  bool operator==(const EpochRecord&) const = default;

  std::size_t fn_correct() const {
    return fn_accuracy ? static_cast<std::size_t>(std::llround(*fn_accuracy * static_cast<double>(fn_detected)))
                       : 0;
  }
};

struct RunRecord {
  std::string run_id;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  double wall_time_s = 0.0;
  FncConfig config;

  const EpochRecord& last() const { return epochs.back(); }

  std::optional<double> final_probe() const {
    for (auto it = epochs.rbegin(); it != epochs.rend(); ++it)
      if (it->probe_acc) return it->probe_acc;
    return std::nullopt;
  }
  std::optional<double> final_knn() const {
    for (auto it = epochs.rbegin(); it != epochs.rend(); ++it)
      if (it->knn_acc) return it->knn_acc;
    return std::nullopt;
  }

  /// Detection accuracy pooled over the last `fraction` of training epochs.
  std::optional<double> pooled_fn_accuracy(double fraction) const {
    std::size_t trained = 0;
    for (const auto& e : epochs)
      if (e.epoch > 0) ++trained;
    const auto window = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(trained)));
    std::size_t det = 0, hit = 0, taken = 0;
    for (auto it = epochs.rbegin(); it != epochs.rend() && taken < window; ++it) {
      if (it->epoch == 0) continue;
      det += it->fn_detected;
      hit += it->fn_correct();
      ++taken;
    }
    if (det == 0) return std::nullopt;
    return static_cast<double>(hit) / static_cast<double>(det);
  }
};

inline std::string make_run_id(const std::string& fingerprint, std::uint64_t seed) {
  return fingerprint + "-" + std::to_string(seed);
}

inline Dataset load_dataset(const FncConfig& cfg) {
  Dataset ds;
  if (!cfg.dataset_file.empty()) {
    ds = import_dataset(cfg.dataset_file);
  } else if (cfg.dataset == DatasetKind::rings) {
    ds = gen_rings(cfg.classes, cfg.points_per_class, cfg.ring_noise, cfg.data_seed);
  } else {
    ds = gen_clusters({cfg.classes, cfg.points_per_class, cfg.input_dim, cfg.cluster_spread,
                       cfg.cluster_sigma, cfg.data_seed});
  }
  if (ds.dim != cfg.input_dim)
    fail(ErrorKind::config, "dataset dimension " + std::to_string(ds.dim) + " does not match input_dim");
  require(cfg.batch_size <= ds.size(), ErrorKind::config, "batch_size exceeds dataset size");
  return ds;
}

struct RunHooks {
  std::function<void(std::size_t epoch, std::size_t step, const StepOutput&)> on_step;
  std::function<void(const Trainer&)> on_finish;
};

inline RunRecord run_experiment(const FncConfig& cfg, const RunHooks& hooks = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  validate_config(cfg);
  const Dataset ds = load_dataset(cfg);
  const ProbeSplit split = stratified_split(ds.labels, 0.8, cfg.data_seed);

  RunRecord rec;
  rec.config = cfg;
  rec.seed = cfg.seed;
  rec.fingerprint = config_fingerprint(cfg);
  rec.run_id = make_run_id(rec.fingerprint, cfg.seed);

  Trainer trainer(cfg);

  auto probe = [&](EpochRecord& row) {
    const std::vector<Vec> emb = encode(trainer.params(), ds.points);
    const auto train = gather(emb, ds.labels, split.train);
    const auto test = gather(emb, ds.labels, split.test);
    row.knn_acc = knn_probe(train, test, std::min(cfg.knn_k, train.x.size()));
    row.probe_acc = linear_probe(train, test, cfg.probe_epochs, cfg.probe_lr);
  };

  {
    EpochRecord init;
    probe(init);
    rec.epochs.push_back(init);
  }

  const std::size_t n = cfg.batch_size;
  const std::size_t steps_per_epoch = ds.size() / n;
  const AugmentationSpec aug = cfg.augmentation();
  std::vector<int> bank_labels;  // side band, indexed by bank sequence number

  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed({cfg.seed, 1, e}));
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    double loss_sum = 0.0;
    DetectionReport detection;
    for (std::size_t st = 0; st < steps_per_epoch; ++st) {
      const std::vector<std::size_t> sources(perm.begin() + static_cast<std::ptrdiff_t>(st * n),
                                             perm.begin() + static_cast<std::ptrdiff_t>((st + 1) * n));
      const LabeledBatch lb =
          make_batch_from(ds, sources, cfg.support_size, aug, derive_seed({cfg.seed, 2, e, st}));
      const auto& view_labels = lb.labels.view_labels;
      const bool bank_pool = cfg.candidate_pool == CandidatePool::memory_bank;

      auto pool_labels = [&](const std::vector<std::uint64_t>& seqs) {
        std::vector<int> out;
        for (std::uint64_t q : seqs) out.push_back(bank_labels.at(q));
        return out;
      };

      StepOutput out;
      try {
        if (cfg.oracle_labels) {
          const FalseNegativeSets oracle =
              bank_pool ? oracle_fn_sets(view_labels, pool_labels(trainer.bank_snapshot().seqs))
                        : oracle_fn_sets(view_labels, view_labels, lb.batch.pairing);
          out = trainer.step(lb.batch, &oracle);
        } else {
          out = trainer.step(lb.batch);
        }
      } catch (const Error& err) {
        throw err.with_context("epoch " + std::to_string(e) + " step " + std::to_string(st));
      }

      loss_sum += out.loss;
      if (cfg.detects())
        detection += bank_pool ? fn_detection_accuracy(out.fns, view_labels, pool_labels(out.pool_seqs))
                               : fn_detection_accuracy(out.fns, view_labels, view_labels);
      if (trainer.bank())
        bank_labels.insert(bank_labels.end(), lb.labels.image_labels.begin(), lb.labels.image_labels.end());
      if (hooks.on_step) hooks.on_step(e, st, out);
    }

    EpochRecord row;
    row.epoch = e;
    if (steps_per_epoch > 0) row.loss = loss_sum / static_cast<double>(steps_per_epoch);
    row.fn_detected = detection.detected;
    row.fn_accuracy = detection.accuracy();
    if (e % cfg.eval_every == 0 || e == cfg.epochs) probe(row);
    rec.epochs.push_back(row);
  }

  if (hooks.on_finish) hooks.on_finish(trainer);
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---- CSV / JSON -------------------------------------------------------------

inline const char* runs_csv_header() {
  return "run_id,seed,epoch,loss,fn_detected,fn_accuracy,knn_acc,probe_acc";
}

inline std::string csv_value(const std::optional<double>& v) {
  if (!v) return {};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

inline void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  out << runs_csv_header() << '\n';
  for (const auto& r : runs)
    for (const auto& e : r.epochs)
      out << r.run_id << ',' << r.seed << ',' << e.epoch << ',' << csv_value(e.loss) << ','
          << e.fn_detected << ',' << csv_value(e.fn_accuracy) << ',' << csv_value(e.knn_acc) << ','
          << csv_value(e.probe_acc) << '\n';
}

/// Rebuilds run_id, fingerprint, seed and epoch rows from an emitted file.
inline std::vector<RunRecord> parse_runs_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == runs_csv_header(), ErrorKind::io,
          "runs CSV: unexpected header");
  std::vector<RunRecord> runs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (cols.size() != 8)
      fail(ErrorKind::io, "runs CSV line " + std::to_string(lineno) + ": expected 8 columns");

    auto num = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      double v = 0.0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        fail(ErrorKind::io, "runs CSV line " + std::to_string(lineno) + ": bad number '" + s + "'");
      return v;
    };
    auto integer = [&](const std::string& s) {
      std::uint64_t v = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        fail(ErrorKind::io, "runs CSV line " + std::to_string(lineno) + ": bad integer '" + s + "'");
      return v;
    };

    if (runs.empty() || runs.back().run_id != cols[0]) {
      RunRecord r;
      r.run_id = cols[0];
      r.fingerprint = cols[0].substr(0, cols[0].find('-'));
      r.seed = integer(cols[1]);
      runs.push_back(std::move(r));
    }
    EpochRecord e;
    e.epoch = integer(cols[2]);
    e.loss = num(cols[3]);
    e.fn_detected = integer(cols[4]);
    e.fn_accuracy = num(cols[5]);
    e.knn_acc = num(cols[6]);
    e.probe_acc = num(cols[7]);
    runs.back().epochs.push_back(e);
  }
  return runs;
}

inline nlohmann::json to_json(const RunRecord& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json cfg = json::object();
  for (const auto& [k, v] : config_entries(r.config)) cfg[k] = v;
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", opt(e.loss)},
                      {"fn_detected", e.fn_detected},
                      {"fn_correct", e.fn_correct()},
                      {"fn_accuracy", opt(e.fn_accuracy)},
                      {"knn_acc", opt(e.knn_acc)},
                      {"probe_acc", opt(e.probe_acc)}});
  return {{"run_id", r.run_id},   {"fingerprint", r.fingerprint}, {"seed", r.seed},
          {"wall_time_s", r.wall_time_s}, {"config", cfg}, {"epochs", epochs}};
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path + " for writing");
  out << body;
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path);
}

/// Writes <stem>.csv and the JSON mirror <stem>.json.
inline void persist_runs(const std::string& stem, const std::vector<RunRecord>& runs) {
  std::ostringstream csv;
  write_runs_csv(csv, runs);
  write_text(stem + ".csv", csv.str());
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : runs) arr.push_back(to_json(r));
  write_text(stem + ".json", arr.dump(2) + "\n");
}

// ---- ablation ---------------------------------------------------------------

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct AblationGrid {
  FncConfig base;
  std::vector<GridAxis> axes;
  std::vector<std::uint64_t> seeds;

  std::size_t cell_count() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }
};

// Grid file: ordinary config lines set the base, `grid.<key> = a, b, c`
// adds an axis (first axis outermost), `seeds = 0, 1, 2` lists seeds.
inline AblationGrid parse_grid(const std::string& text) {
  AblationGrid g;
  std::string base_text;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string body = line.substr(0, line.find('#'));
    const auto eq = body.find('=');
    const std::string key = config_detail::trim(eq == std::string::npos ? body : body.substr(0, eq));
    if (key.rfind("grid.", 0) == 0 && eq != std::string::npos) {
      GridAxis axis{key.substr(5), {}};
      std::stringstream vs(body.substr(eq + 1));
      std::string v;
      while (std::getline(vs, v, ',')) {
        v = config_detail::trim(v);
        if (!v.empty()) axis.values.push_back(v);
      }
      require(!axis.values.empty(), ErrorKind::config, "grid axis '" + axis.key + "' has no values");
      FncConfig probe;
      set_config_value(probe, axis.key, axis.values.front());  // rejects unknown keys early
      g.axes.push_back(std::move(axis));
    } else if (key == "seeds" && eq != std::string::npos) {
      for (std::size_t s : config_detail::parse_list("seeds", body.substr(eq + 1))) g.seeds.push_back(s);
    } else {
      base_text += line + "\n";
    }
  }
  g.base = parse_config(base_text);
  if (g.seeds.empty()) g.seeds.push_back(g.base.seed);
  return g;
}

struct AblationCell {
  std::string label;  // "key=value;key=value"
  FncConfig config;
  std::string fingerprint;
  std::vector<RunRecord> runs;
  std::vector<std::string> failures;
};

struct SummaryRow {
  std::string fingerprint;
  std::string label;
  std::size_t runs = 0;
  std::size_t failed = 0;
  double probe_mean = 0.0, probe_std = 0.0;
  double knn_mean = 0.0, knn_std = 0.0;
  std::optional<double> fn_acc_mean;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::vector<SummaryRow> summary;
};

/// Running mean and sample standard deviation (Welford).
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double stddev() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

inline SummaryRow summarize(const AblationCell& cell) {
  SummaryRow row;
  row.fingerprint = cell.fingerprint;
  row.label = cell.label;
  row.runs = cell.runs.size();
  row.failed = cell.failures.size();
  RunningStats probe, knn, fn;
  for (const auto& r : cell.runs) {
    if (auto p = r.final_probe()) probe.add(*p);
    if (auto k = r.final_knn()) knn.add(*k);
    if (auto f = r.pooled_fn_accuracy(0.2)) fn.add(*f);
  }
  row.probe_mean = probe.mean;
  row.probe_std = probe.stddev();
  row.knn_mean = knn.mean;
  row.knn_std = knn.stddev();
  if (fn.n > 0) row.fn_acc_mean = fn.mean;
  return row;
}

/// Runs every (cell, seed) pair. Cells may execute on `threads` workers;
/// results are stored by position so the output order is fixed.
inline AblationResult run_ablation(const AblationGrid& grid, std::size_t threads = 1,
                                   std::ostream* log = nullptr) {
  require(!grid.seeds.empty(), ErrorKind::config, "ablation needs at least one seed");
  AblationResult res;
  const std::size_t cells = grid.cell_count();
  require(cells >= 1, ErrorKind::config, "ablation grid is empty");
  res.cells.resize(cells);
  std::vector<char> cell_ok(cells, 1);

  for (std::size_t c = 0; c < cells; ++c) {
    AblationCell& cell = res.cells[c];
    cell.config = grid.base;
    std::size_t rem = c;
    std::vector<std::string> parts(grid.axes.size());
    for (std::size_t a = grid.axes.size(); a-- > 0;) {
      const auto& axis = grid.axes[a];
      const std::string& v = axis.values[rem % axis.values.size()];
      rem /= axis.values.size();
      parts[a] = axis.key + "=" + v;
    }
    for (std::size_t a = 0; a < parts.size(); ++a) {
      cell.label += (a ? ";" : "") + parts[a];
      try {
        set_config_value(cell.config, grid.axes[a].key, parts[a].substr(parts[a].find('=') + 1));
      } catch (const Error& e) {
        cell.failures.push_back(e.what());
        cell_ok[c] = 0;
      }
    }
    if (cell_ok[c]) {
      try {
        validate_config(cell.config);
      } catch (const Error& e) {
        cell.failures.push_back(e.what());
        cell_ok[c] = 0;
      }
    }
    cell.fingerprint = config_fingerprint(cell.config);
  }

  const std::size_t tasks = cells * grid.seeds.size();
  std::vector<std::optional<RunRecord>> records(tasks);
  std::vector<std::string> errors(tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t c = t / grid.seeds.size();
      if (!cell_ok[c]) continue;
      FncConfig cfg = res.cells[c].config;
      cfg.seed = grid.seeds[t % grid.seeds.size()];
      try {
        records[t] = run_experiment(cfg);
      } catch (const std::exception& e) {
        errors[t] = "seed " + std::to_string(cfg.seed) + ": " + e.what();
      }
    }
  };
  threads = std::max<std::size_t>(1, threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  for (std::size_t t = 0; t < tasks; ++t) {
    AblationCell& cell = res.cells[t / grid.seeds.size()];
    if (records[t]) cell.runs.push_back(std::move(*records[t]));
    if (!errors[t].empty()) cell.failures.push_back(errors[t]);
  }
  for (const auto& cell : res.cells) {
    res.summary.push_back(summarize(cell));
    if (log) {
      const auto& s = res.summary.back();
      *log << s.label << "  probe " << s.probe_mean << " +- " << s.probe_std << "  knn " << s.knn_mean
           << " +- " << s.knn_std << (s.failed ? "  (failures: " + std::to_string(s.failed) + ")" : "")
           << '\n';
    }
  }
  return res;
}

inline const char* summary_csv_header() {
  return "fingerprint,label,runs,failed,probe_mean,probe_std,knn_mean,knn_std,fn_acc_mean";
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << summary_csv_header() << '\n';
  for (const auto& r : rows)
    out << r.fingerprint << ',' << r.label << ',' << r.runs << ',' << r.failed << ',' << csv_value(r.probe_mean)
        << ',' << csv_value(r.probe_std) << ',' << csv_value(r.knn_mean) << ',' << csv_value(r.knn_std) << ','
        << csv_value(r.fn_acc_mean) << '\n';
}

}  // namespace fnc
