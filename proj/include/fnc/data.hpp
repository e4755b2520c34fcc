#pragma once

// Synthetic labeled data, view augmentation and batch assembly. Labels are
// returned next to the batch, never inside it.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fnc/core_math.hpp"

namespace fnc {

struct LabeledPoint {
  Vec x;
  int label = 0;
};

struct Dataset {
  std::size_t classes = 0;
  std::size_t per_class = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<Vec> points;
  std::vector<int> labels;

  std::size_t size() const { return points.size(); }
  LabeledPoint at(std::size_t i) const { return {points[i], labels[i]}; }
};

struct ClusterSpec {
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t dim = 16;
  double spread = 4.0;  // radius of the sphere the centers lie on
  double sigma = 1.0;   // within-class standard deviation
  std::uint64_t seed = 0;
};

inline Dataset gen_clusters(const ClusterSpec& spec) {
  require(spec.classes >= 2, ErrorKind::config, "need at least two classes");
  require(spec.per_class >= 1, ErrorKind::config, "need at least one point per class");
  require(spec.dim >= 1, ErrorKind::config, "input dimension must be >= 1");
  require(spec.spread > 0.0, ErrorKind::config, "center spread must be > 0");
  require(spec.sigma >= 0.0, ErrorKind::config, "within-class sigma must be >= 0");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Vec> centers(spec.classes, Vec(spec.dim));
  for (auto& c : centers) {
    double n = 0.0;
    while (n == 0.0) {
      for (double& v : c) v = gauss(rng);
      n = norm(c);
    }
    for (double& v : c) v *= spec.spread / n;
  }

  Dataset ds{spec.classes, spec.per_class, spec.dim, spec.seed, {}, {}};
  for (std::size_t c = 0; c < spec.classes; ++c)
    for (std::size_t p = 0; p < spec.per_class; ++p) {
      Vec x(spec.dim);
      for (std::size_t k = 0; k < spec.dim; ++k) x[k] = centers[c][k] + spec.sigma * gauss(rng);
      ds.points.push_back(std::move(x));
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

/// Concentric 2D rings; ring c has radius c + 1.
inline Dataset gen_rings(std::size_t rings, std::size_t per_class, double noise, std::uint64_t seed) {
  require(rings >= 2, ErrorKind::config, "need at least two rings");
  require(per_class >= 1, ErrorKind::config, "need at least one point per ring");
  require(noise >= 0.0, ErrorKind::config, "ring noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds{rings, per_class, 2, seed, {}, {}};
  for (std::size_t c = 0; c < rings; ++c)
    for (std::size_t p = 0; p < per_class; ++p) {
      const double r = static_cast<double>(c + 1) + noise * gauss(rng);
      const double a = angle(rng);
      ds.points.push_back({r * std::cos(a), r * std::sin(a)});
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

struct AugmentationSpec {
  double jitter = 0.0;   // gaussian noise scale
  double dropout = 0.0;  // per-coordinate zeroing probability
  double scale_min = 1.0;
  double scale_max = 1.0;

  void validate() const {
    require(jitter >= 0.0, ErrorKind::config, "jitter must be >= 0");
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::config, "dropout must lie in [0, 1)");
    require(scale_min > 0.0 && scale_min <= scale_max, ErrorKind::config,
            "scale range must satisfy 0 < min <= max");
  }
};

/// x' = drop(a * (x + jitter * eps)), a ~ U[scale_min, scale_max].
inline LabeledPoint augment(const LabeledPoint& p, const AugmentationSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double a =
      spec.scale_min == spec.scale_max ? spec.scale_min
                                       : std::uniform_real_distribution<double>(spec.scale_min, spec.scale_max)(rng);
  LabeledPoint out{p.x, p.label};
  for (double& v : out.x) {
    const double noisy = spec.jitter > 0.0 ? v + spec.jitter * gauss(rng) : v;
    v = a * noisy;
    if (spec.dropout > 0.0 && unit(rng) < spec.dropout) v = 0.0;
  }
  return out;
}

/// Raw inputs for one step. Image n owns main views 2n and 2n + 1 and
/// support views support_groups[n].
struct RawBatch {
  std::vector<Vec> main_views;
  std::vector<std::size_t> pairing;
  std::vector<Vec> support_views;
  std::vector<std::vector<std::size_t>> support_groups;

  std::size_t num_images() const { return main_views.size() / 2; }
  std::size_t support_size() const {
    return support_groups.empty() ? 0 : support_groups.front().size();
  }
};

/// Evaluation-only side band.
struct BatchLabels {
  std::vector<std::size_t> sources;  // dataset index per image
  std::vector<int> image_labels;     // per image
  std::vector<int> view_labels;      // per main view
  std::vector<int> support_labels;   // per support view
};

struct LabeledBatch {
  RawBatch batch;
  BatchLabels labels;
};

inline std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                           std::uint64_t seed) {
  if (count > population)
    fail(ErrorKind::config, "batch of " + std::to_string(count) + " exceeds dataset of " + std::to_string(population));
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  return idx;
}

/// Builds a batch from explicit dataset indices (distinct).
inline LabeledBatch make_batch_from(const Dataset& ds, const std::vector<std::size_t>& sources,
                                    std::size_t support_size, const AugmentationSpec& spec,
                                    std::uint64_t seed) {
  spec.validate();
  require(!sources.empty(), ErrorKind::empty_batch, "batch needs at least one image");
  std::mt19937_64 rng(seed);
  LabeledBatch out;
  auto& b = out.batch;
  auto& lab = out.labels;
  for (std::size_t n = 0; n < sources.size(); ++n) {
    require(sources[n] < ds.size(), ErrorKind::shape, "source index out of range");
    const LabeledPoint p = ds.at(sources[n]);
    for (int v = 0; v < 2; ++v) {
      b.main_views.push_back(augment(p, spec, rng()).x);
      lab.view_labels.push_back(p.label);
    }
    b.pairing.push_back(2 * n + 1);
    b.pairing.push_back(2 * n);
    std::vector<std::size_t> group;
    for (std::size_t s = 0; s < support_size; ++s) {
      group.push_back(b.support_views.size());
      b.support_views.push_back(augment(p, spec, rng()).x);
      lab.support_labels.push_back(p.label);
    }
    b.support_groups.push_back(std::move(group));
    lab.sources.push_back(sources[n]);
    lab.image_labels.push_back(p.label);
  }
  return out;
}

inline LabeledBatch make_batch(const Dataset& ds, std::size_t n_images, std::size_t support_size,
                               const AugmentationSpec& spec, std::uint64_t seed) {
  require(n_images >= 1, ErrorKind::empty_batch, "batch needs at least one image");
  std::seed_seq seq{seed, std::uint64_t{0x5eed}};
  std::uint32_t words[4];
  seq.generate(words, words + 4);
  const std::uint64_t pick = (std::uint64_t{words[0]} << 32) | words[1];
  const std::uint64_t aug = (std::uint64_t{words[2]} << 32) | words[3];
  return make_batch_from(ds, sample_without_replacement(ds.size(), n_images, pick), support_size,
                         spec, aug);
}

// Dataset text format:
//   # fnc-dataset C=<classes> n=<per_class> d_in=<dim> seed=<seed>
//   <label>,<x_0>,...,<x_{d_in-1}>      one line per point
inline void export_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open " + path + " for writing");
  out << "# fnc-dataset C=" << ds.classes << " n=" << ds.per_class << " d_in=" << ds.dim
      << " seed=" << ds.seed << '\n';
  char buf[40];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.points[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path);
}

inline Dataset import_dataset(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path);
  auto bad = [&](const std::string& what) { fail(ErrorKind::io, path + ": " + what); };

  std::string line;
  if (!std::getline(in, line)) bad("empty file");
  Dataset ds;
  {
    std::istringstream hs(line);
    std::string hash, magic, field;
    hs >> hash >> magic;
    if (hash != "#" || magic != "fnc-dataset") bad("missing dataset header");
    int seen = 0;
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) bad("malformed header field " + field);
      const std::string key = field.substr(0, eq);
      std::uint64_t val = 0;
      const char* vb = field.data() + eq + 1;
      const char* ve = field.data() + field.size();
      const auto r = std::from_chars(vb, ve, val);
      if (r.ec != std::errc{} || r.ptr != ve) bad("malformed header field " + field);
      if (key == "C") ds.classes = val, seen |= 1;
      else if (key == "n") ds.per_class = val, seen |= 2;
      else if (key == "d_in") ds.dim = val, seen |= 4;
      else if (key == "seed") ds.seed = val, seen |= 8;
      else bad("unknown header field " + key);
    }
    if (seen != 15) bad("header must give C, n, d_in and seed");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Vec x;
    int label = -1;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto r = std::from_chars(p, end, label);
    if (r.ec != std::errc{}) bad("bad label on line " + std::to_string(lineno));
    p = r.ptr;
    while (p < end) {
      if (*p != ',') bad("expected ',' on line " + std::to_string(lineno));
      double v;
      auto rv = std::from_chars(p + 1, end, v);
      if (rv.ec != std::errc{}) bad("bad value on line " + std::to_string(lineno));
      x.push_back(v);
      p = rv.ptr;
    }
    if (x.size() != ds.dim) bad("wrong coordinate count on line " + std::to_string(lineno));
    if (label < 0 || static_cast<std::size_t>(label) >= ds.classes)
      bad("label out of range on line " + std::to_string(lineno));
    ds.points.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace fnc
