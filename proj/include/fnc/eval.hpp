#pragma once

// Measurement: false-negative detection accuracy, kNN and linear probes on
// frozen embeddings, and ground-truth false-negative sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "fnc/batch.hpp"
#include "fnc/core_math.hpp"

namespace fnc {

struct DetectionReport {
  std::size_t detected = 0;
  std::size_t correct = 0;
  std::size_t empty_anchors = 0;

  /// Micro-average over all detected pairs; absent when nothing was detected.
  std::optional<double> accuracy() const {
    if (detected == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(detected);
  }

  DetectionReport& operator+=(const DetectionReport& o) {
    detected += o.detected;
    correct += o.correct;
    empty_anchors += o.empty_anchors;
    return *this;
  }
};

inline DetectionReport fn_detection_accuracy(const FalseNegativeSets& fns,
                                             std::span<const int> anchor_labels,
                                             std::span<const int> candidate_labels) {
  require(anchor_labels.size() == fns.sets.size(), ErrorKind::shape,
          "detection accuracy: anchor labels misaligned with sets");
  DetectionReport rep;
  for (std::size_t i = 0; i < fns.sets.size(); ++i) {
    if (fns.sets[i].empty()) ++rep.empty_anchors;
    for (std::size_t m : fns.sets[i]) {
      require(m < candidate_labels.size(), ErrorKind::shape,
              "detection accuracy: candidate labels misaligned with pool");
      ++rep.detected;
      if (candidate_labels[m] == anchor_labels[i]) ++rep.correct;
    }
  }
  return rep;
}

/// Every candidate sharing the anchor's label. With the batch pool
/// (`pairing` non-empty) the anchor's own two views are skipped.
inline FalseNegativeSets oracle_fn_sets(std::span<const int> anchor_labels,
                                        std::span<const int> candidate_labels,
                                        std::span<const std::size_t> pairing = {}) {
  const bool batch_pool = !pairing.empty();
  FalseNegativeSets out;
  out.pool = batch_pool ? CandidatePool::current_batch : CandidatePool::memory_bank;
  out.sets.resize(anchor_labels.size());
  for (std::size_t i = 0; i < anchor_labels.size(); ++i)
    for (std::size_t m = 0; m < candidate_labels.size(); ++m) {
      if (batch_pool && (m == i || m == pairing[i])) continue;
      if (candidate_labels[m] == anchor_labels[i]) out.sets[i].push_back(m);
    }
  return out;
}

struct LabeledEmbeddings {
  std::vector<Vec> x;
  std::vector<int> y;
};

inline std::size_t class_count(std::span<const int> labels) {
  int hi = -1;
  for (int l : labels) {
    require(l >= 0, ErrorKind::shape, "labels must be non-negative");
    hi = std::max(hi, l);
  }
  return static_cast<std::size_t>(hi + 1);
}

/// Majority vote among the k most cosine-similar training points. Neighbour
/// ties go to the lower train index; vote ties go to the label whose best
/// neighbour ranks first.
inline double knn_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& test, std::size_t k) {
  require(!train.x.empty() && !test.x.empty(), ErrorKind::empty_batch, "knn probe: empty split");
  require(train.x.size() == train.y.size() && test.x.size() == test.y.size(), ErrorKind::shape,
          "knn probe: labels misaligned");
  require(k >= 1 && k <= train.x.size(), ErrorKind::config, "knn probe: k must lie in [1, train size]");

  std::vector<Vec> train_unit, test_unit;
  for (const auto& v : train.x) train_unit.push_back(l2_normalize(v));
  for (const auto& v : test.x) test_unit.push_back(l2_normalize(v));

  const std::size_t classes = std::max(class_count(train.y), class_count(test.y));
  std::vector<std::size_t> order(train.x.size());
  std::vector<double> sims(train.x.size());
  std::vector<std::size_t> votes(classes);
  std::vector<std::size_t> first_rank(classes);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < test_unit.size(); ++t) {
    for (std::size_t r = 0; r < train_unit.size(); ++r) sims[r] = dot(test_unit[t], train_unit[r]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return sims[a] != sims[b] ? sims[a] > sims[b] : a < b;
                      });
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(first_rank.begin(), first_rank.end(), k);
    for (std::size_t r = 0; r < k; ++r) {
      const auto lab = static_cast<std::size_t>(train.y[order[r]]);
      ++votes[lab];
      first_rank[lab] = std::min(first_rank[lab], r);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (votes[c] > votes[best] || (votes[c] == votes[best] && first_rank[c] < first_rank[best]))
        best = c;
    if (static_cast<int>(best) == test.y[t]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.x.size());
}

/// Multinomial logistic regression trained by full-batch gradient descent
/// from zero weights. Prediction ties resolve to the lowest class index.
inline double linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& test,
                           std::size_t epochs, double lr) {
  require(!train.x.empty() && !test.x.empty(), ErrorKind::empty_batch, "linear probe: empty split");
  require(train.x.size() == train.y.size() && test.x.size() == test.y.size(), ErrorKind::shape,
          "linear probe: labels misaligned");
  const std::size_t classes = std::max(class_count(train.y), class_count(test.y));
  {
    std::vector<int> present(train.y.begin(), train.y.end());
    std::sort(present.begin(), present.end());
    require(std::unique(present.begin(), present.end()) - present.begin() >= 2, ErrorKind::config,
            "linear probe needs at least two classes in the training split");
  }
  const std::size_t d = train.x.front().size();
  const double inv_n = 1.0 / static_cast<double>(train.x.size());

  Matrix w(d, classes);
  Vec b(classes, 0.0);
  Matrix gw(d, classes);
  Vec gb(classes), logits(classes);

  auto scores = [&](const Vec& x) {
    for (std::size_t c = 0; c < classes; ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < d; ++k) s += x[k] * w(k, c);
      logits[c] = s;
    }
  };

  for (std::size_t e = 0; e < epochs; ++e) {
    std::fill(gw.data.begin(), gw.data.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t r = 0; r < train.x.size(); ++r) {
      const Vec& x = train.x[r];
      scores(x);
      const double lse = log_sum_exp(logits);
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = std::exp(logits[c] - lse) - (static_cast<int>(c) == train.y[r] ? 1.0 : 0.0);
        gb[c] += p;
        for (std::size_t k = 0; k < d; ++k) gw(k, c) += p * x[k];
      }
    }
    for (std::size_t k = 0; k < gw.data.size(); ++k) w.data[k] -= lr * inv_n * gw.data[k];
    for (std::size_t c = 0; c < classes; ++c) b[c] -= lr * inv_n * gb[c];
  }

  std::size_t hits = 0;
  for (std::size_t t = 0; t < test.x.size(); ++t) {
    scores(test.x[t]);
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (static_cast<int>(best) == test.y[t]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.x.size());
}

struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class seeded shuffle; the first train_fraction of each class trains.
inline ProbeSplit stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::config,
          "train fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  ProbeSplit split;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    cut = std::clamp<std::size_t>(cut, idx.size() > 1 ? 1 : 0, idx.size() > 1 ? idx.size() - 1 : idx.size());
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

inline LabeledEmbeddings gather(const std::vector<Vec>& x, std::span<const int> y,
                                std::span<const std::size_t> idx) {
  LabeledEmbeddings out;
  for (std::size_t i : idx) {
    out.x.push_back(x[i]);
    out.y.push_back(y[i]);
  }
  return out;
}

struct ProbeReport {
  double knn = 0.0;
  double linear = 0.0;
};

}  // namespace fnc
