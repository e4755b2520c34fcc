#pragma once

// False-negative detection: score every candidate against each anchor's
// support views, aggregate over the support set, then screen by top-k,
// threshold or both.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "fnc/batch.hpp"
#include "fnc/core_math.hpp"

namespace fnc {

enum class Aggregation { mean, max };

struct ScoreTable {
  std::size_t anchors = 0;
  std::size_t candidates = 0;
  std::size_t supports = 0;
  std::vector<double> raw;         // [anchor][candidate][support]
  std::vector<double> aggregated;  // [anchor][candidate]
  std::optional<Aggregation> mode;

  double raw_at(std::size_t i, std::size_t m, std::size_t s) const {
    return raw[(i * candidates + m) * supports + s];
  }
  double at(std::size_t i, std::size_t m) const { return aggregated[i * candidates + m]; }

  /// An already-aggregated table, one row of candidate scores per anchor.
  static ScoreTable from_scores(const std::vector<std::vector<double>>& rows) {
    ScoreTable t;
    t.anchors = rows.size();
    t.candidates = rows.empty() ? 0 : rows.front().size();
    for (const auto& r : rows) {
      require(r.size() == t.candidates, ErrorKind::shape, "ragged score rows");
      t.aggregated.insert(t.aggregated.end(), r.begin(), r.end());
    }
    t.mode = Aggregation::mean;
    return t;
  }
};

struct ScreeningRule {
  enum class Mode { top_k, threshold, combined };
  Mode mode = Mode::top_k;
  std::size_t k = 1;
  double t = 0.5;

  static ScreeningRule top_k(std::size_t k) { return {Mode::top_k, k, 0.0}; }
  static ScreeningRule threshold(double t) { return {Mode::threshold, 0, t}; }
  static ScreeningRule combined(std::size_t k, double t) { return {Mode::combined, k, t}; }

  bool uses_k() const { return mode != Mode::threshold; }
  bool uses_t() const { return mode != Mode::top_k; }

  void validate() const {
    if (uses_k()) require(k >= 1, ErrorKind::config, "top-k screening needs k >= 1");
    if (uses_t()) require(std::isfinite(t), ErrorKind::config, "threshold must be finite");
  }
};

inline ScoreTable score_support(const std::vector<Vec>& candidates, const SupportSet& supports) {
  require(!candidates.empty(), ErrorKind::shape, "score_support: empty candidate pool");
  ScoreTable t;
  t.anchors = supports.anchors();
  t.candidates = candidates.size();
  t.supports = supports.per_anchor();
  t.raw.resize(t.anchors * t.candidates * t.supports);
  for (std::size_t i = 0; i < t.anchors; ++i) {
    const auto& members = supports.members[i];
    require(members.size() == t.supports, ErrorKind::shape, "support size differs across anchors");
    for (std::size_t m = 0; m < t.candidates; ++m)
      for (std::size_t s = 0; s < t.supports; ++s)
        t.raw[(i * t.candidates + m) * t.supports + s] =
            cosine_sim(candidates[m], supports.views[members[s]]);
  }
  return t;
}

inline ScoreTable aggregate(ScoreTable table, Aggregation mode) {
  require(table.supports >= 1, ErrorKind::shape, "aggregate: empty support set");
  table.aggregated.assign(table.anchors * table.candidates, 0.0);
  for (std::size_t i = 0; i < table.anchors; ++i) {
    for (std::size_t m = 0; m < table.candidates; ++m) {
      const double* r = &table.raw[(i * table.candidates + m) * table.supports];
      double v = r[0];
      if (mode == Aggregation::mean) {
        for (std::size_t s = 1; s < table.supports; ++s) v += r[s];
        v /= static_cast<double>(table.supports);
      } else {
        for (std::size_t s = 1; s < table.supports; ++s) v = std::max(v, r[s]);
      }
      table.aggregated[i * table.candidates + m] = v;
    }
  }
  table.mode = mode;
  return table;
}

/// Select false negatives per anchor. When `pairing` is non-empty the pool
/// is the current batch and each anchor's own two views are removed before
/// ranking. Ties in top-k go to the lower candidate index. Returned sets are
/// sorted ascending.
inline FalseNegativeSets screen(const ScoreTable& scores, const ScreeningRule& rule,
                                std::span<const std::size_t> pairing = {}) {
  rule.validate();
  require(scores.mode.has_value() && scores.aggregated.size() == scores.anchors * scores.candidates,
          ErrorKind::shape, "screen: scores are not aggregated");
  const bool batch_pool = !pairing.empty();
  if (batch_pool)
    require(pairing.size() == scores.anchors && scores.candidates == scores.anchors,
            ErrorKind::shape, "screen: batch pool must be anchors x anchors");

  FalseNegativeSets out;
  out.pool = batch_pool ? CandidatePool::current_batch : CandidatePool::memory_bank;
  out.sets.resize(scores.anchors);

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.anchors; ++i) {
    order.clear();
    for (std::size_t m = 0; m < scores.candidates; ++m)
      if (!batch_pool || (m != i && m != pairing[i])) order.push_back(m);

    auto& chosen = out.sets[i];
    if (rule.uses_k()) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.at(i, a) > scores.at(i, b);
      });
      if (order.size() > rule.k) order.resize(rule.k);
    }
    for (std::size_t m : order)
      if (!rule.uses_t() || scores.at(i, m) > rule.t) chosen.push_back(m);
    std::sort(chosen.begin(), chosen.end());
  }
  return out;
}

/// Full detection over the chosen pool. With the memory bank the
/// candidates are batch.pool; an empty bank yields empty sets.
inline FalseNegativeSets detect_false_negatives(const EmbeddingBatch& batch,
                                                const SupportSet& supports, CandidatePool pool,
                                                const ScreeningRule& rule, Aggregation mode) {
  rule.validate();
  require(supports.anchors() == batch.size(), ErrorKind::shape,
          "detect: support set does not cover every anchor");
  if (pool == CandidatePool::memory_bank) {
    if (batch.pool.empty()) return FalseNegativeSets::empty(batch.size(), pool);
    return screen(aggregate(score_support(batch.pool, supports), mode), rule);
  }
  return screen(aggregate(score_support(batch.views, supports), mode), rule, batch.pairing);
}

/// Degenerate support set holding each anchor alone: scoring against the
/// anchor instead of extra views.
inline SupportSet anchor_as_support(const EmbeddingBatch& batch) {
  SupportSet s;
  s.views = batch.views;
  s.members.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) s.members[i] = {i};
  return s;
}

}  // namespace fnc
