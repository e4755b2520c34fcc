#pragma once

// Embedding-level containers shared by the losses and the detector.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "fnc/core_math.hpp"

namespace fnc {

/// 2N unit-norm main-view embeddings plus the positive pairing, and an
/// optional external candidate pool (memory bank) that never receives
/// gradient.
struct EmbeddingBatch {
  std::vector<Vec> views;
  std::vector<std::size_t> pairing;
  std::vector<Vec> pool;

  std::size_t size() const { return views.size(); }
  std::size_t num_images() const { return views.size() / 2; }
  std::size_t dim() const { return views.empty() ? 0 : views.front().size(); }

  /// Views laid out as [a0, b0, a1, b1, ...] with pair(2n) = 2n + 1.
  static EmbeddingBatch adjacent_pairs(std::vector<Vec> views) {
    EmbeddingBatch b;
    b.pairing.resize(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) b.pairing[i] = i ^ 1U;
    b.views = std::move(views);
    return b;
  }
};

/// Index space that false-negative indices refer to. The two spaces are
/// disjoint: a bank index never aliases a batch view.
enum class CandidatePool { current_batch, memory_bank };

struct FalseNegativeSets {
  CandidatePool pool = CandidatePool::current_batch;
  std::vector<std::vector<std::size_t>> sets;  // one per anchor

  static FalseNegativeSets empty(std::size_t anchors,
                                 CandidatePool pool = CandidatePool::current_batch) {
    return {pool, std::vector<std::vector<std::size_t>>(anchors)};
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& s : sets) n += s.size();
    return n;
  }
  bool all_empty() const { return total() == 0; }
};

enum class SupportSource { main, momentum };

/// Extra views per anchor. Anchors that come from the same source image
/// share physical views, so members index into a flat view list.
struct SupportSet {
  std::vector<Vec> views;
  std::vector<std::vector<std::size_t>> members;  // one per anchor
  SupportSource source = SupportSource::main;

  std::size_t anchors() const { return members.size(); }
  std::size_t per_anchor() const { return members.empty() ? 0 : members.front().size(); }

  static SupportSet none(std::size_t anchors) {
    SupportSet s;
    s.members.resize(anchors);
    return s;
  }

  /// One private list of views per anchor.
  static SupportSet per_anchor_lists(const std::vector<std::vector<Vec>>& lists,
                                     SupportSource source = SupportSource::main) {
    SupportSet s;
    s.source = source;
    for (const auto& list : lists) {
      std::vector<std::size_t> idx;
      for (const auto& v : list) {
        idx.push_back(s.views.size());
        s.views.push_back(v);
      }
      s.members.push_back(std::move(idx));
    }
    return s;
  }
};

inline void validate_batch(const EmbeddingBatch& b) {
  require(!b.views.empty(), ErrorKind::empty_batch, "batch has no views");
  require(b.views.size() % 2 == 0, ErrorKind::shape, "batch must hold 2N views");
  require(b.pairing.size() == b.views.size(), ErrorKind::shape,
          "pairing length does not match view count");
  const std::size_t d = b.dim();
  require(d >= 1, ErrorKind::shape, "embeddings must have dimension >= 1");
  for (std::size_t i = 0; i < b.views.size(); ++i) {
    const std::size_t j = b.pairing[i];
    if (j >= b.views.size() || j == i || b.pairing[j] != i)
      fail(ErrorKind::shape, "pairing is not a fixed-point-free involution at index " + std::to_string(i));
    require(b.views[i].size() == d, ErrorKind::shape, "ragged embedding batch");
    if (!is_unit(b.views[i]))
      fail(ErrorKind::degenerate_input, "view " + std::to_string(i) + " is not unit norm");
  }
  for (std::size_t m = 0; m < b.pool.size(); ++m) {
    require(b.pool[m].size() == d, ErrorKind::shape, "pool dimension mismatch");
    if (!is_unit(b.pool[m]))
      fail(ErrorKind::degenerate_input, "pool entry " + std::to_string(m) + " is not unit norm");
  }
}

inline void validate_sets(const EmbeddingBatch& b, const FalseNegativeSets& f) {
  require(f.sets.size() == b.views.size(), ErrorKind::invalid_set,
          "expected one false-negative set per anchor");
  const bool batch_space = f.pool == CandidatePool::current_batch;
  const std::size_t limit = batch_space ? b.views.size() : b.pool.size();
  std::vector<char> seen(limit, 0);
  for (std::size_t i = 0; i < f.sets.size(); ++i) {
    for (std::size_t k : f.sets[i]) {
      if (k >= limit)
        fail(ErrorKind::invalid_set, "anchor " + std::to_string(i) + ": candidate index out of range");
      if (batch_space && (k == i || k == b.pairing[i]))
        fail(ErrorKind::invalid_set, "anchor " + std::to_string(i) + ": set contains the anchor or its positive");
      if (seen[k])
        fail(ErrorKind::invalid_set, "anchor " + std::to_string(i) + ": duplicate candidate index");
      seen[k] = 1;
    }
    for (std::size_t k : f.sets[i]) seen[k] = 0;
  }
}

inline void validate_support(const EmbeddingBatch& b, const SupportSet& s) {
  require(s.members.size() == b.views.size(), ErrorKind::shape,
          "support set must list members for every anchor");
  const std::size_t per = s.per_anchor();
  for (const auto& m : s.members) {
    require(m.size() == per, ErrorKind::shape, "support size differs across anchors");
    for (std::size_t q : m)
      require(q < s.views.size(), ErrorKind::shape, "support member index out of range");
  }
  for (const auto& v : s.views) {
    require(v.size() == b.dim(), ErrorKind::shape, "support view dimension mismatch");
    require(is_unit(v), ErrorKind::degenerate_input, "support view is not unit norm");
  }
}

}  // namespace fnc
