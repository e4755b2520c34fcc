#pragma once

// Contrastive objectives with analytic gradients.
//
// All four losses share one kernel. For anchor i the denominator runs over
// every other main view k != i (the positive included) and over the external
// pool, if any:
//
//   D_i = log sum_k exp(sim(z_i, z_k) / tau)
//   l_i = -(1 / |A_i|) sum_{p in A_i} (sim(z_i, z_p) / tau - D_i)
//
// info_nce:     A_i = {pair(i)}
// elimination:  A_i = {pair(i)}, denominator drops k in F_i
// attraction:   A_i = {pair(i)} + F_i
// multicrop:    A_i = {pair(i)} + S_i + F_i, support views never enter D_i
//
// The batch loss is the mean of l_i over the 2N anchors. Gradients are taken
// through the cosine similarity, so they are tangent to the unit sphere at
// every embedding. Pool entries are constants and receive no gradient.

#include <cmath>
#include <cstddef>
#include <vector>

#include "fnc/batch.hpp"
#include "fnc/core_math.hpp"

namespace fnc {

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_anchor;
  std::vector<Vec> grads;          // one per main view
  std::vector<Vec> support_grads;  // one per support view; empty unless multicrop
};

namespace detail {

enum class FnUse { none, eliminate, attract };

struct Operand {
  std::span<const double> v;
  double norm;
};

// out += w * d cos(u, v) / du
inline void add_cos_grad(std::span<double> out, Operand u, Operand v, double cos, double w) {
  const double a = w / (u.norm * v.norm);
  const double b = w * cos / (u.norm * u.norm);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += a * v.v[c] - b * u.v[c];
}

inline void check_tau(double tau) {
  require(std::isfinite(tau) && tau > 0.0, ErrorKind::config, "temperature must be > 0");
}

inline LossResult contrastive_kernel(const EmbeddingBatch& b, const FalseNegativeSets* fns,
                                     FnUse use, const SupportSet* support, double tau) {
  check_tau(tau);
  validate_batch(b);
  if (fns != nullptr) validate_sets(b, *fns);
  if (support != nullptr) validate_support(b, *support);

  const std::size_t n = b.views.size();
  const std::size_t m = b.pool.size();
  const std::size_t d = b.dim();
  const bool fn_in_pool = fns != nullptr && fns->pool == CandidatePool::memory_bank;
  const std::size_t sv = support != nullptr ? support->views.size() : 0;

  std::vector<double> view_norm(n), pool_norm(m), supp_norm(sv);
  for (std::size_t k = 0; k < n; ++k) view_norm[k] = norm(b.views[k]);
  for (std::size_t k = 0; k < m; ++k) pool_norm[k] = norm(b.pool[k]);
  for (std::size_t k = 0; k < sv; ++k) supp_norm[k] = norm(support->views[k]);

  const Matrix s_vv = sim_matrix(b.views, b.views);
  const Matrix s_vp = sim_matrix(b.views, b.pool);
  Matrix s_vs;
  if (sv > 0) s_vs = sim_matrix(b.views, support->views);

  LossResult out;
  out.per_anchor.assign(n, 0.0);
  out.grads.assign(n, Vec(d, 0.0));
  if (sv > 0) out.support_grads.assign(sv, Vec(d, 0.0));

  const double inv_anchors = 1.0 / static_cast<double>(n);

  std::vector<char> drop_view(n), drop_pool(m);
  std::vector<double> logits;
  std::vector<double> coef_view(n), coef_pool(m);
  logits.reserve(n + m);

  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t> empty;
    const auto& fi = fns != nullptr ? fns->sets[i] : empty;
    std::fill(drop_view.begin(), drop_view.end(), 0);
    std::fill(drop_pool.begin(), drop_pool.end(), 0);
    if (use == FnUse::eliminate)
      for (std::size_t f : fi) (fn_in_pool ? drop_pool : drop_view)[f] = 1;

    logits.clear();
    for (std::size_t k = 0; k < n; ++k)
      if (k != i && !drop_view[k]) logits.push_back(s_vv(i, k) / tau);
    for (std::size_t k = 0; k < m; ++k)
      if (!drop_pool[k]) logits.push_back(s_vp(i, k) / tau);
    const double log_denom = log_sum_exp(logits);

    // Attracted set: positive, then support views, then false negatives.
    const std::size_t j = b.pairing[i];
    const std::size_t n_support = support != nullptr ? support->members[i].size() : 0;
    const std::size_t n_fn = use == FnUse::attract ? fi.size() : 0;
    const double count = static_cast<double>(1 + n_support + n_fn);

    double acc = 0.0;
    acc += s_vv(i, j) / tau - log_denom;
    for (std::size_t q = 0; q < n_support; ++q)
      acc += s_vs(i, support->members[i][q]) / tau - log_denom;
    for (std::size_t t = 0; t < n_fn; ++t) {
      const std::size_t f = fi[t];
      acc += (fn_in_pool ? s_vp(i, f) : s_vv(i, f)) / tau - log_denom;
    }
    out.per_anchor[i] = -acc / count;

    // dl_i/dlogit: softmax weight on denominator terms minus 1/|A_i| on
    // attracted terms.
    for (std::size_t k = 0; k < n; ++k)
      coef_view[k] = (k != i && !drop_view[k]) ? std::exp(s_vv(i, k) / tau - log_denom) : 0.0;
    for (std::size_t k = 0; k < m; ++k)
      coef_pool[k] = !drop_pool[k] ? std::exp(s_vp(i, k) / tau - log_denom) : 0.0;
    const double pull = 1.0 / count;
    coef_view[j] -= pull;
    for (std::size_t t = 0; t < n_fn; ++t) (fn_in_pool ? coef_pool : coef_view)[fi[t]] -= pull;

    const double scale = inv_anchors / tau;
    const Operand zi{b.views[i], view_norm[i]};
    for (std::size_t k = 0; k < n; ++k) {
      if (coef_view[k] == 0.0) continue;
      const Operand zk{b.views[k], view_norm[k]};
      add_cos_grad(out.grads[i], zi, zk, s_vv(i, k), scale * coef_view[k]);
      add_cos_grad(out.grads[k], zk, zi, s_vv(i, k), scale * coef_view[k]);
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (coef_pool[k] == 0.0) continue;
      add_cos_grad(out.grads[i], zi, {b.pool[k], pool_norm[k]}, s_vp(i, k), scale * coef_pool[k]);
    }
    for (std::size_t q = 0; q < n_support; ++q) {
      const std::size_t sq = support->members[i][q];
      const Operand zs{support->views[sq], supp_norm[sq]};
      add_cos_grad(out.grads[i], zi, zs, s_vs(i, sq), -scale * pull);
      add_cos_grad(out.support_grads[sq], zs, zi, s_vs(i, sq), -scale * pull);
    }
  }

  double total = 0.0;
  for (double l : out.per_anchor) total += l;
  out.loss = total * inv_anchors;
  return out;
}

}  // namespace detail

inline LossResult info_nce(const EmbeddingBatch& batch, double tau) {
  return detail::contrastive_kernel(batch, nullptr, detail::FnUse::none, nullptr, tau);
}

inline LossResult elimination_loss(const EmbeddingBatch& batch, const FalseNegativeSets& fns,
                                   double tau) {
  return detail::contrastive_kernel(batch, &fns, detail::FnUse::eliminate, nullptr, tau);
}

inline LossResult attraction_loss(const EmbeddingBatch& batch, const FalseNegativeSets& fns,
                                  double tau) {
  return detail::contrastive_kernel(batch, &fns, detail::FnUse::attract, nullptr, tau);
}

/// Attraction with the support views added as extra positives. The
/// attracted set is weighted uniformly; the denominator is unchanged.
inline LossResult multicrop_attraction_loss(const EmbeddingBatch& batch, const SupportSet& support,
                                            const FalseNegativeSets& fns, double tau) {
  return detail::contrastive_kernel(batch, &fns, detail::FnUse::attract, &support, tau);
}

}  // namespace fnc
