#pragma once

// Self-check suite behind `fnc verify`: analytic gradients against central
// differences, plus the exact identities the losses must satisfy.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fnc/fn_detect.hpp"
#include "fnc/gradient_check.hpp"
#include "fnc/losses.hpp"
#include "fnc/model.hpp"

namespace fnc {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // worst error observed, or 0/1 for identities
  double bound = 0.0;
};

inline std::vector<Vec> random_unit_vectors(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec> out(count, Vec(dim));
  for (auto& v : out) {
    for (double& x : v) x = g(rng);
    v = l2_normalize(v);
  }
  return out;
}

/// Random batch-space false-negative sets that respect self-exclusion.
inline FalseNegativeSets random_fn_sets(const EmbeddingBatch& b, std::mt19937_64& rng, double p = 0.3) {
  std::bernoulli_distribution pick(p);
  FalseNegativeSets f = FalseNegativeSets::empty(b.size());
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      if (k != i && k != b.pairing[i] && pick(rng)) f.sets[i].push_back(k);
  return f;
}

/// Worst relative gradient error of each loss over `batches` random problems
/// with N <= 8, d <= 16 and tau cycling through {0.1, 0.5, 1}.
inline std::vector<CheckResult> loss_gradient_checks(std::size_t batches, std::uint64_t seed,
                                                     double bound = 1e-5) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_dist(1, 8), d_dist(2, 16), s_dist(1, 3);
  const double taus[] = {0.1, 0.5, 1.0};
  double worst[4] = {0, 0, 0, 0};
  const double h = 1e-6;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t n = n_dist(rng), d = d_dist(rng);
    const double tau = taus[b % 3];
    EmbeddingBatch batch = EmbeddingBatch::adjacent_pairs(random_unit_vectors(2 * n, d, rng));
    const FalseNegativeSets fns = random_fn_sets(batch, rng);

    auto check = [&](int slot, const BatchLoss& f, const std::vector<Vec>& analytic) {
      worst[slot] = std::max(worst[slot], max_relative_error(analytic, finite_diff_gradient(f, batch, h)));
    };
    check(0, [&](const EmbeddingBatch& x) { return info_nce(x, tau).loss; }, info_nce(batch, tau).grads);
    check(1, [&](const EmbeddingBatch& x) { return elimination_loss(x, fns, tau).loss; },
          elimination_loss(batch, fns, tau).grads);
    check(2, [&](const EmbeddingBatch& x) { return attraction_loss(x, fns, tau).loss; },
          attraction_loss(batch, fns, tau).grads);

    // multicrop: differentiate with respect to main views and support views together
    const std::size_t s = s_dist(rng);
    std::vector<std::vector<Vec>> lists;
    for (std::size_t img = 0; img < n; ++img) lists.push_back(random_unit_vectors(s, d, rng));
    SupportSet support;
    for (const auto& l : lists) support.views.insert(support.views.end(), l.begin(), l.end());
    for (std::size_t i = 0; i < 2 * n; ++i) {
      std::vector<std::size_t> m;
      for (std::size_t q = 0; q < s; ++q) m.push_back((i / 2) * s + q);
      support.members.push_back(m);
    }
    std::vector<Vec> all = batch.views;
    all.insert(all.end(), support.views.begin(), support.views.end());
    auto split_eval = [&](const std::vector<Vec>& pts) {
      EmbeddingBatch bb = batch;
      SupportSet ss = support;
      std::copy(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(2 * n), bb.views.begin());
      std::copy(pts.begin() + static_cast<std::ptrdiff_t>(2 * n), pts.end(), ss.views.begin());
      return multicrop_attraction_loss(bb, ss, fns, tau).loss;
    };
    const LossResult mc = multicrop_attraction_loss(batch, support, fns, tau);
    std::vector<Vec> analytic = mc.grads;
    analytic.insert(analytic.end(), mc.support_grads.begin(), mc.support_grads.end());
    worst[3] = std::max(worst[3], max_relative_error(analytic, finite_diff_gradient(split_eval, all, h)));
  }
  const char* names[] = {"info_nce gradient", "elimination_loss gradient", "attraction_loss gradient",
                         "multicrop_attraction_loss gradient"};
  std::vector<CheckResult> out;
  for (int i = 0; i < 4; ++i) out.push_back({names[i], worst[i] < bound, worst[i], bound});
  return out;
}

/// Loss-to-parameter gradient of a small encoder against central
/// differences on the raw parameters.
inline CheckResult encoder_gradient_check(const std::vector<std::size_t>& sizes, std::uint64_t seed,
                                          double bound = 1e-5) {
  std::mt19937_64 rng(seed);
  MlpParams params = init_params(sizes, seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& b : params.biases)
    for (double& v : b) v = 0.1 * g(rng);
  const std::size_t n = 3;
  std::vector<Vec> inputs(2 * n, Vec(sizes.front()));
  for (auto& x : inputs)
    for (double& v : x) v = g(rng);
  std::vector<Vec> support_inputs(n, Vec(sizes.front()));
  for (auto& x : support_inputs)
    for (double& v : x) v = g(rng);
  const double tau = 0.5;

  auto build = [&](const MlpParams& p, ForwardResult& main_fwd, ForwardResult& sup_fwd, SupportSet& support) {
    main_fwd = forward(p, inputs);
    sup_fwd = forward(p, support_inputs);
    support.views = sup_fwd.embeddings;
    support.members.clear();
    for (std::size_t i = 0; i < 2 * n; ++i) support.members.push_back({i / 2});
    return EmbeddingBatch{main_fwd.embeddings, [&] {
                            std::vector<std::size_t> pr(2 * n);
                            for (std::size_t i = 0; i < 2 * n; ++i) pr[i] = i ^ 1U;
                            return pr;
                          }(), {}};
  };

  FalseNegativeSets fns = FalseNegativeSets::empty(2 * n);
  fns.sets[0] = {2};
  fns.sets[3] = {5};

  auto loss_at = [&](const MlpParams& p) {
    ForwardResult mf, sf;
    SupportSet sup;
    const EmbeddingBatch b = build(p, mf, sf, sup);
    return multicrop_attraction_loss(b, sup, fns, tau).loss;
  };

  ForwardResult mf, sf;
  SupportSet sup;
  const EmbeddingBatch b = build(params, mf, sf, sup);
  const LossResult res = multicrop_attraction_loss(b, sup, fns, tau);
  MlpParams analytic = backward(params, mf.cache, res.grads);
  axpy(analytic, backward(params, sf.cache, res.support_grads), 1.0);

  const double h = 1e-6;
  std::vector<double> numeric;
  MlpParams work = params;
  std::vector<double*> slots;
  work.for_each([&](double& v) { slots.push_back(&v); });
  for (double* slot : slots) {
    const double orig = *slot;
    *slot = orig + h;
    const double up = loss_at(work);
    *slot = orig - h;
    const double down = loss_at(work);
    *slot = orig;
    numeric.push_back((up - down) / (2.0 * h));
  }
  const double err = max_relative_error({analytic.flatten()}, {numeric});
  return {"encoder parameter gradient (" + std::to_string(params.param_count()) + " params)", err < bound,
          err, bound};
}

inline std::vector<CheckResult> identity_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;
  bool reductions = true, dominance = true;
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(8, 6, rng));
    const auto none = FalseNegativeSets::empty(b.size());
    const double base = info_nce(b, 0.5).loss;
    reductions = reductions && elimination_loss(b, none, 0.5).loss == base &&
                 attraction_loss(b, none, 0.5).loss == base &&
                 multicrop_attraction_loss(b, SupportSet::none(b.size()), none, 0.5).loss == base;
    FalseNegativeSets fns = random_fn_sets(b, rng, 0.5);
    if (fns.all_empty()) fns.sets[0] = {2};
    dominance = dominance && elimination_loss(b, fns, 0.5).loss < base;
  }
  out.push_back({"empty-set reductions are exact", reductions, reductions ? 0.0 : 1.0, 0.0});
  out.push_back({"elimination strictly below baseline", dominance, dominance ? 0.0 : 1.0, 0.0});
  return out;
}

}  // namespace fnc
