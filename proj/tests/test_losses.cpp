#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "fnc/gradient_check.hpp"
#include "fnc/losses.hpp"
#include "fnc/verify.hpp"
#include "oracle.hpp"

using namespace fnc;

namespace {

// z1 = z2 = e1, z3 = z4 = e2
EmbeddingBatch two_pair_batch() { return EmbeddingBatch::adjacent_pairs({{1, 0}, {1, 0}, {0, 1}, {0, 1}}); }

oracle::Problem to_problem(const EmbeddingBatch& b, const FalseNegativeSets& f, double tau) {
  oracle::Problem p;
  p.views = b.views;
  p.pairing = b.pairing;
  p.pool = b.pool;
  p.tau = tau;
  p.fns_in_pool = f.pool == CandidatePool::memory_bank;
  for (const auto& s : f.sets) p.fns.emplace_back(s.begin(), s.end());
  p.support.resize(b.size());
  return p;
}

FalseNegativeSets sets_for(std::size_t n, std::size_t anchor, std::vector<std::size_t> members) {
  FalseNegativeSets f = FalseNegativeSets::empty(n);
  f.sets[anchor] = std::move(members);
  return f;
}

}  // namespace

TEST_CASE("closed-form values on the two-pair batch", "[losses]") {
  const EmbeddingBatch b = two_pair_batch();
  const auto none = FalseNegativeSets::empty(4);

  // frozen from the brute-force evaluator
  const auto p = to_problem(b, none, 1.0);
  CHECK(oracle::info_nce_anchor(p, 0) == Catch::Approx(0.551445).margin(1e-6));
  CHECK(info_nce(b, 1.0).per_anchor[0] == Catch::Approx(0.551445).margin(1e-6));

  const auto f3 = sets_for(4, 0, {2});
  CHECK(oracle::elimination_anchor(to_problem(b, f3, 1.0), 0) == Catch::Approx(0.313262).margin(1e-6));
  CHECK(elimination_loss(b, f3, 1.0).per_anchor[0] == Catch::Approx(0.313262).margin(1e-6));

  const auto f34 = sets_for(4, 0, {2, 3});
  CHECK(elimination_loss(b, f34, 1.0).per_anchor[0] == Catch::Approx(0.0).margin(1e-12));

  CHECK(oracle::attraction_anchor(to_problem(b, f3, 1.0), 0) == Catch::Approx(1.051445).margin(1e-6));
  CHECK(attraction_loss(b, f3, 1.0).per_anchor[0] == Catch::Approx(1.051445).margin(1e-6));

  const SupportSet self = SupportSet::per_anchor_lists({{b.views[0]}, {b.views[1]}, {b.views[2]}, {b.views[3]}});
  CHECK(multicrop_attraction_loss(b, self, none, 1.0).per_anchor[0] == Catch::Approx(0.551445).margin(1e-6));
  CHECK(multicrop_attraction_loss(b, self, f3, 1.0).per_anchor[0] == Catch::Approx(0.884778).margin(1e-6));

  CHECK(info_nce(b, 1e6).per_anchor[0] == Catch::Approx(std::log(3.0)).margin(1e-5));
}

TEST_CASE("losses agree with the brute-force evaluator", "[losses][property]") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> nd(1, 6), dd(2, 9);
  const double taus[] = {0.07, 0.2, 0.5, 1.0, 3.0};
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = nd(rng), d = dd(rng);
    const double tau = taus[trial % 5];
    EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(2 * n, d, rng));
    FalseNegativeSets f = random_fn_sets(b, rng, 0.4);
    if (trial % 3 == 0) {
      b.pool = random_unit_vectors(5, d, rng);
      f = FalseNegativeSets::empty(b.size(), CandidatePool::memory_bank);
      std::bernoulli_distribution pick(0.4);
      for (auto& s : f.sets)
        for (std::size_t m = 0; m < b.pool.size(); ++m)
          if (pick(rng)) s.push_back(m);
    }
    oracle::Problem p = to_problem(b, f, tau);
    std::vector<std::vector<Vec>> lists;
    for (std::size_t i = 0; i < b.size(); ++i) lists.push_back(random_unit_vectors(2, d, rng));
    const SupportSet sup = SupportSet::per_anchor_lists(lists);
    p.support = lists;

    const double tol = 1e-10;
    CHECK(std::abs(info_nce(b, tau).loss - oracle::mean_loss(p, oracle::info_nce_anchor)) < tol);
    CHECK(std::abs(elimination_loss(b, f, tau).loss - oracle::mean_loss(p, oracle::elimination_anchor)) < tol);
    CHECK(std::abs(attraction_loss(b, f, tau).loss - oracle::mean_loss(p, oracle::attraction_anchor)) < tol);
    CHECK(std::abs(multicrop_attraction_loss(b, sup, f, tau).loss - oracle::mean_loss(p, oracle::multicrop_anchor)) <
          tol);
  }
}

TEST_CASE("empty sets reduce to the baseline exactly", "[losses][property]") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(2 + 2 * (trial % 5), 7, rng));
    if (trial % 2) b.pool = random_unit_vectors(4, 7, rng);
    const auto none = FalseNegativeSets::empty(b.size());
    const LossResult base = info_nce(b, 0.3);
    const LossResult e = elimination_loss(b, none, 0.3);
    const LossResult a = attraction_loss(b, none, 0.3);
    const LossResult m = multicrop_attraction_loss(b, SupportSet::none(b.size()), none, 0.3);
    CHECK(e.loss == base.loss);
    CHECK(a.loss == base.loss);
    CHECK(m.loss == base.loss);
    CHECK(e.grads == base.grads);
    CHECK(a.grads == base.grads);
    CHECK(m.grads == base.grads);
  }
}

TEST_CASE("elimination is strictly below the baseline", "[losses][property]") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(8, 5, rng));
    FalseNegativeSets f = random_fn_sets(b, rng, 0.3);
    if (f.all_empty()) f.sets[3] = {0};
    CHECK(elimination_loss(b, f, 0.5).loss < info_nce(b, 0.5).loss);
  }
}

TEST_CASE("batch loss is permutation equivariant", "[losses][property]") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4;
    const EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(2 * n, 6, rng));
    const FalseNegativeSets f = random_fn_sets(b, rng, 0.3);

    std::vector<std::size_t> perm(2 * n);  // new index -> old index
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> inv(2 * n);
    for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;

    EmbeddingBatch pb;
    FalseNegativeSets pf = FalseNegativeSets::empty(2 * n);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      pb.views.push_back(b.views[perm[k]]);
      pb.pairing.push_back(inv[b.pairing[perm[k]]]);
      for (std::size_t m : f.sets[perm[k]]) pf.sets[k].push_back(inv[m]);
      std::sort(pf.sets[k].begin(), pf.sets[k].end());
    }
    CHECK(std::abs(info_nce(pb, 0.2).loss - info_nce(b, 0.2).loss) < 1e-12);
    CHECK(std::abs(elimination_loss(pb, pf, 0.2).loss - elimination_loss(b, f, 0.2).loss) < 1e-12);
    CHECK(std::abs(attraction_loss(pb, pf, 0.2).loss - attraction_loss(b, f, 0.2).loss) < 1e-12);
  }
}

TEST_CASE("analytic gradients match central differences", "[losses][gradient]") {
  for (const auto& c : loss_gradient_checks(24, 77)) {
    INFO(c.name << " " << c.value);
    CHECK(c.passed);
  }
}

TEST_CASE("gradients are tangent to the sphere", "[losses][gradient]") {
  std::mt19937_64 rng(31);
  const EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(6, 4, rng));
  const FalseNegativeSets f = random_fn_sets(b, rng, 0.5);
  const LossResult r = attraction_loss(b, f, 0.2);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(dot(r.grads[i], b.views[i])) < 1e-12);
}

TEST_CASE("memory-bank pool joins the denominator but receives no gradient", "[losses]") {
  std::mt19937_64 rng(2);
  EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(4, 3, rng));
  const double without = info_nce(b, 0.5).loss;
  b.pool = random_unit_vectors(10, 3, rng);
  const LossResult with = info_nce(b, 0.5);
  CHECK(with.loss > without);
  CHECK(with.grads.size() == b.size());

  // gradient still matches differences with the pool held fixed
  const auto numeric =
      finite_diff_gradient([](const EmbeddingBatch& x) { return info_nce(x, 0.5).loss; }, b, 1e-6);
  CHECK(max_relative_error(with.grads, numeric) < 1e-6);
}

TEST_CASE("losses are nonnegative", "[losses][property]") {
  // every attracted numerator also sits in the denominator
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(6, 3, rng));
    const FalseNegativeSets f = random_fn_sets(b, rng, 0.4);
    CHECK(attraction_loss(b, f, 0.1).loss >= 0.0);
    CHECK(elimination_loss(b, f, 0.1).loss >= 0.0);
    CHECK(info_nce(b, 0.1).loss >= 0.0);
  }
}

TEST_CASE("infinite temperature limit", "[losses]") {
  std::mt19937_64 rng(6);
  for (std::size_t n = 1; n <= 16; ++n) {
    const EmbeddingBatch b = EmbeddingBatch::adjacent_pairs(random_unit_vectors(2 * n, 5, rng));
    CHECK(std::abs(info_nce(b, 1e6).loss - std::log(2.0 * static_cast<double>(n) - 1.0)) < 1e-4);
  }
}

TEST_CASE("loss error paths", "[losses][errors]") {
  const EmbeddingBatch b = two_pair_batch();
  const auto kind = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::invariant;
  };

  CHECK(kind([&] { info_nce(b, 0.0); }) == ErrorKind::config);
  CHECK(kind([&] { info_nce(b, -1.0); }) == ErrorKind::config);
  CHECK(kind([&] { info_nce(EmbeddingBatch{}, 1.0); }) == ErrorKind::empty_batch);

  EmbeddingBatch not_unit = b;
  not_unit.views[0] = {2.0, 0.0};
  CHECK(kind([&] { info_nce(not_unit, 1.0); }) == ErrorKind::degenerate_input);

  EmbeddingBatch bad_pair = b;
  bad_pair.pairing[0] = 0;
  CHECK(kind([&] { info_nce(bad_pair, 1.0); }) == ErrorKind::shape);

  CHECK(kind([&] { elimination_loss(b, sets_for(4, 0, {0}), 1.0); }) == ErrorKind::invalid_set);
  CHECK(kind([&] { elimination_loss(b, sets_for(4, 0, {1}), 1.0); }) == ErrorKind::invalid_set);
  CHECK(kind([&] { elimination_loss(b, sets_for(4, 0, {9}), 1.0); }) == ErrorKind::invalid_set);
  CHECK(kind([&] { attraction_loss(b, sets_for(4, 0, {2, 2}), 1.0); }) == ErrorKind::invalid_set);
  CHECK(kind([&] { attraction_loss(b, FalseNegativeSets::empty(3), 1.0); }) == ErrorKind::invalid_set);
}
