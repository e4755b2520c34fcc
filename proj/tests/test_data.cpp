#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fnc/data.hpp"
#include "fnc/eval.hpp"

using namespace fnc;

namespace {

double nearest_centroid_accuracy(const Dataset& ds) {
  std::vector<Vec> centroid(ds.classes, Vec(ds.dim, 0.0));
  std::vector<double> count(ds.classes, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    for (std::size_t k = 0; k < ds.dim; ++k) centroid[c][k] += ds.points[i][k];
    count[c] += 1.0;
  }
  for (std::size_t c = 0; c < ds.classes; ++c)
    for (double& v : centroid[c]) v /= count[c];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < ds.classes; ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < ds.dim; ++k) d += std::pow(ds.points[i][k] - centroid[c][k], 2);
      if (d < best_d) best_d = d, best = c;
    }
    if (static_cast<int>(best) == ds.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double raw_linear_probe(const Dataset& ds) {
  const ProbeSplit split = stratified_split(ds.labels, 0.8, 3);
  return linear_probe(gather(ds.points, ds.labels, split.train), gather(ds.points, ds.labels, split.test), 200,
                      0.5);
}

const AugmentationSpec kAug{0.3, 0.1, 0.8, 1.2};

}  // namespace

TEST_CASE("gen_clusters", "[data]") {
  const Dataset sharp = gen_clusters({5, 40, 8, 100.0, 1.0, 11});
  CHECK(nearest_centroid_accuracy(sharp) == 1.0);
  CHECK(sharp.size() == 200);

  const Dataset a = gen_clusters({4, 10, 3, 4.0, 1.0, 9});
  const Dataset b = gen_clusters({4, 10, 3, 4.0, 1.0, 9});
  CHECK(a.points == b.points);
  CHECK(a.labels == b.labels);
  CHECK(gen_clusters({4, 10, 3, 4.0, 1.0, 10}).points != a.points);

  const Dataset tiny = gen_clusters({2, 1, 3, 1.0, 0.5, 0});
  REQUIRE(tiny.size() == 2);
  CHECK(tiny.labels[0] != tiny.labels[1]);

  // sigma = 0 puts every point on the sphere of radius spread
  for (const auto& p : gen_clusters({3, 5, 4, 2.5, 0.0, 1}).points)
    CHECK(norm(p) == Catch::Approx(2.5).epsilon(1e-12));

  CHECK_THROWS_AS(gen_clusters({1, 10, 3, 4.0, 1.0, 0}), Error);
  CHECK_THROWS_AS(gen_clusters({3, 0, 3, 4.0, 1.0, 0}), Error);
  CHECK_THROWS_AS(gen_clusters({3, 10, 3, 0.0, 1.0, 0}), Error);
}

TEST_CASE("gen_rings", "[data]") {
  const Dataset r = gen_rings(3, 50, 0.0, 4);
  CHECK(r.dim == 2);
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(norm(r.points[i]) == Catch::Approx(r.labels[i] + 1.0).epsilon(1e-12));
  CHECK(gen_rings(3, 50, 0.05, 4).points == gen_rings(3, 50, 0.05, 4).points);

  // rings defeat a linear read-out of raw coordinates; sharp clusters do not
  const double rings = raw_linear_probe(gen_rings(3, 100, 0.05, 1));
  const double clusters = nearest_centroid_accuracy(gen_clusters({3, 100, 8, 100.0, 1.0, 1}));
  CHECK(clusters == 1.0);
  CHECK(rings < 0.6);

  CHECK_THROWS_AS(gen_rings(1, 10, 0.1, 0), Error);
  CHECK_THROWS_AS(gen_rings(2, 10, -0.1, 0), Error);
}

TEST_CASE("augment", "[data]") {
  const LabeledPoint p{{0.5, -1.0, 2.0}, 3};
  const LabeledPoint same = augment(p, {0.0, 0.0, 1.0, 1.0}, 7);
  CHECK(same.x == p.x);
  CHECK(same.label == 3);

  for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(augment(p, kAug, seed).label == 3);
  CHECK(augment(p, kAug, 1).x != augment(p, kAug, 2).x);
  CHECK(augment(p, kAug, 5).x == augment(p, kAug, 5).x);

  // dropout zeroes roughly the requested fraction
  const LabeledPoint wide{Vec(2000, 1.0), 0};
  const LabeledPoint dropped = augment(wide, {0.0, 0.25, 1.0, 1.0}, 3);
  const auto zeros = std::count(dropped.x.begin(), dropped.x.end(), 0.0);
  CHECK(static_cast<double>(zeros) / 2000.0 == Catch::Approx(0.25).margin(0.04));

  CHECK_THROWS_AS(augment(p, {-1.0, 0.0, 1.0, 1.0}, 0), Error);
  CHECK_THROWS_AS(augment(p, {0.0, 1.0, 1.0, 1.0}, 0), Error);
  CHECK_THROWS_AS(augment(p, {0.0, 0.0, 2.0, 1.0}, 0), Error);
}

TEST_CASE("make_batch", "[data]") {
  const Dataset ds = gen_clusters({4, 10, 3, 4.0, 1.0, 2});

  const LabeledBatch plain = make_batch(ds, 6, 0, kAug, 1);
  CHECK(plain.batch.main_views.size() == 12);
  CHECK(plain.batch.support_views.empty());

  const LabeledBatch lb = make_batch(ds, 8, 3, kAug, 1);
  const RawBatch& b = lb.batch;
  REQUIRE(b.main_views.size() == 16);
  REQUIRE(b.support_views.size() == 24);
  REQUIRE(b.support_groups.size() == 8);
  std::set<std::size_t> sources(lb.labels.sources.begin(), lb.labels.sources.end());
  CHECK(sources.size() == 8);

  std::set<std::size_t> support_seen;
  for (std::size_t n = 0; n < 8; ++n) {
    const int label = ds.labels[lb.labels.sources[n]];
    CHECK(lb.labels.image_labels[n] == label);
    CHECK(lb.labels.view_labels[2 * n] == label);
    CHECK(lb.labels.view_labels[2 * n + 1] == label);
    CHECK(b.pairing[2 * n] == 2 * n + 1);
    CHECK(b.pairing[2 * n + 1] == 2 * n);
    CHECK(b.support_groups[n].size() == 3);
    for (std::size_t q : b.support_groups[n]) {
      CHECK(lb.labels.support_labels[q] == label);
      CHECK(support_seen.insert(q).second);
    }
  }

  const LabeledBatch again = make_batch(ds, 8, 3, kAug, 1);
  CHECK(again.batch.main_views == b.main_views);
  CHECK(again.batch.support_views == b.support_views);
  CHECK(again.labels.sources == lb.labels.sources);
  CHECK(make_batch(ds, 8, 3, kAug, 2).batch.main_views != b.main_views);

  try {
    make_batch(ds, 41, 0, kAug, 0);
    FAIL("oversized batch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("dataset export and import", "[data]") {
  const Dataset ds = gen_clusters({3, 4, 5, 4.0, 1.0, 6});
  const auto path = std::filesystem::temp_directory_path() / "fnc_test_dataset.csv";
  export_dataset(path.string(), ds);
  const Dataset back = import_dataset(path.string());
  CHECK(back.points == ds.points);
  CHECK(back.labels == ds.labels);
  CHECK(back.classes == 3);
  CHECK(back.dim == 5);

  {
    std::ofstream out(path);
    out << "# fnc-dataset C=2 n=1 d_in=2 seed=0\n0,1.0\n";
  }
  CHECK_THROWS_AS(import_dataset(path.string()), Error);
  {
    std::ofstream out(path);
    out << "# fnc-dataset C=x n=1 d_in=2 seed=0\n";
  }
  try {
    import_dataset(path.string());
    FAIL("malformed header accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
  std::filesystem::remove(path);
}
