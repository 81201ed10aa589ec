#include <doctest.h>

#include <algorithm>
#include <functional>

#include "support.hpp"
#include "xferlens/baselines.hpp"
#include "xferlens/errors.hpp"

using namespace xferlens;
namespace xt = xferlens::testing;

namespace {

Dataset scores(const std::vector<std::tuple<std::string, std::string, double>>& recs) {
  Dataset ds;
  const LangId en("en");
  for (const auto& [task, target, score] : recs) {
    ds.records.push_back({"m", TaskId(task), en, LangId(target), score});
    ds.tasks.insert(TaskId(task));
  }
  return ds;
}

const LangId kEn("en");

// Evaluates a tree by listing every root-to-leaf path with its constraints
// and picking the one path whose constraints x satisfies.
double path_enumeration(const RegressionTree& t, std::span<const double> x) {
  struct Path {
    std::vector<std::tuple<int, double, bool>> tests;  // feature, threshold, goes left
    double value;
  };
  std::vector<Path> paths;
  std::function<void(int, std::vector<std::tuple<int, double, bool>>)> walk =
      [&](int id, std::vector<std::tuple<int, double, bool>> acc) {
        const TreeNode& n = t.nodes[static_cast<std::size_t>(id)];
        if (n.is_leaf()) {
          paths.push_back({acc, n.value});
          return;
        }
        auto l = acc, r = acc;
        l.emplace_back(n.feature, n.threshold, true);
        r.emplace_back(n.feature, n.threshold, false);
        walk(n.left, l);
        walk(n.right, r);
      };
  walk(0, {});
  int hits = 0;
  double value = 0;
  for (const auto& p : paths) {
    bool ok = true;
    for (const auto& [f, thr, left] : p.tests)
      ok = ok && ((x[static_cast<std::size_t>(f)] <= thr) == left);
    if (ok) {
      ++hits;
      value = p.value;
    }
  }
  REQUIRE(hits == 1);
  return value;
}

}  // namespace

TEST_CASE("AWT examples") {
  const Dataset ds = scores({{"A", "de", 0.8}, {"A", "fr", 0.6}, {"A", "hi", 0.4}});
  CHECK(predict_awt(ds, TaskId("A"), kEn, LangId("de")) == doctest::Approx(0.5));
  const Dataset two = scores({{"A", "aa", 0.2}, {"A", "bb", 0.9}});
  CHECK(predict_awt(two, TaskId("A"), kEn, LangId("aa")) == 0.9);
  // a true holdout averages everything
  CHECK(predict_awt(ds, TaskId("A"), kEn, LangId("sw")) == doctest::Approx(0.6));
  const Dataset one = scores({{"A", "de", 0.8}});
  CHECK_THROWS_AS(predict_awt(one, TaskId("A"), kEn, LangId("de")), Error);
}

TEST_CASE("AWT ignores the query target's own score") {
  Dataset a = scores({{"A", "de", 0.8}, {"A", "fr", 0.6}, {"A", "hi", 0.4}});
  Dataset b = a;
  b.records[0].score = 0.0;
  CHECK(predict_awt(a, TaskId("A"), kEn, LangId("de")) ==
        predict_awt(b, TaskId("A"), kEn, LangId("de")));
  Dataset r = a;
  std::reverse(r.records.begin(), r.records.end());
  CHECK(predict_awt(a, TaskId("A"), kEn, LangId("hi")) ==
        doctest::Approx(predict_awt(r, TaskId("A"), kEn, LangId("hi"))).epsilon(1e-15));
}

TEST_CASE("AAT examples") {
  const Dataset ds = scores({{"A", "fr", 0.1}, {"B", "de", 0.7}, {"C", "de", 0.9}});
  CHECK(predict_aat(ds, TaskId("A"), kEn, LangId("de")) == doctest::Approx(0.8));
  const Dataset one = scores({{"A", "fr", 0.1}, {"B", "de", 0.7}});
  CHECK(predict_aat(one, TaskId("A"), kEn, LangId("de")) == 0.7);
  CHECK_THROWS_AS(predict_aat(one, TaskId("A"), kEn, LangId("sw")), Error);
  // skips the eval task's own record
  const Dataset own = scores({{"A", "de", 0.1}, {"B", "de", 0.7}});
  CHECK(predict_aat(own, TaskId("A"), kEn, LangId("de")) == 0.7);
}

TEST_CASE("GBT on constant targets") {
  const Matrix x = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<double> y{0.4, 0.4, 0.4};
  const auto m = fit_gbt(x, y, {10, 3, 0.3});
  for (const auto& t : m.trees) CHECK(t.nodes.size() == 1);
  CHECK(predict_gbt(m, std::vector<double>{100, -4}) == doctest::Approx(0.4));
}

TEST_CASE("GBT stump on a step function") {
  const Matrix x = Matrix::from_rows({{1}, {2}, {3}, {4}});
  const std::vector<double> y{0, 0, 1, 1};
  const auto m = fit_gbt(x, y, {1, 1, 1.0});
  REQUIRE(m.trees.size() == 1);
  const TreeNode& root = m.trees[0].nodes[0];
  CHECK(root.feature == 0);
  CHECK(root.threshold == 2.5);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(predict_gbt(m, x.row(i)) == doctest::Approx(y[i]).epsilon(1e-15));
}

TEST_CASE("GBT empty ensemble predicts the base score") {
  const Matrix x = Matrix::from_rows({{1}, {2}});
  const auto m = fit_gbt(x, std::vector<double>{1, 3}, {0, 3, 0.3});
  CHECK(m.trees.empty());
  CHECK(predict_gbt(m, std::vector<double>{7}) == 2.0);
  CHECK_THROWS(predict_gbt(m, std::vector<double>{7, 8}));
}

TEST_CASE("GBT training loss never increases") {
  Rng rng(3);
  const Matrix x = xt::random_matrix(20, 4, rng);
  const auto y = xt::random_vector(20, rng);
  const auto m = fit_gbt(x, y, {50, 3, 0.1});
  REQUIRE(m.train_mse.size() == 51);
  for (std::size_t i = 1; i < m.train_mse.size(); ++i)
    CHECK(m.train_mse[i] <= m.train_mse[i - 1] + 1e-15);
  for (const auto& t : m.trees) CHECK(t.depth() <= 3);
}

TEST_CASE("GBT predictions match path enumeration") {
  Rng rng(4);
  const Matrix x = xt::random_matrix(30, 3, rng);
  const auto y = xt::random_vector(30, rng);
  const auto m = fit_gbt(x, y, {8, 4, 0.3});
  for (int q = 0; q < 50; ++q) {
    const auto v = xt::random_vector(3, rng);
    double expect = m.base_score;
    for (const auto& t : m.trees) expect += m.learning_rate * path_enumeration(t, v);
    CHECK(predict_gbt(m, v) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("GBT is invariant to monotone feature transforms") {
  Rng rng(6);
  Matrix x = xt::random_matrix(25, 3, rng);
  const auto y = xt::random_vector(25, rng);
  const auto a = fit_gbt(x, y, {10, 3, 0.3});
  Matrix tx = x;
  for (std::size_t i = 0; i < tx.rows(); ++i) tx(i, 1) = std::exp(2.0 * tx(i, 1));
  const auto b = fit_gbt(tx, y, {10, 3, 0.3});
  for (std::size_t i = 0; i < x.rows(); ++i)
    CHECK(predict_gbt(a, x.row(i)) == doctest::Approx(predict_gbt(b, tx.row(i))).epsilon(1e-12));
}

TEST_CASE("GBT rejects degenerate inputs") {
  CHECK_THROWS(fit_gbt(Matrix(3, 0), std::vector<double>{1, 2, 3}, {}));
  CHECK_THROWS(fit_gbt(Matrix::from_rows({{1}}), std::vector<double>{1}, {}));
}
