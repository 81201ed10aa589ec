#include <doctest.h>

#include <sstream>

#include "experiments.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/explain.hpp"

using namespace xferlens;
namespace xt = xferlens::testing;

namespace {

std::vector<FeatureVector> rows_of(const Dataset& ds, const TaskId& t) {
  const auto recs = ds.records_for(t);
  return feature_rows(ds, recs);
}

}  // namespace

TEST_CASE("linear SHAP examples") {
  const std::vector<double> w{2, 0, -1, 0, 0, 0, 0, 0, 0}, x{1, 5, 3, 0, 0, 0, 0, 0, 0},
      bg{0, 1, 1, 0, 0, 0, 0, 0, 0};
  const auto a = linear_shap(w, 0.5, x, bg);
  CHECK(a.phi[0] == 2.0);
  CHECK(a.phi[1] == 0.0);
  CHECK(a.phi[2] == -2.0);
  CHECK(a.base_value == doctest::Approx(-0.5));
  const auto at_bg = linear_shap(w, 0.5, bg, bg);
  for (double v : at_bg.phi) CHECK(v == 0.0);
  CHECK_THROWS_AS(linear_shap(w, 0.0, std::vector<double>{1}, bg), InputError);
}

TEST_CASE("linear SHAP is locally accurate") {
  Rng rng(1);
  LassoModel m;
  m.weights = xt::random_vector(kNumFeatures, rng);
  m.intercept = rng.normal();
  const auto bg = xt::random_vector(kNumFeatures, rng);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = xt::random_vector(kNumFeatures, rng);
    const auto a = linear_shap(m, x, bg);
    double sum = a.base_value;
    for (double v : a.phi) sum += v;
    worst = std::max(worst, std::abs(sum - predict_linear(m, x)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("linear SHAP through a fitted view") {
  xt::PlantedOptions o;
  o.num_tasks = 2;
  o.num_langs = 12;
  const Dataset ds = xt::planted_dataset(o);
  for (const char* kind : {"lasso", "group-lasso"}) {
    const auto model = fit_model(parse_model_spec(kind, 0), ds, TaskId("task1"));
    const auto view = model->linear_view(TaskId("task1"));
    REQUIRE(view.has_value());
    const auto rows = rows_of(ds, TaskId("task1"));
    for (const auto& fv : rows) {
      const auto a = linear_shap(*view, fv);
      double sum = a.base_value;
      for (double v : a.phi) sum += v;
      CHECK(sum == doctest::Approx(model->predict(TaskId("task1"), fv)).epsilon(1e-10));
    }
    const auto mabs = mean_abs_shap(*view, rows);
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      CHECK(mabs[j] >= 0.0);
      if (view->weights[j] == 0.0) CHECK(mabs[j] == 0.0);
    }
  }
  const auto gbt = fit_model(parse_model_spec("gbt", 0), ds, TaskId("task1"));
  CHECK_FALSE(gbt->linear_view(TaskId("task1")).has_value());
}

TEST_CASE("permutation importance properties") {
  xt::PlantedOptions o;
  o.num_tasks = 1;
  o.num_langs = 30;
  const Dataset ds = xt::planted_dataset(o);
  const auto rows = rows_of(ds, TaskId("task0"));
  std::vector<double> y;
  for (const auto& fv : rows) y.push_back(*fv.get(Feature::kOsw) * 2.0);
  const RowPredictor pred = [](const FeatureVector& fv) { return *fv.get(Feature::kOsw) * 2.0; };
  const auto imp = permutation_importance(pred, rows, y, 5, 3);
  CHECK(imp[index_of(Feature::kOsw)] > 0.1);
  for (Feature f : kAllFeatures)
    if (f != Feature::kOsw) CHECK(imp[index_of(f)] == 0.0);
  CHECK(permutation_importance(pred, rows, y, 5, 3) == imp);

  // five repeats are the average of repeats {seed..seed+2} and {seed+3, seed+4}
  const auto first = permutation_importance(pred, rows, y, 3, 3);
  const auto r3 = permutation_importance(pred, rows, y, 1, 6);
  const auto r4 = permutation_importance(pred, rows, y, 1, 7);
  for (std::size_t j = 0; j < kNumFeatures; ++j)
    CHECK(imp[j] == doctest::Approx((3 * first[j] + r3[j] + r4[j]) / 5).epsilon(1e-12));

  CHECK_THROWS(permutation_importance(pred, rows, y, 0, 3));
  CHECK_THROWS(permutation_importance(pred, {}, {}, 5, 3));
}

TEST_CASE("explain_tasks") {
  xt::PlantedOptions o;
  o.num_tasks = 2;
  o.num_langs = 10;
  const Dataset ds = xt::planted_dataset(o);
  const std::vector<TaskId> tasks{TaskId("task0"), TaskId("task1")};
  const auto shap = explain_tasks(ds, parse_model_spec("group-lasso", 0), tasks,
                                  AttributionMethod::kLinearShap);
  CHECK(shap.size() == 2 * kNumFeatures);
  for (const auto& r : shap) {
    CHECK(r.value >= 0.0);
    CHECK(r.method == AttributionMethod::kLinearShap);
  }
  CHECK_THROWS_AS(explain_tasks(ds, parse_model_spec("gbt", 0), tasks,
                                AttributionMethod::kLinearShap),
                  UsageError);
  const auto perm = explain_tasks(ds, parse_model_spec("gbt:n_estimators=10", 0), tasks,
                                  AttributionMethod::kPermutation, 2);
  CHECK(perm.size() == 2 * kNumFeatures);
  CHECK(explain_tasks(ds, parse_model_spec("gbt:n_estimators=10", 0), tasks,
                      AttributionMethod::kPermutation, 2)
            .front()
            .value == perm.front().value);
  std::ostringstream csv;
  write_attribution_csv(csv, perm, {"h", 1, "mmlm"});
  CHECK(csv.str().find("model,task,feature,value,method") != std::string::npos);
  CHECK(parse_attribution_method("permutation") == AttributionMethod::kPermutation);
  CHECK_FALSE(parse_attribution_method("lime").has_value());
}
