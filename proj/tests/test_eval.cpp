#include <doctest.h>

#include <cstdlib>

#include "experiments.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/eval.hpp"

using namespace xferlens;
namespace xt = xferlens::testing;

namespace {

const LangId kEn("en");

// One task with the given (target, class, score) rows and constant features.
Dataset small_dataset(const std::vector<std::tuple<std::string, int, double>>& rows,
                      const std::string& task = "A") {
  Dataset ds;
  ds.meta[kEn] = {kEn, 5, 1e9};
  ds.tasks.insert(TaskId(task));
  for (const auto& [target, cls, score] : rows) {
    const LangId t(target);
    FeatureVector fv{kEn, t, {}};
    for (Feature f : kAllFeatures) fv.set(f, 0.5);
    fv.set(Feature::kSize, 6.0);
    fv.set(Feature::kFert, 1.5);
    ds.features[{kEn, t}] = fv;
    ds.meta[t] = {t, cls, 1e6};
    ds.records.push_back({"m", TaskId(task), kEn, t, score});
  }
  return ds;
}

ModelSpec spec_of(ModelKind k, std::uint64_t seed = 0) {
  ModelSpec s;
  s.kind = k;
  s.seed = seed;
  return s;
}

TaskFragment fragment(const std::string& task, double mae, std::size_t targets,
                      Protocol p = Protocol::kLolo) {
  TaskFragment f;
  f.spec = spec_of(ModelKind::kAwt);
  f.protocol = p;
  f.task = TaskId(task);
  f.num_targets = targets;
  f.mae = mae;
  f.folds.push_back({{LangId("de")}, {{kEn, LangId("de"), 0.5, 0.5 + mae, mae}}});
  return f;
}

}  // namespace

TEST_CASE("AWT under LOLO on three targets") {
  const Dataset ds = small_dataset({{"de", 5, 0.2}, {"fr", 5, 0.4}, {"hi", 5, 0.9}});
  const auto f = run_lolo(ds, spec_of(ModelKind::kAwt), TaskId("A"));
  REQUIRE(f.folds.size() == 3);
  // per-fold predictions are the mean of the other two targets
  const double expect = (std::abs(0.2 - 0.65) + std::abs(0.4 - 0.55) + std::abs(0.9 - 0.3)) / 3;
  CHECK(f.mae == doctest::Approx(expect).epsilon(1e-12));
  CHECK(f.mae == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(f.num_targets == 3);
}

TEST_CASE("a perfect predictor has zero LOLO error") {
  const Dataset ds = small_dataset({{"de", 5, 0.5}, {"fr", 5, 0.5}, {"hi", 1, 0.5}});
  CHECK(run_lolo(ds, spec_of(ModelKind::kAwt), TaskId("A")).mae == 0.0);
}

TEST_CASE("AWT under LLRO is the dispersion around the high-resource mean") {
  const Dataset ds =
      small_dataset({{"de", 5, 0.8}, {"fr", 4, 0.6}, {"sw", 1, 0.3}, {"yo", 3, 0.9}});
  const auto f = run_llro(ds, spec_of(ModelKind::kAwt), TaskId("A"));
  REQUIRE(f.folds.size() == 1);
  CHECK(f.folds[0].rows.size() == 2);
  CHECK(f.mae == doctest::Approx((0.4 + 0.2) / 2).epsilon(1e-12));
}

TEST_CASE("LLRO with no low-resource targets fails") {
  const Dataset ds = small_dataset({{"de", 5, 0.8}, {"fr", 4, 0.6}});
  CHECK_THROWS(run_llro(ds, spec_of(ModelKind::kAwt), TaskId("A")));
}

TEST_CASE("aggregate examples") {
  auto rep = aggregate({fragment("b", 0.04, 20), fragment("a", 0.02, 30)});
  CHECK(rep.macro_mae == doctest::Approx(0.03));
  CHECK_FALSE(rep.low_data_mae.has_value());
  CHECK(rep.tasks[0].task == TaskId("a"));

  rep = aggregate({fragment("a", 0.07, 5)});
  CHECK(rep.macro_mae == 0.07);
  CHECK(rep.low_data_mae == 0.07);

  rep = aggregate({fragment("a", 0.02, 10), fragment("b", 0.06, 11)});
  CHECK(rep.low_data_tasks == 1);
  CHECK(rep.low_data_mae == 0.02);

  CHECK_THROWS(aggregate({fragment("a", 0.02, 10), fragment("b", 0.06, 11, Protocol::kLlro)}));
  auto other = fragment("c", 0.1, 3);
  other.spec.kind = ModelKind::kLasso;
  CHECK_THROWS(aggregate({fragment("a", 0.02, 10), other}));
}

TEST_CASE("every fold respects split integrity for every kind") {
  xt::PlantedOptions o;
  o.num_tasks = 3;
  o.num_langs = 8;
  o.small_task_langs = 5;
  const Dataset ds = xt::planted_dataset(o);
  for (ModelKind k : {ModelKind::kAwt, ModelKind::kAat, ModelKind::kLasso, ModelKind::kGroupLasso,
                      ModelKind::kGbt}) {
    for (const auto& t : ds.tasks) {
      const auto f = run_lolo(ds, spec_of(k), t);
      CHECK(f.folds.size() == ds.targets_of(t).size());
      for (const auto& fold : f.folds) {
        REQUIRE(fold.held_out.size() == 1);
        for (const auto& r : fold.rows) {
          CHECK(r.target == fold.held_out[0]);
          CHECK(r.abs_err >= 0.0);
        }
      }
      const auto g = run_llro(ds, spec_of(k), t);
      for (const auto& r : g.folds[0].rows) CHECK(ds.meta.at(r.target).resource_class <= 3);
    }
  }
  for (const auto& split : make_lolo_splits(ds, TaskId("task0")))
    CHECK_NOTHROW(check_split_integrity(ds, split, TaskId("task0")));
}

TEST_CASE("group lasso beats AWT on planted shared-weight data") {
  xt::PlantedOptions o;
  o.num_tasks = 4;
  o.num_langs = 20;
  o.seed = 3;
  const Dataset ds = xt::planted_dataset(o);
  const double gl = run_lolo(ds, spec_of(ModelKind::kGroupLasso), TaskId("task1")).mae;
  const double awt = run_lolo(ds, spec_of(ModelKind::kAwt), TaskId("task1")).mae;
  CHECK(gl < awt);
  const double gl_llro = run_llro(ds, spec_of(ModelKind::kGroupLasso), TaskId("task1")).mae;
  const double awt_llro = run_llro(ds, spec_of(ModelKind::kAwt), TaskId("task1")).mae;
  CHECK(gl_llro < awt_llro);
}

TEST_CASE("reports are deterministic and recomputable") {
  xt::PlantedOptions o;
  o.num_tasks = 2;
  o.num_langs = 8;
  const Dataset ds = xt::planted_dataset(o);
  for (ModelKind k : {ModelKind::kGbt, ModelKind::kCmf, ModelKind::kMaml}) {
    ModelSpec s = spec_of(k, 4);
    if (k == ModelKind::kMaml) s = parse_model_spec("maml:meta_epochs=5", 4);
    const auto a = run_lolo(ds, s, TaskId("task0"));
    const auto b = run_lolo(ds, s, TaskId("task0"));
    CHECK(a == b);
    CHECK(recompute_mae(a) == a.mae);
    RunOptions par;
    par.threads = 3;
    CHECK(run_lolo(ds, s, TaskId("task0"), par) == a);
  }
  std::vector<TaskFragment> frags;
  for (const auto& t : ds.tasks) frags.push_back(run_llro(ds, spec_of(ModelKind::kLasso), t));
  const auto rep = aggregate(frags);
  double macro = 0;
  for (const auto& f : rep.tasks) {
    double s = 0;
    std::size_t n = 0;
    for (const auto& fold : f.folds)
      for (const auto& r : fold.rows) {
        s += std::abs(r.y - r.yhat);
        ++n;
      }
    CHECK(f.mae == doctest::Approx(s / static_cast<double>(n)).epsilon(1e-12));
    macro += f.mae / static_cast<double>(rep.tasks.size());
  }
  CHECK(rep.macro_mae == doctest::Approx(macro).epsilon(1e-12));
}

TEST_CASE("fit failures carry fold context") {
  const Dataset ds = small_dataset({{"de", 5, 0.2}, {"fr", 5, 0.4}});
  try {
    run_lolo(ds, spec_of(ModelKind::kDgpr), TaskId("A"));
    FAIL("expected a FitError");
  } catch (const FitError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dgpr lolo task=A heldout=") != std::string::npos);
  }
}

TEST_CASE("model spec parsing") {
  const auto s = parse_model_spec("lasso:lambda=0.5", 7);
  CHECK(s.kind == ModelKind::kLasso);
  CHECK(s.get("lambda") == 0.5);
  CHECK(s.seed == 7);
  CHECK(format_model_spec(s) == "lasso:lambda=0.5");
  CHECK(format_model_spec(parse_model_spec("gbt", 0)) == "gbt");
  CHECK(parse_model_spec(format_model_spec(s), 7) == s);
  CHECK_THROWS_AS(parse_model_spec("lasso:bogus=1", 0), UsageError);
  CHECK_THROWS_AS(parse_model_spec("nope", 0), UsageError);
  CHECK_THROWS_AS(parse_model_spec("lasso:lambda", 0), UsageError);
  for (ModelKind k : kAllModelKinds) {
    CHECK(parse_model_kind(model_kind_name(k)) == k);
    for (const auto& [key, v] : default_hyperparameters(k)) CHECK(spec_of(k).get(key) == v);
  }
  CHECK(uses_helper_tasks(ModelKind::kMdgpr));
  CHECK_FALSE(uses_helper_tasks(ModelKind::kDgpr));
  CHECK(is_linear(ModelKind::kGroupLasso));
  CHECK_FALSE(is_linear(ModelKind::kGbt));
}

TEST_CASE("report JSON round trip") {
  xt::PlantedOptions o;
  o.num_tasks = 2;
  o.num_langs = 6;
  const Dataset ds = xt::planted_dataset(o);
  std::vector<EvalReport> reps;
  for (Protocol p : {Protocol::kLolo, Protocol::kLlro}) {
    std::vector<TaskFragment> frags;
    for (const auto& t : ds.tasks)
      frags.push_back(p == Protocol::kLolo ? run_lolo(ds, spec_of(ModelKind::kLasso), t)
                                           : run_llro(ds, spec_of(ModelKind::kLasso), t));
    reps.push_back(aggregate(frags));
  }
  reps[0].failures["task9"] = "boom";
  const ReportMeta meta{"abc123", 7, "mmlm"};
  const std::string text = reports_to_json(reps, meta);
  ReportMeta back;
  const auto parsed = reports_from_json(text, &back);
  CHECK(parsed.size() == reps.size());
  CHECK(back.config_hash == "abc123");
  CHECK(back.seed == 7);
  CHECK(reports_to_json(parsed, back) == text);
  for (std::size_t i = 0; i < reps.size(); ++i) {
    CHECK(parsed[i].macro_mae == reps[i].macro_mae);
    CHECK(parsed[i].tasks.size() == reps[i].tasks.size());
  }
  CHECK_THROWS(reports_from_json("{\"schema_version\": 99}"));
  const std::string table = render_table(reps, meta);
  CHECK(table.find("[lolo]") != std::string::npos);
  CHECK(table.find("Average (|T| <= 10)") != std::string::npos);
}

TEST_CASE("helper scaling covers zero to all helpers") {
  xt::PlantedOptions o;
  o.num_tasks = 3;
  o.num_langs = 6;
  const Dataset ds = xt::planted_dataset(o);
  const auto pts = helper_scaling(ds, spec_of(ModelKind::kGroupLasso), TaskId("task0"),
                                  Protocol::kLolo);
  REQUIRE(pts.size() == 3);
  double mx = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(pts[k].num_helpers == k);
    mx = std::max(mx, pts[k].scaled_mae);
  }
  CHECK(mx == 1.0);
  CHECK_THROWS_AS(helper_scaling(ds, spec_of(ModelKind::kLasso), TaskId("task0"), Protocol::kLolo),
                  UsageError);
}

TEST_CASE("thread count from the environment") {
  ::setenv("XFERLENS_THREADS", "4", 1);
  CHECK(threads_from_env() == 4);
  ::setenv("XFERLENS_THREADS", "x", 1);
  CHECK_THROWS_AS(threads_from_env(), UsageError);
  ::unsetenv("XFERLENS_THREADS");
  CHECK(threads_from_env() == 0);
}
