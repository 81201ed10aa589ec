// Model registry: hyperparameter handling and the adapters that turn every
// learner into a FittedModel trained on a Dataset.

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xferlens/baselines.hpp"
#include "xferlens/csv.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/eval.hpp"
#include "xferlens/factorization.hpp"
#include "xferlens/gp.hpp"
#include "xferlens/meta.hpp"
#include "xferlens/sparse_linear.hpp"

namespace xferlens {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "awt", "aat", "lasso", "gbt", "dgpr", "group-lasso", "cmf", "mdgpr", "maml"};

}  // namespace

std::string_view model_kind_name(ModelKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<ModelKind>(i);
  return std::nullopt;
}

bool uses_helper_tasks(ModelKind k) {
  switch (k) {
    case ModelKind::kAat:
    case ModelKind::kGroupLasso:
    case ModelKind::kCmf:
    case ModelKind::kMdgpr:
    case ModelKind::kMaml:
      return true;
    default:
      return false;
  }
}

bool is_linear(ModelKind k) { return k == ModelKind::kLasso || k == ModelKind::kGroupLasso; }

std::map<std::string, double> default_hyperparameters(ModelKind k) {
  switch (k) {
    case ModelKind::kAwt:
    case ModelKind::kAat:
      return {};
    case ModelKind::kLasso:
      return {{"lambda", 0.01}, {"tol", 1e-6}, {"max_iter", 10000}};
    case ModelKind::kGbt:
      return {{"n_estimators", 100}, {"max_depth", 10}, {"learning_rate", 0.3}};
    case ModelKind::kDgpr:
      return {{"lr", 0.01}, {"epochs", 200}};
    case ModelKind::kGroupLasso:
      return {{"lambda_group", 0.01}, {"lambda_l1", 0.0}, {"tol", 1e-6}, {"max_iter", 10000}};
    case ModelKind::kCmf:
      return {{"latent_dim", 5}, {"reg", 0.1}, {"alpha", 0.5}, {"sweeps", 100}, {"restarts", 3}};
    case ModelKind::kMdgpr:
      return {{"lr", 0.01}, {"epochs", 200}, {"task_correlation", 0.5}};
    case ModelKind::kMaml:
      return {{"inner_steps", 5},
              {"inner_lr", 0.01},
              {"outer_lr", 0.001},
              {"meta_epochs", 500}};
  }
  return {};
}

double ModelSpec::get(const std::string& key) const {
  if (auto it = hyper.find(key); it != hyper.end()) return it->second;
  const auto defaults = default_hyperparameters(kind);
  if (auto it = defaults.find(key); it != defaults.end()) return it->second;
  throw UsageError("model '" + std::string(model_kind_name(kind)) + "' has no hyperparameter '" +
                   key + "'");
}

ModelSpec parse_model_spec(std::string_view text, std::uint64_t seed) {
  ModelSpec spec;
  spec.seed = seed;
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  auto k = parse_model_kind(kind);
  if (!k) throw UsageError("unknown model kind '" + std::string(kind) + "'");
  spec.kind = *k;
  if (colon == std::string_view::npos) return spec;
  const auto defaults = default_hyperparameters(spec.kind);
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto next = rest.find(':');
    const std::string_view item = rest.substr(0, next);
    rest = next == std::string_view::npos ? std::string_view{} : rest.substr(next + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("model option '" + std::string(item) + "' must be key=value");
    const std::string key(item.substr(0, eq));
    if (!defaults.contains(key))
      throw UsageError("model '" + std::string(kind) + "' has no hyperparameter '" + key + "'");
    auto v = csv::parse_double(item.substr(eq + 1));
    if (!v) throw UsageError("model option '" + key + "': not a number");
    spec.hyper[key] = *v;
  }
  return spec;
}

std::string format_model_spec(const ModelSpec& spec) {
  std::string out(model_kind_name(spec.kind));
  const auto defaults = default_hyperparameters(spec.kind);
  for (const auto& [k, v] : spec.hyper) {
    auto d = defaults.find(k);
    if (d != defaults.end() && d->second == v) continue;
    out += ":" + k + "=" + csv::format_double(v);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct TaskRows {
  TaskId task;
  std::vector<FeatureVector> features;
  std::vector<double> y;
};

// Training rows grouped by task, in task order.
std::vector<TaskRows> group_rows(const Dataset& train, const std::optional<TaskId>& only) {
  std::map<TaskId, TaskRows> by_task;
  for (const auto& r : train.records) {
    if (only && r.task != *only) continue;
    auto& tr = by_task[r.task];
    tr.task = r.task;
    tr.features.push_back(train.features_of(r.pair()));
    tr.y.push_back(r.score);
  }
  std::vector<TaskRows> out;
  for (auto& [t, rows] : by_task) out.push_back(std::move(rows));
  return out;
}

std::vector<FeatureVector> pooled(const std::vector<TaskRows>& rows) {
  std::vector<FeatureVector> out;
  for (const auto& r : rows) out.insert(out.end(), r.features.begin(), r.features.end());
  return out;
}

const TaskRows& require_task(const std::vector<TaskRows>& rows, const TaskId& t) {
  for (const auto& r : rows)
    if (r.task == t) return r;
  throw InputError("no training rows for task '" + t.str() + "'");
}

std::vector<double> column_means(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) mean[j] += m(i, j);
  for (auto& v : mean) v /= static_cast<double>(std::max<std::size_t>(1, m.rows()));
  return mean;
}

int as_int(double v) { return static_cast<int>(std::lround(v)); }

class AwtFitted final : public FittedModel {
 public:
  explicit AwtFitted(Dataset train) : train_(std::move(train)) {}
  ModelKind kind() const override { return ModelKind::kAwt; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    return predict_awt(train_, task, fv.pivot, fv.target);
  }

 private:
  Dataset train_;
};

class AatFitted final : public FittedModel {
 public:
  explicit AatFitted(Dataset train) : train_(std::move(train)) {}
  ModelKind kind() const override { return ModelKind::kAat; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    return predict_aat(train_, task, fv.pivot, fv.target);
  }

 private:
  Dataset train_;
};

class LassoFitted final : public FittedModel {
 public:
  LassoFitted(TaskId task, Scaler scaler, LassoModel model, std::vector<double> background)
      : task_(std::move(task)),
        scaler_(std::move(scaler)),
        model_(std::move(model)),
        background_(std::move(background)) {}
  ModelKind kind() const override { return ModelKind::kLasso; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    if (task != task_) throw InputError("lasso model was fitted for task '" + task_.str() + "'");
    return predict_linear(model_, scaler_.transform(fv));
  }
  std::optional<LinearView> linear_view(const TaskId& task) const override {
    if (task != task_) return std::nullopt;
    return LinearView{scaler_, model_.weights, model_.intercept, background_};
  }

 private:
  TaskId task_;
  Scaler scaler_;
  LassoModel model_;
  std::vector<double> background_;
};

class GbtFitted final : public FittedModel {
 public:
  GbtFitted(Scaler scaler, TreeEnsemble model)
      : scaler_(std::move(scaler)), model_(std::move(model)) {}
  ModelKind kind() const override { return ModelKind::kGbt; }
  double predict(const TaskId&, const FeatureVector& fv) const override {
    return predict_gbt(model_, scaler_.impute(fv));
  }

 private:
  Scaler scaler_;
  TreeEnsemble model_;
};

class GpFitted final : public FittedModel {
 public:
  GpFitted(ModelKind kind, Scaler scaler, GpState state)
      : kind_(kind), scaler_(std::move(scaler)), state_(std::move(state)) {}
  ModelKind kind() const override { return kind_; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    return predict_gp(state_, scaler_.transform(fv), task).mean;
  }

 private:
  ModelKind kind_;
  Scaler scaler_;
  GpState state_;
};

class GroupLassoFitted final : public FittedModel {
 public:
  GroupLassoFitted(Scaler scaler, GroupLassoModel model, std::vector<double> background)
      : scaler_(std::move(scaler)), model_(std::move(model)), background_(std::move(background)) {}
  ModelKind kind() const override { return ModelKind::kGroupLasso; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    return predict_linear(model_, task, scaler_.transform(fv));
  }
  std::optional<LinearView> linear_view(const TaskId& task) const override {
    auto it = std::find(model_.tasks.begin(), model_.tasks.end(), task);
    if (it == model_.tasks.end()) return std::nullopt;
    const std::size_t t = static_cast<std::size_t>(it - model_.tasks.begin());
    return LinearView{scaler_, model_.weights.col(t), model_.intercepts[t], background_};
  }

 private:
  Scaler scaler_;
  GroupLassoModel model_;
  std::vector<double> background_;
};

class CmfFitted final : public FittedModel {
 public:
  CmfFitted(Scaler scaler, CmfModel model) : scaler_(std::move(scaler)), model_(std::move(model)) {}
  ModelKind kind() const override { return ModelKind::kCmf; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    const LangPair pair{fv.pivot, fv.target};
    if (model_.pair_index.contains(pair)) return predict_cmf(model_, task, pair);
    return predict_cmf(model_, task, fold_in_pair(model_, scaler_.transform(fv)));
  }

 private:
  Scaler scaler_;
  CmfModel model_;
};

class MamlFitted final : public FittedModel {
 public:
  MamlFitted(TaskId task, Scaler scaler, MlpParams adapted)
      : task_(std::move(task)), scaler_(std::move(scaler)), adapted_(std::move(adapted)) {}
  ModelKind kind() const override { return ModelKind::kMaml; }
  double predict(const TaskId& task, const FeatureVector& fv) const override {
    if (task != task_) throw InputError("maml model was adapted to task '" + task_.str() + "'");
    return predict_mlp_scalar(adapted_, scaler_.transform(fv));
  }

 private:
  TaskId task_;
  Scaler scaler_;
  MlpParams adapted_;
};

GpOptions gp_options(const ModelSpec& spec) {
  GpOptions o;
  o.learning_rate = spec.get("lr");
  o.epochs = as_int(spec.get("epochs"));
  if (spec.kind == ModelKind::kMdgpr) o.init_task_correlation = spec.get("task_correlation");
  return o;
}

}  // namespace

std::unique_ptr<FittedModel> fit_model(const ModelSpec& spec, const Dataset& train,
                                       const TaskId& eval_task) {
  const bool multi = uses_helper_tasks(spec.kind);
  const auto rows = group_rows(train, multi ? std::nullopt : std::optional<TaskId>(eval_task));

  switch (spec.kind) {
    case ModelKind::kAwt: {
      Dataset d = filter_tasks(train, {eval_task});
      return std::make_unique<AwtFitted>(std::move(d));
    }
    case ModelKind::kAat:
      return std::make_unique<AatFitted>(train);

    case ModelKind::kLasso: {
      const TaskRows& tr = require_task(rows, eval_task);
      auto std = standardize(tr.features, {});
      SolverOptions so{spec.get("tol"), as_int(spec.get("max_iter"))};
      LassoModel m = fit_lasso(std.train, tr.y, spec.get("lambda"), so);
      return std::make_unique<LassoFitted>(eval_task, std.scaler, std::move(m),
                                           column_means(std.train));
    }
    case ModelKind::kGbt: {
      const TaskRows& tr = require_task(rows, eval_task);
      const Scaler scaler = Scaler::fit(tr.features);
      Matrix x(tr.features.size(), kNumFeatures);
      for (std::size_t i = 0; i < tr.features.size(); ++i) {
        auto v = scaler.impute(tr.features[i]);
        std::copy(v.begin(), v.end(), x.row(i).begin());
      }
      GbtOptions go{as_int(spec.get("n_estimators")), as_int(spec.get("max_depth")),
                    spec.get("learning_rate")};
      return std::make_unique<GbtFitted>(scaler, fit_gbt(x, tr.y, go, spec.seed));
    }
    case ModelKind::kDgpr: {
      const TaskRows& tr = require_task(rows, eval_task);
      const Scaler scaler = Scaler::fit(tr.features);
      std::vector<GpTaskData> data{{eval_task, scaler.transform(tr.features), tr.y}};
      return std::make_unique<GpFitted>(ModelKind::kDgpr, scaler,
                                        fit_gp(data, false, gp_options(spec), spec.seed));
    }
    case ModelKind::kGroupLasso: {
      require_task(rows, eval_task);
      const Scaler scaler = Scaler::fit(pooled(rows));
      std::vector<TaskId> tasks;
      std::vector<Matrix> xs;
      std::vector<std::vector<double>> ys;
      for (const auto& tr : rows) {
        if (tr.y.size() < 2 && tr.task != eval_task) continue;
        tasks.push_back(tr.task);
        xs.push_back(scaler.transform(tr.features));
        ys.push_back(tr.y);
      }
      GroupLassoOptions go;
      go.lambda_group = spec.get("lambda_group");
      go.lambda_l1 = spec.get("lambda_l1");
      go.tol = spec.get("tol");
      go.max_iter = as_int(spec.get("max_iter"));
      Matrix all(0, 0);
      auto model = fit_group_lasso(tasks, xs, ys, go);
      return std::make_unique<GroupLassoFitted>(scaler, std::move(model),
                                                column_means(scaler.transform(pooled(rows))));
    }
    case ModelKind::kCmf: {
      require_task(rows, eval_task);
      std::vector<TaskId> tasks;
      std::map<LangPair, std::size_t> pair_ids;
      std::vector<LangPair> pairs;
      std::vector<CmfObservation> obs;
      for (const auto& tr : rows) {
        const std::size_t t = tasks.size();
        tasks.push_back(tr.task);
        for (std::size_t i = 0; i < tr.features.size(); ++i) {
          const LangPair p{tr.features[i].pivot, tr.features[i].target};
          auto [it, fresh] = pair_ids.emplace(p, pairs.size());
          if (fresh) pairs.push_back(p);
          obs.push_back({t, it->second, tr.y[i]});
        }
      }
      std::vector<FeatureVector> pair_features;
      for (const auto& p : pairs) pair_features.push_back(train.features_of(p));
      const Scaler scaler = Scaler::fit(pair_features);
      CmfOptions co;
      // the latent dimension cannot exceed the number of tasks or pairs
      co.latent_dim = std::min({as_int(spec.get("latent_dim")), static_cast<int>(tasks.size()),
                                static_cast<int>(pairs.size())});
      co.reg = spec.get("reg");
      co.alpha = spec.get("alpha");
      co.sweeps = as_int(spec.get("sweeps"));
      co.restarts = as_int(spec.get("restarts"));
      return std::make_unique<CmfFitted>(
          scaler, fit_cmf(tasks, pairs, obs, scaler.transform(pair_features), co, spec.seed));
    }
    case ModelKind::kMdgpr: {
      require_task(rows, eval_task);
      const Scaler scaler = Scaler::fit(pooled(rows));
      std::vector<GpTaskData> data;
      for (const auto& tr : rows) {
        if (tr.y.size() < 2 && tr.task != eval_task) continue;
        data.push_back({tr.task, scaler.transform(tr.features), tr.y});
      }
      return std::make_unique<GpFitted>(ModelKind::kMdgpr, scaler,
                                        fit_gp(data, true, gp_options(spec), spec.seed));
    }
    case ModelKind::kMaml: {
      const TaskRows& target = require_task(rows, eval_task);
      const Scaler scaler = Scaler::fit(pooled(rows));
      MamlConfig cfg;
      cfg.inner_steps = as_int(spec.get("inner_steps"));
      cfg.inner_lr = spec.get("inner_lr");
      cfg.outer_lr = spec.get("outer_lr");
      cfg.meta_epochs = as_int(spec.get("meta_epochs"));
      std::vector<RegressionTask> helpers;
      for (const auto& tr : rows)
        if (tr.task != eval_task && tr.y.size() >= 2)
          helpers.push_back({scaler.transform(tr.features), tr.y});
      MlpParams theta;
      if (helpers.empty()) {
        std::vector<std::size_t> sizes{kNumFeatures};
        sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
        sizes.push_back(1);
        theta = init_mlp(sizes, spec.seed);
      } else {
        theta = meta_train(helpers, cfg, spec.seed);
      }
      MlpParams adapted = adapt(theta, scaler.transform(target.features), target.y, cfg);
      return std::make_unique<MamlFitted>(eval_task, scaler, std::move(adapted));
    }
  }
  throw UsageError("unsupported model kind");
}

}  // namespace xferlens
