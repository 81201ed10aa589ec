#include "xferlens/explain.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "xferlens/csv.hpp"
#include "xferlens/errors.hpp"

namespace xferlens {

std::string_view attribution_method_name(AttributionMethod m) {
  return m == AttributionMethod::kLinearShap ? "linear-shap" : "permutation";
}

std::optional<AttributionMethod> parse_attribution_method(std::string_view s) {
  if (s == "linear-shap") return AttributionMethod::kLinearShap;
  if (s == "permutation") return AttributionMethod::kPermutation;
  return std::nullopt;
}

Attribution linear_shap(std::span<const double> w, double intercept, std::span<const double> x,
                        std::span<const double> background) {
  if (w.size() != kNumFeatures || x.size() != kNumFeatures || background.size() != kNumFeatures)
    throw InputError("linear_shap: dimension mismatch");
  Attribution a;
  a.base_value = intercept;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    a.phi[j] = w[j] * (x[j] - background[j]);
    a.base_value += w[j] * background[j];
  }
  return a;
}

Attribution linear_shap(const LassoModel& m, std::span<const double> x,
                        std::span<const double> background) {
  Attribution a = linear_shap(m.weights, m.intercept, x, background);
  a.kind = ModelKind::kLasso;
  return a;
}

Attribution linear_shap(const GroupLassoModel& m, const TaskId& task, std::span<const double> x,
                        std::span<const double> background) {
  const std::size_t t = m.task_index(task);
  Attribution a = linear_shap(m.weights.col(t), m.intercepts[t], x, background);
  a.kind = ModelKind::kGroupLasso;
  a.task = task;
  return a;
}

Attribution linear_shap(const LinearView& v, const FeatureVector& fv) {
  return linear_shap(v.weights, v.intercept, v.scaler.transform(fv), v.background);
}

FeatureValues mean_abs_shap(const LinearView& v, std::span<const FeatureVector> rows) {
  if (rows.empty()) throw InputError("mean_abs_shap: no rows");
  FeatureValues out{};
  for (const auto& fv : rows) {
    const Attribution a = linear_shap(v, fv);
    for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] += std::abs(a.phi[j]);
  }
  for (double& x : out) x /= static_cast<double>(rows.size());
  return out;
}

namespace {

double mae_of(const RowPredictor& predict, std::span<const FeatureVector> rows,
              std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) s += std::abs(predict(rows[i]) - y[i]);
  return s / static_cast<double>(rows.size());
}

}  // namespace

FeatureValues permutation_importance(const RowPredictor& predict,
                                     std::span<const FeatureVector> rows,
                                     std::span<const double> y, int repeats, std::uint64_t seed) {
  if (rows.size() < 2) throw InputError("permutation_importance: need at least 2 rows");
  if (rows.size() != y.size()) throw InputError("permutation_importance: rows/targets mismatch");
  if (repeats < 1) throw InputError("permutation_importance: repeats must be >= 1");
  const double base = mae_of(predict, rows, y);
  FeatureValues out{};
  std::vector<FeatureVector> shuffled(rows.begin(), rows.end());
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      std::vector<std::size_t> perm(rows.size());
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(derive_seed(seed + static_cast<std::uint64_t>(r), j));
      rng.shuffle(perm);
      for (std::size_t i = 0; i < rows.size(); ++i) shuffled[i].values[j] = rows[perm[i]].values[j];
      total += mae_of(predict, shuffled, y) - base;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) shuffled[i].values[j] = rows[i].values[j];
    out[j] = total / repeats;
  }
  return out;
}

std::vector<AttributionRow> explain_tasks(const Dataset& ds, const ModelSpec& spec,
                                          const std::vector<TaskId>& tasks,
                                          AttributionMethod method, int repeats) {
  if (method == AttributionMethod::kLinearShap && !is_linear(spec.kind))
    throw UsageError("linear-shap needs a linear model; use --method permutation for '" +
                     std::string(model_kind_name(spec.kind)) + "'");
  // these kinds fit the same model whatever the eval task is
  const bool shared = spec.kind == ModelKind::kAat || spec.kind == ModelKind::kGroupLasso ||
                      spec.kind == ModelKind::kCmf || spec.kind == ModelKind::kMdgpr;
  std::unique_ptr<FittedModel> model;
  const std::string name = format_model_spec(spec);
  std::vector<AttributionRow> out;
  for (const TaskId& task : tasks) {
    if (!model || !shared) model = fit_model(spec, ds, task);
    const auto recs = ds.records_for(task);
    const auto rows = feature_rows(ds, recs);
    FeatureValues vals{};
    if (method == AttributionMethod::kLinearShap) {
      auto view = model->linear_view(task);
      if (!view) throw Error("no linear view for task '" + task.str() + "'");
      vals = mean_abs_shap(*view, rows);
    } else {
      std::vector<double> y;
      for (const auto& r : recs) y.push_back(r.score);
      const FittedModel& m = *model;
      vals = permutation_importance(
          [&](const FeatureVector& fv) { return m.predict(task, fv); }, rows, y, repeats,
          derive_seed(spec.seed, 0x7065726d));
    }
    for (std::size_t j = 0; j < kNumFeatures; ++j)
      out.push_back({name, task, kAllFeatures[j], vals[j], method});
  }
  return out;
}

void write_attribution_csv(std::ostream& out, const std::vector<AttributionRow>& rows,
                           const ReportMeta& meta) {
  out << "# config_hash=" << meta.config_hash << " seed=" << meta.seed;
  if (!meta.mmlm.empty()) out << " mmlm=" << meta.mmlm;
  out << "\nmodel,task,feature,value,method\n";
  for (const auto& r : rows)
    out << csv::quote(r.model) << ',' << csv::quote(r.task.str()) << ','
        << feature_name(r.feature) << ',' << csv::format_double(r.value) << ','
        << attribution_method_name(r.method) << '\n';
}

}  // namespace xferlens
