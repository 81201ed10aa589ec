#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/eval.hpp"
#include "xferlens/sparse_linear.hpp"

namespace xferlens {

enum class AttributionMethod { kLinearShap, kPermutation };
std::string_view attribution_method_name(AttributionMethod m);
std::optional<AttributionMethod> parse_attribution_method(std::string_view s);

using FeatureValues = std::array<double, kNumFeatures>;

struct Attribution {
  ModelKind kind = ModelKind::kLasso;
  TaskId task;
  FeatureValues phi{};
  double base_value = 0.0;
  AttributionMethod method = AttributionMethod::kLinearShap;
};

/// phi_j = w_j (x_j - bg_j), base = w'bg + b. x and bg are in the model's
/// (standardized) input space.
Attribution linear_shap(std::span<const double> w, double intercept, std::span<const double> x,
                        std::span<const double> background);
Attribution linear_shap(const LassoModel& m, std::span<const double> x,
                        std::span<const double> background);
Attribution linear_shap(const GroupLassoModel& m, const TaskId& task, std::span<const double> x,
                        std::span<const double> background);
/// Raw feature vector, standardized with the view's scaler.
Attribution linear_shap(const LinearView& v, const FeatureVector& fv);

/// Mean |phi_j| over rows.
FeatureValues mean_abs_shap(const LinearView& v, std::span<const FeatureVector> rows);

using RowPredictor = std::function<double(const FeatureVector&)>;

/// Increase in MAE when one feature column is shuffled across rows, averaged
/// over `repeats` permutations. Repeat r of feature j uses
/// derive_seed(seed + r, j), so repeats compose.
FeatureValues permutation_importance(const RowPredictor& predict,
                                     std::span<const FeatureVector> rows,
                                     std::span<const double> y, int repeats, std::uint64_t seed);

struct AttributionRow {
  std::string model;
  TaskId task;
  Feature feature = Feature::kOsw;
  double value = 0.0;
  AttributionMethod method = AttributionMethod::kLinearShap;
};

/// Fits `spec` on all of `ds` and computes the per-(task, feature) statistic:
/// mean |phi| for linear-shap, permutation importance otherwise. Throws
/// UsageError when linear-shap is requested for a non-linear kind.
std::vector<AttributionRow> explain_tasks(const Dataset& ds, const ModelSpec& spec,
                                          const std::vector<TaskId>& tasks,
                                          AttributionMethod method, int repeats = 5);

/// model,task,feature,value,method
void write_attribution_csv(std::ostream& out, const std::vector<AttributionRow>& rows,
                           const ReportMeta& meta);

}  // namespace xferlens
