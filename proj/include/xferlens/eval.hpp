#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/errors.hpp"

namespace xferlens {

enum class ModelKind { kAwt, kAat, kLasso, kGbt, kDgpr, kGroupLasso, kCmf, kMdgpr, kMaml };

inline constexpr std::array<ModelKind, 9> kAllModelKinds = {
    ModelKind::kAwt,        ModelKind::kAat, ModelKind::kLasso, ModelKind::kGbt, ModelKind::kDgpr,
    ModelKind::kGroupLasso, ModelKind::kCmf, ModelKind::kMdgpr, ModelKind::kMaml};

std::string_view model_kind_name(ModelKind k);
std::optional<ModelKind> parse_model_kind(std::string_view name);

/// Kinds that train on helper tasks in addition to the eval task.
bool uses_helper_tasks(ModelKind k);
/// Kinds with a closed-form linear attribution.
bool is_linear(ModelKind k);

struct ModelSpec {
  ModelKind kind = ModelKind::kAwt;
  std::map<std::string, double> hyper;
  std::uint64_t seed = 0;

  double get(const std::string& key) const;  // falls back to the kind's default
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Default hyperparameters of a kind, by name.
std::map<std::string, double> default_hyperparameters(ModelKind k);

/// Parses "kind" or "kind:key=value:key=value". Unknown keys are rejected.
ModelSpec parse_model_spec(std::string_view text, std::uint64_t seed);
/// Canonical "kind[:key=value...]" form (non-default keys only).
std::string format_model_spec(const ModelSpec& spec);

/// Standardized-space view of a fitted linear model for one task.
struct LinearView {
  Scaler scaler;
  std::vector<double> weights;
  double intercept = 0.0;
  /// Mean of the standardized training rows (the attribution background).
  std::vector<double> background;
};

class FittedModel {
 public:
  virtual ~FittedModel() = default;
  virtual ModelKind kind() const = 0;
  virtual double predict(const TaskId& task, const FeatureVector& fv) const = 0;
  virtual std::optional<LinearView> linear_view(const TaskId& /*task*/) const {
    return std::nullopt;
  }
};

/// Fits `spec` for evaluating `eval_task`. Single-task kinds see only the
/// eval task's rows of `train`; the others see every task.
std::unique_ptr<FittedModel> fit_model(const ModelSpec& spec, const Dataset& train,
                                       const TaskId& eval_task);

enum class Protocol { kLolo, kLlro };
std::string_view protocol_name(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view s);

struct PredictionRow {
  LangId pivot;
  LangId target;
  double y = 0.0;
  double yhat = 0.0;
  double abs_err = 0.0;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

struct FoldResult {
  std::vector<LangId> held_out;
  std::vector<PredictionRow> rows;

  friend bool operator==(const FoldResult&, const FoldResult&) = default;
};

/// Results of one (model, protocol, eval task) cell.
struct TaskFragment {
  ModelSpec spec;
  Protocol protocol = Protocol::kLolo;
  TaskId task;
  std::size_t num_targets = 0;  // distinct targets of the task in the full dataset
  std::vector<FoldResult> folds;
  double mae = 0.0;

  friend bool operator==(const TaskFragment&, const TaskFragment&) = default;
};

/// Error raised when a model fails to fit or predict inside a fold.
class FitError : public Error {
 public:
  using Error::Error;
};

struct RunOptions {
  /// Folds evaluated concurrently; 0 or 1 = serial.
  int threads = 0;
  /// Verify split integrity on every fold (leakage, helper retention).
  bool check_integrity = true;
};

/// LOLO: MAE = mean over held-out languages of the per-language MAE.
TaskFragment run_lolo(const Dataset& ds, const ModelSpec& spec, const TaskId& eval_task,
                      const RunOptions& opt = {});
/// LLRO: MAE over all low-resource test records.
TaskFragment run_llro(const Dataset& ds, const ModelSpec& spec, const TaskId& eval_task,
                      const RunOptions& opt = {});

/// Recomputes a fragment's MAE from its per-record errors.
double recompute_mae(const TaskFragment& f);

inline constexpr std::size_t kLowDataMaxTargets = 10;

struct EvalReport {
  ModelSpec spec;
  Protocol protocol = Protocol::kLolo;
  std::vector<TaskFragment> tasks;
  double macro_mae = 0.0;
  std::optional<double> low_data_mae;  // tasks with <= 10 targets
  std::size_t low_data_tasks = 0;
  /// Tasks whose evaluation failed, with the error message.
  std::map<std::string, std::string> failures;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Macro average over tasks plus the low-data average. All fragments must
/// share one model spec and protocol.
EvalReport aggregate(std::vector<TaskFragment> fragments);

/// MAE of a multi-task kind on `eval_task` as the number of helper tasks grows
/// from 0 to all, adding helpers in a seeded random order.
struct HelperScalingPoint {
  std::size_t num_helpers = 0;
  double mae = 0.0;
  double scaled_mae = 0.0;  // divided by the curve's maximum
};
std::vector<HelperScalingPoint> helper_scaling(const Dataset& ds, const ModelSpec& spec,
                                               const TaskId& eval_task, Protocol protocol,
                                               const RunOptions& opt = {});

/// Number of fold threads from XFERLENS_THREADS (unset = 0 = serial).
int threads_from_env();

// Report output -------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

struct ReportMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string mmlm;  // the multilingual model the scores belong to
};

std::string reports_to_json(const std::vector<EvalReport>& reports, const ReportMeta& meta);
std::vector<EvalReport> reports_from_json(const std::string& text, ReportMeta* meta = nullptr);

/// model,protocol,task,heldout,pivot,target,y,yhat,abs_err
void write_predictions_csv(std::ostream& out, const std::vector<EvalReport>& reports,
                           const ReportMeta& meta);
/// Per-task MAE x 100 with Average and Average (|T| <= 10) rows, one column
/// per model, one block per protocol.
std::string render_table(const std::vector<EvalReport>& reports, const ReportMeta& meta);
/// MAE per (protocol, task, model): the bar-chart data.
void write_mae_plot_csv(std::ostream& out, const std::vector<EvalReport>& reports,
                        const ReportMeta& meta);

struct HelperScalingCurve {
  ModelSpec spec;
  Protocol protocol = Protocol::kLolo;
  TaskId task;
  std::vector<HelperScalingPoint> points;
};
void write_helper_scaling_csv(std::ostream& out, const std::vector<HelperScalingCurve>& curves,
                              const ReportMeta& meta);

}  // namespace xferlens
