#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "xferlens/csv.hpp"
#include "xferlens/eval.hpp"

namespace xferlens {

std::string_view protocol_name(Protocol p) { return p == Protocol::kLolo ? "lolo" : "llro"; }

std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "lolo") return Protocol::kLolo;
  if (s == "llro") return Protocol::kLlro;
  return std::nullopt;
}

int threads_from_env() {
  const char* v = std::getenv("XFERLENS_THREADS");
  if (v == nullptr || *v == '\0') return 0;
  auto n = csv::parse_double(v);
  if (!n || *n < 0 || *n != std::floor(*n))
    throw UsageError("XFERLENS_THREADS must be a non-negative integer");
  return static_cast<int>(*n);
}

namespace {

std::string fold_label(const ModelSpec& spec, Protocol p, const TaskId& task,
                       const std::vector<LangId>& held) {
  std::string s = std::string(model_kind_name(spec.kind)) + " " + std::string(protocol_name(p)) +
                  " task=" + task.str() + " heldout=";
  for (std::size_t i = 0; i < held.size(); ++i) s += (i ? "," : "") + held[i].str();
  return s;
}

FoldResult run_fold(const Dataset& full, const Split& split, const ModelSpec& spec, Protocol p,
                    const TaskId& eval_task, const RunOptions& opt) {
  if (opt.check_integrity) check_split_integrity(full, split, eval_task);
  FoldResult fr;
  fr.held_out = split.held_out;
  try {
    auto model = fit_model(spec, split.train, eval_task);
    for (const auto& r : split.test.records) {
      const double yhat = model->predict(eval_task, split.test.features_of(r.pair()));
      if (!std::isfinite(yhat)) throw NumericalError("non-finite prediction");
      fr.rows.push_back({r.pivot, r.target, r.score, yhat, std::abs(yhat - r.score)});
    }
  } catch (const std::exception& e) {
    throw FitError(fold_label(spec, p, eval_task, split.held_out) + ": " + e.what());
  }
  return fr;
}

// Evaluates splits[i] into out[i]; order of results does not depend on the
// thread count.
std::vector<FoldResult> run_folds(const Dataset& full, const std::vector<Split>& splits,
                                  const ModelSpec& spec, Protocol p, const TaskId& eval_task,
                                  const RunOptions& opt) {
  std::vector<FoldResult> out(splits.size());
  const std::size_t workers =
      std::min<std::size_t>(splits.size(), static_cast<std::size_t>(std::max(1, opt.threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < splits.size(); ++i)
      out[i] = run_fold(full, splits[i], spec, p, eval_task, opt);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(splits.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < splits.size(); i = next++) {
        try {
          out[i] = run_fold(full, splits[i], spec, p, eval_task, opt);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double mean_abs(const std::vector<PredictionRow>& rows) {
  double s = 0.0;
  for (const auto& r : rows) s += r.abs_err;
  return s / static_cast<double>(rows.size());
}

}  // namespace

double recompute_mae(const TaskFragment& f) {
  if (f.folds.empty()) throw Error("fragment has no folds");
  if (f.protocol == Protocol::kLolo) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& fold : f.folds) {
      if (fold.rows.empty()) continue;
      s += mean_abs(fold.rows);
      ++n;
    }
    if (n == 0) throw Error("fragment has no predictions");
    return s / static_cast<double>(n);
  }
  std::vector<PredictionRow> all;
  for (const auto& fold : f.folds) all.insert(all.end(), fold.rows.begin(), fold.rows.end());
  if (all.empty()) throw Error("fragment has no predictions");
  return mean_abs(all);
}

TaskFragment run_lolo(const Dataset& ds, const ModelSpec& spec, const TaskId& eval_task,
                      const RunOptions& opt) {
  TaskFragment f{spec, Protocol::kLolo, eval_task, ds.targets_of(eval_task).size(), {}, 0.0};
  f.folds = run_folds(ds, make_lolo_splits(ds, eval_task), spec, Protocol::kLolo, eval_task, opt);
  f.mae = recompute_mae(f);
  return f;
}

TaskFragment run_llro(const Dataset& ds, const ModelSpec& spec, const TaskId& eval_task,
                      const RunOptions& opt) {
  TaskFragment f{spec, Protocol::kLlro, eval_task, ds.targets_of(eval_task).size(), {}, 0.0};
  std::vector<Split> one{make_llro_split(ds, eval_task)};
  f.folds = run_folds(ds, one, spec, Protocol::kLlro, eval_task, opt);
  f.mae = recompute_mae(f);
  return f;
}

EvalReport aggregate(std::vector<TaskFragment> fragments) {
  EvalReport rep;
  if (fragments.empty()) return rep;
  rep.spec = fragments.front().spec;
  rep.protocol = fragments.front().protocol;
  std::sort(fragments.begin(), fragments.end(),
            [](const TaskFragment& a, const TaskFragment& b) { return a.task < b.task; });
  double total = 0.0, low = 0.0;
  for (const auto& f : fragments) {
    if (!(f.spec == rep.spec) || f.protocol != rep.protocol)
      throw Error("aggregate: fragments from different models or protocols");
    total += f.mae;
    if (f.num_targets <= kLowDataMaxTargets) {
      low += f.mae;
      ++rep.low_data_tasks;
    }
  }
  rep.macro_mae = total / static_cast<double>(fragments.size());
  if (rep.low_data_tasks > 0) rep.low_data_mae = low / static_cast<double>(rep.low_data_tasks);
  rep.tasks = std::move(fragments);
  return rep;
}

std::vector<HelperScalingPoint> helper_scaling(const Dataset& ds, const ModelSpec& spec,
                                               const TaskId& eval_task, Protocol protocol,
                                               const RunOptions& opt) {
  if (!uses_helper_tasks(spec.kind))
    throw UsageError("helper scaling needs a multi-task model, got '" +
                     std::string(model_kind_name(spec.kind)) + "'");
  std::vector<TaskId> helpers;
  for (const auto& t : ds.tasks)
    if (t != eval_task) helpers.push_back(t);
  Rng rng(derive_seed(spec.seed, 0x68656c70));
  rng.shuffle(helpers);

  std::vector<HelperScalingPoint> pts;
  for (std::size_t k = 0; k <= helpers.size(); ++k) {
    std::set<TaskId> keep{eval_task};
    keep.insert(helpers.begin(), helpers.begin() + static_cast<std::ptrdiff_t>(k));
    const Dataset sub = filter_tasks(ds, keep);
    const TaskFragment f = protocol == Protocol::kLolo ? run_lolo(sub, spec, eval_task, opt)
                                                       : run_llro(sub, spec, eval_task, opt);
    pts.push_back({k, f.mae, 0.0});
  }
  double mx = 0.0;
  for (const auto& p : pts) mx = std::max(mx, p.mae);
  for (auto& p : pts) p.scaled_mae = mx > 0.0 ? p.mae / mx : 0.0;
  return pts;
}

}  // namespace xferlens
