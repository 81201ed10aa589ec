#pragma once

#include <optional>
#include <span>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/numerics.hpp"

namespace xferlens {

struct SolverOptions {
  double tol = 1e-6;
  int max_iter = 10000;
};

struct LassoModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;  // objective after each sweep
};

/// Minimizes (1/2m)||y - Xw - b||^2 + lambda ||w||_1 by cyclic coordinate
/// descent with an unpenalized intercept.
LassoModel fit_lasso(const Matrix& x, std::span<const double> y, double lambda,
                     const SolverOptions& opt = {});

double lasso_objective(const Matrix& x, std::span<const double> y, const LassoModel& m);

double soft_threshold(double z, double gamma);

struct GroupLassoModel {
  std::vector<TaskId> tasks;  // column order of `weights`
  Matrix weights;             // features x tasks
  std::vector<double> intercepts;
  double lambda_group = 0.0;
  double lambda_l1 = 0.0;
  double q = 2.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;  // objective after each sweep

  std::size_t task_index(const TaskId& t) const;
  double row_norm(std::size_t feature) const;
};

struct GroupLassoOptions {
  double lambda_group = 0.01;
  /// Elementwise l1 weight on the task-specific parameters; 0 by default.
  double lambda_l1 = 0.0;
  double tol = 1e-6;
  int max_iter = 10000;
};

/// Multi-task least squares with an l1/l2 row penalty. Objective:
///   sum_t (1/2m_t)||y_t - X_t phi_t - b_t||^2
///     + lambda_group sum_j ||Phi_j.||_2 + lambda_l1 sum_jt |Phi_jt|
/// Solved by block coordinate descent over feature rows; each row update is
/// a proximal step with the row's largest per-task curvature, which reduces to
/// the closed-form group soft-threshold when the curvatures agree.
GroupLassoModel fit_group_lasso(const std::vector<TaskId>& tasks, const std::vector<Matrix>& xs,
                                const std::vector<std::vector<double>>& ys,
                                const GroupLassoOptions& opt = {});

double group_lasso_objective(const std::vector<Matrix>& xs,
                             const std::vector<std::vector<double>>& ys,
                             const GroupLassoModel& m);

/// Row-gradient of the smooth part at the solution, per feature: the norm of
/// (1/m_t) X_tj^T r_t over tasks. Used for KKT checks.
std::vector<double> group_lasso_row_gradient_norms(const std::vector<Matrix>& xs,
                                                   const std::vector<std::vector<double>>& ys,
                                                   const GroupLassoModel& m);

double predict_linear(const LassoModel& m, std::span<const double> x);
double predict_linear(const GroupLassoModel& m, const TaskId& task, std::span<const double> x);

}  // namespace xferlens
