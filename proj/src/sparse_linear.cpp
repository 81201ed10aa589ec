#include "xferlens/sparse_linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "xferlens/errors.hpp"

namespace xferlens {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

namespace {

void require_finite(const Matrix& x, std::span<const double> y, const char* who) {
  if (!x.all_finite() || !std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); }))
    throw InputError(std::string(who) + ": non-finite input");
}

// Column-centered copy of x plus the column means.
struct Centered {
  Matrix x;
  std::vector<double> col_mean;
  std::vector<double> y;
  double y_mean = 0.0;
};

Centered center(const Matrix& x, std::span<const double> y) {
  Centered c{x, std::vector<double>(x.cols(), 0.0), std::vector<double>(y.begin(), y.end()), 0.0};
  const double m = static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) c.col_mean[j] += x(i, j);
  for (auto& v : c.col_mean) v /= m;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) c.x(i, j) -= c.col_mean[j];
  c.y_mean = std::accumulate(y.begin(), y.end(), 0.0) / m;
  for (auto& v : c.y) v -= c.y_mean;
  return c;
}

double column_dot(const Matrix& x, std::size_t j, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += x(i, j) * v[i];
  return s;
}

void axpy_column(const Matrix& x, std::size_t j, double alpha, std::span<double> v) {
  if (alpha == 0.0) return;
  for (std::size_t i = 0; i < x.rows(); ++i) v[i] += alpha * x(i, j);
}

}  // namespace

LassoModel fit_lasso(const Matrix& x, std::span<const double> y, double lambda,
                     const SolverOptions& opt) {
  if (x.rows() != y.size()) throw InputError("fit_lasso: rows(x) != len(y)");
  if (x.rows() < 2) throw InputError("fit_lasso: need at least 2 samples");
  if (!(lambda >= 0.0)) throw std::invalid_argument("fit_lasso: lambda must be >= 0");
  require_finite(x, y, "fit_lasso");

  const Centered c = center(x, y);
  const std::size_t n = x.cols();
  const double m = static_cast<double>(x.rows());
  std::vector<double> curv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += c.x(i, j) * c.x(i, j);
    curv[j] = s / m;
  }

  LassoModel model;
  model.lambda = lambda;
  model.weights.assign(n, 0.0);
  std::vector<double> r = c.y;
  for (int it = 0; it < opt.max_iter; ++it) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double old = model.weights[j];
      double w = 0.0;
      if (curv[j] > 0.0) {
        const double rho = column_dot(c.x, j, r) / m + curv[j] * old;
        w = soft_threshold(rho, lambda) / curv[j];
      }
      if (w != old) {
        axpy_column(c.x, j, old - w, r);
        model.weights[j] = w;
        max_change = std::max(max_change, std::abs(w - old));
      }
    }
    model.iterations = it + 1;
    model.intercept = c.y_mean - dot(c.col_mean, model.weights);
    model.objective_trace.push_back(lasso_objective(x, y, model));
    if (max_change < opt.tol) {
      model.converged = true;
      break;
    }
  }
  model.intercept = c.y_mean - dot(c.col_mean, model.weights);
  return model;
}

double lasso_objective(const Matrix& x, std::span<const double> y, const LassoModel& m) {
  double ss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double r = y[i] - dot(x.row(i), m.weights) - m.intercept;
    ss += r * r;
  }
  double l1 = 0.0;
  for (double w : m.weights) l1 += std::abs(w);
  return ss / (2.0 * static_cast<double>(x.rows())) + m.lambda * l1;
}

// ---------------------------------------------------------------------------

std::size_t GroupLassoModel::task_index(const TaskId& t) const {
  auto it = std::find(tasks.begin(), tasks.end(), t);
  if (it == tasks.end()) throw InputError("unknown task '" + t.str() + "'");
  return static_cast<std::size_t>(it - tasks.begin());
}

double GroupLassoModel::row_norm(std::size_t feature) const {
  return std::sqrt(squared_norm(weights.row(feature)));
}

GroupLassoModel fit_group_lasso(const std::vector<TaskId>& tasks, const std::vector<Matrix>& xs,
                                const std::vector<std::vector<double>>& ys,
                                const GroupLassoOptions& opt) {
  const std::size_t nt = xs.size();
  if (nt == 0 || ys.size() != nt || tasks.size() != nt)
    throw InputError("fit_group_lasso: need matching tasks, xs and ys");
  const std::size_t n = xs[0].cols();
  for (std::size_t t = 0; t < nt; ++t) {
    if (xs[t].cols() != n) throw InputError("fit_group_lasso: inconsistent feature dimension");
    if (xs[t].rows() != ys[t].size())
      throw InputError("fit_group_lasso: rows(x) != len(y) for task '" + tasks[t].str() + "'");
    if (xs[t].rows() < 2)
      throw InputError("fit_group_lasso: task '" + tasks[t].str() + "' has fewer than 2 samples");
    require_finite(xs[t], ys[t], "fit_group_lasso");
  }
  if (!(opt.lambda_group >= 0.0) || !(opt.lambda_l1 >= 0.0))
    throw std::invalid_argument("fit_group_lasso: penalties must be >= 0");

  std::vector<Centered> c;
  c.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) c.push_back(center(xs[t], ys[t]));

  // curv(j, t) = ||x_tj||^2 / m_t for centered columns
  Matrix curv(n, nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const double m = static_cast<double>(xs[t].rows());
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < c[t].x.rows(); ++i) s += c[t].x(i, j) * c[t].x(i, j);
      curv(j, t) = s / m;
    }
  }

  GroupLassoModel model;
  model.tasks = tasks;
  model.weights = Matrix(n, nt);
  model.intercepts.assign(nt, 0.0);
  model.lambda_group = opt.lambda_group;
  model.lambda_l1 = opt.lambda_l1;

  std::vector<std::vector<double>> r(nt);
  for (std::size_t t = 0; t < nt; ++t) r[t] = c[t].y;

  auto update_intercepts = [&] {
    for (std::size_t t = 0; t < nt; ++t) {
      double s = c[t].y_mean;
      for (std::size_t j = 0; j < n; ++j) s -= c[t].col_mean[j] * model.weights(j, t);
      model.intercepts[t] = s;
    }
  };

  std::vector<double> grad(nt), z(nt);
  for (int it = 0; it < opt.max_iter; ++it) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double lip = 0.0, lo = INFINITY;
      for (std::size_t t = 0; t < nt; ++t) {
        lip = std::max(lip, curv(j, t));
        lo = std::min(lo, curv(j, t));
      }
      if (lip <= 0.0) {
        for (std::size_t t = 0; t < nt; ++t) model.weights(j, t) = 0.0;
        continue;
      }
      // one step is the exact row minimizer when all curvatures agree
      const bool exact = (lip - lo) <= 1e-12 * lip;
      const int inner_max = exact ? 1 : 200;
      for (int inner = 0; inner < inner_max; ++inner) {
        for (std::size_t t = 0; t < nt; ++t) {
          const double m = static_cast<double>(xs[t].rows());
          grad[t] = -column_dot(c[t].x, j, r[t]) / m;
          z[t] = soft_threshold(model.weights(j, t) - grad[t] / lip, opt.lambda_l1 / lip);
        }
        const double norm = std::sqrt(squared_norm(z));
        const double shrink =
            norm > 0.0 ? std::max(0.0, 1.0 - opt.lambda_group / (lip * norm)) : 0.0;
        double inner_change = 0.0;
        for (std::size_t t = 0; t < nt; ++t) {
          const double old = model.weights(j, t);
          const double w = z[t] * shrink;
          if (w != old) {
            axpy_column(c[t].x, j, old - w, r[t]);
            model.weights(j, t) = w;
            inner_change = std::max(inner_change, std::abs(w - old));
          }
        }
        max_change = std::max(max_change, inner_change);
        if (inner_change < opt.tol * 1e-2) break;
      }
    }
    model.iterations = it + 1;
    update_intercepts();
    model.objective_trace.push_back(group_lasso_objective(xs, ys, model));
    if (max_change < opt.tol) {
      model.converged = true;
      break;
    }
  }
  update_intercepts();
  return model;
}

double group_lasso_objective(const std::vector<Matrix>& xs,
                             const std::vector<std::vector<double>>& ys,
                             const GroupLassoModel& m) {
  double obj = 0.0;
  std::vector<double> w(m.weights.rows());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = m.weights(j, t);
    double ss = 0.0;
    for (std::size_t i = 0; i < xs[t].rows(); ++i) {
      const double r = ys[t][i] - dot(xs[t].row(i), w) - m.intercepts[t];
      ss += r * r;
    }
    obj += ss / (2.0 * static_cast<double>(xs[t].rows()));
  }
  for (std::size_t j = 0; j < m.weights.rows(); ++j) {
    obj += m.lambda_group * m.row_norm(j);
    for (double v : m.weights.row(j)) obj += m.lambda_l1 * std::abs(v);
  }
  return obj;
}

std::vector<double> group_lasso_row_gradient_norms(const std::vector<Matrix>& xs,
                                                   const std::vector<std::vector<double>>& ys,
                                                   const GroupLassoModel& m) {
  const std::size_t n = m.weights.rows();
  Matrix g(n, xs.size());
  std::vector<double> w(n);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (std::size_t j = 0; j < n; ++j) w[j] = m.weights(j, t);
    const double mt = static_cast<double>(xs[t].rows());
    for (std::size_t i = 0; i < xs[t].rows(); ++i) {
      const double r = ys[t][i] - dot(xs[t].row(i), w) - m.intercepts[t];
      for (std::size_t j = 0; j < n; ++j) g(j, t) -= xs[t](i, j) * r / mt;
    }
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = std::sqrt(squared_norm(g.row(j)));
  return out;
}

double predict_linear(const LassoModel& m, std::span<const double> x) {
  if (x.size() != m.weights.size()) throw InputError("predict_linear: dimension mismatch");
  return dot(m.weights, x) + m.intercept;
}

double predict_linear(const GroupLassoModel& m, const TaskId& task, std::span<const double> x) {
  const std::size_t t = m.task_index(task);
  if (x.size() != m.weights.rows()) throw InputError("predict_linear: dimension mismatch");
  double s = m.intercepts[t];
  for (std::size_t j = 0; j < x.size(); ++j) s += m.weights(j, t) * x[j];
  return s;
}

}  // namespace xferlens
