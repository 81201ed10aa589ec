#include "xferlens/factorization.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "xferlens/errors.hpp"

namespace xferlens {

namespace {

// Accumulates the normal equations (A + reg I) v = b of a ridge problem.
struct Ridge {
  Matrix a;
  std::vector<double> b;

  explicit Ridge(std::size_t d) : a(d, d), b(d, 0.0) {}

  void add(std::span<const double> v, double target, double weight) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      b[i] += weight * target * v[i];
      for (std::size_t j = 0; j < v.size(); ++j) a(i, j) += weight * v[i] * v[j];
    }
  }

  std::vector<double> solve(double reg) {
    for (std::size_t i = 0; i < b.size(); ++i) a(i, i) += reg;
    return solve_spd(a, b);
  }
};

void set_row(Matrix& m, std::size_t i, const std::vector<double>& v) {
  std::copy(v.begin(), v.end(), m.row(i).begin());
}

Matrix random_factors(std::size_t rows, std::size_t d, double scale, Rng& rng) {
  Matrix m(rows, d);
  for (double& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

struct Problem {
  const std::vector<CmfObservation>& obs;
  const Matrix& x;
  std::vector<std::vector<std::size_t>> by_task;
  std::vector<std::vector<std::size_t>> by_pair;
};

void update_tasks(CmfModel& m, const Problem& p) {
  const std::size_t d = static_cast<std::size_t>(m.latent_dim);
  for (std::size_t t = 0; t < m.task_factors.rows(); ++t) {
    Ridge r(d);
    for (auto k : p.by_task[t]) r.add(m.pair_factors.row(p.obs[k].pair), p.obs[k].value, 1.0);
    set_row(m.task_factors, t, r.solve(m.reg));
  }
}

void update_pairs(CmfModel& m, const Problem& p) {
  const std::size_t d = static_cast<std::size_t>(m.latent_dim);
  const std::size_t n = p.x.cols();
  // alpha F^T F is shared by every pair
  Matrix ftf(d, d);
  for (std::size_t j = 0; j < n; ++j) {
    auto f = m.feature_factors.row(j);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) ftf(a, b) += m.alpha * f[a] * f[b];
  }
  for (std::size_t q = 0; q < m.pair_factors.rows(); ++q) {
    Ridge r(d);
    r.a = ftf;
    for (auto k : p.by_pair[q]) r.add(m.task_factors.row(p.obs[k].task), p.obs[k].value, 1.0);
    if (m.alpha > 0.0)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t a = 0; a < d; ++a)
          r.b[a] += m.alpha * p.x(q, j) * m.feature_factors(j, a);
    set_row(m.pair_factors, q, r.solve(m.reg));
  }
}

void update_features(CmfModel& m, const Problem& p) {
  const std::size_t d = static_cast<std::size_t>(m.latent_dim);
  if (m.alpha == 0.0) {
    // F only enters through the regularizer
    for (double& v : m.feature_factors.data()) v = 0.0;
    return;
  }
  Ridge base(d);
  for (std::size_t q = 0; q < m.pair_factors.rows(); ++q)
    base.add(m.pair_factors.row(q), 0.0, m.alpha);
  for (std::size_t j = 0; j < p.x.cols(); ++j) {
    Ridge r = base;
    for (std::size_t q = 0; q < m.pair_factors.rows(); ++q)
      for (std::size_t a = 0; a < d; ++a) r.b[a] += m.alpha * p.x(q, j) * m.pair_factors(q, a);
    set_row(m.feature_factors, j, r.solve(m.reg));
  }
}

}  // namespace

double cmf_objective(const CmfModel& m, const std::vector<CmfObservation>& observed,
                     const Matrix& x) {
  double obj = 0.0;
  for (const auto& o : observed) {
    const double e = o.value - dot(m.task_factors.row(o.task), m.pair_factors.row(o.pair));
    obj += e * e;
  }
  if (m.alpha > 0.0)
    for (std::size_t q = 0; q < x.rows(); ++q)
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const double e = x(q, j) - dot(m.pair_factors.row(q), m.feature_factors.row(j));
        obj += m.alpha * e * e;
      }
  obj += m.reg * (squared_norm(m.task_factors.data()) + squared_norm(m.pair_factors.data()) +
                  squared_norm(m.feature_factors.data()));
  return obj;
}

CmfModel fit_cmf(const std::vector<TaskId>& tasks, const std::vector<LangPair>& pairs,
                 const std::vector<CmfObservation>& observed, const Matrix& x,
                 const CmfOptions& opt, std::uint64_t seed) {
  if (observed.empty()) throw InputError("fit_cmf: no observations");
  if (opt.latent_dim < 1) throw InputError("fit_cmf: latent dimension must be >= 1");
  const std::size_t d = static_cast<std::size_t>(opt.latent_dim);
  if (d > std::min(tasks.size(), pairs.size()))
    throw InputError("fit_cmf: latent dimension " + std::to_string(d) +
                     " exceeds min(tasks, pairs) = " +
                     std::to_string(std::min(tasks.size(), pairs.size())));
  if (x.rows() != pairs.size()) throw InputError("fit_cmf: feature matrix needs one row per pair");
  if (!(opt.reg >= 0.0) || !(opt.alpha >= 0.0) || opt.alpha > 1.0)
    throw std::invalid_argument("fit_cmf: reg must be >= 0 and alpha in [0,1]");
  if (!x.all_finite()) throw InputError("fit_cmf: non-finite features");

  Problem p{observed, x, std::vector<std::vector<std::size_t>>(tasks.size()),
            std::vector<std::vector<std::size_t>>(pairs.size())};
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const auto& o = observed[k];
    if (o.task >= tasks.size() || o.pair >= pairs.size())
      throw InputError("fit_cmf: observation index out of range");
    if (!std::isfinite(o.value)) throw InputError("fit_cmf: non-finite observation");
    p.by_task[o.task].push_back(k);
    p.by_pair[o.pair].push_back(k);
  }

  CmfModel best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < std::max(1, opt.restarts); ++restart) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(restart)));
    CmfModel m;
    m.latent_dim = opt.latent_dim;
    m.reg = opt.reg;
    m.alpha = opt.alpha;
    m.task_factors = random_factors(tasks.size(), d, opt.init_scale, rng);
    m.pair_factors = random_factors(pairs.size(), d, opt.init_scale, rng);
    m.feature_factors = random_factors(x.cols(), d, opt.init_scale, rng);
    if (m.alpha == 0.0)
      for (double& v : m.feature_factors.data()) v = 0.0;
    m.objective_trace.push_back(cmf_objective(m, observed, x));
    for (int s = 0; s < opt.sweeps; ++s) {
      update_tasks(m, p);
      m.objective_trace.push_back(cmf_objective(m, observed, x));
      update_pairs(m, p);
      m.objective_trace.push_back(cmf_objective(m, observed, x));
      update_features(m, p);
      m.objective_trace.push_back(cmf_objective(m, observed, x));
    }
    m.objective = m.objective_trace.back();
    if (m.objective < best.objective) best = std::move(m);
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) best.task_index.emplace(tasks[t], t);
  for (std::size_t q = 0; q < pairs.size(); ++q) best.pair_index.emplace(pairs[q], q);
  return best;
}

double predict_cmf(const CmfModel& m, const TaskId& task, std::span<const double> pair_factor) {
  auto it = m.task_index.find(task);
  if (it == m.task_index.end()) throw InputError("predict_cmf: unknown task '" + task.str() + "'");
  return dot(m.task_factors.row(it->second), pair_factor);
}

double predict_cmf(const CmfModel& m, const TaskId& task, const LangPair& pair) {
  auto it = m.pair_index.find(pair);
  if (it == m.pair_index.end())
    throw InputError("predict_cmf: unknown pair (" + pair.first.str() + "," + pair.second.str() +
                     "); use fold_in_pair");
  return predict_cmf(m, task, m.pair_factors.row(it->second));
}

std::vector<double> fold_in_pair(const CmfModel& m, std::span<const double> x_new) {
  if (!(m.alpha > 0.0) || squared_norm(m.feature_factors.data()) == 0.0)
    throw InputError("fold_in_pair: feature factors are degenerate (alpha was 0)");
  if (x_new.size() != m.feature_factors.rows())
    throw InputError("fold_in_pair: feature dimension mismatch");
  const std::size_t d = static_cast<std::size_t>(m.latent_dim);
  Ridge r(d);
  for (std::size_t j = 0; j < x_new.size(); ++j)
    r.add(m.feature_factors.row(j), x_new[j], m.alpha);
  return r.solve(m.reg);
}

}  // namespace xferlens
