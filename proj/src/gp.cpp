#include "xferlens/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "xferlens/errors.hpp"

namespace xferlens {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Noise-free multi-task Gram matrix over the training rows.
Matrix latent_gram(const GpState& s, const Matrix& task_cov) {
  const std::size_t m = s.latent.rows();
  const double ls = s.lengthscale(), sv = s.signal_variance();
  Matrix k(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v =
          kernel_rbf(s.latent.row(i), s.latent.row(j), ls, sv) * task_cov(s.train_task[i], s.train_task[j]);
      k(i, j) = v;
      k(j, i) = v;
    }
  return k;
}

Matrix noisy_gram(const GpState& s, const Matrix& task_cov) {
  Matrix k = latent_gram(s, task_cov);
  for (std::size_t i = 0; i < k.rows(); ++i) k(i, i) += std::exp(s.log_noise[s.train_task[i]]);
  return k;
}

void compute_latent(GpState& s) {
  s.latent = Matrix(s.train_x.rows(), s.mlp.output_size());
  for (std::size_t i = 0; i < s.train_x.rows(); ++i) {
    auto g = mlp_forward(s.mlp, s.train_x.row(i));
    std::copy(g.begin(), g.end(), s.latent.row(i).begin());
  }
}

}  // namespace

Matrix GpState::task_covariance() const { return matmul_bt(task_root, task_root); }

std::size_t GpState::task_index(const TaskId& t) const {
  auto it = std::find(tasks.begin(), tasks.end(), t);
  if (it == tasks.end()) throw InputError("GP: unknown task '" + t.str() + "'");
  return static_cast<std::size_t>(it - tasks.begin());
}

double GpState::lengthscale() const { return std::exp(log_lengthscale); }
double GpState::signal_variance() const { return std::exp(log_signal_variance); }

double kernel_rbf(std::span<const double> a, std::span<const double> b, double lengthscale,
                  double signal_variance) {
  if (!(lengthscale > 0.0)) throw std::invalid_argument("kernel_rbf: lengthscale must be > 0");
  if (a.size() != b.size()) throw std::invalid_argument("kernel_rbf: dimension mismatch");
  return signal_variance * std::exp(-sq_dist(a, b) / (2.0 * lengthscale * lengthscale));
}

double multitask_kernel(std::span<const double> xa, const TaskId& ta, std::span<const double> xb,
                        const TaskId& tb, const GpState& state) {
  const std::size_t ia = state.task_index(ta), ib = state.task_index(tb);
  const auto ga = mlp_forward(state.mlp, xa);
  const auto gb = mlp_forward(state.mlp, xb);
  double kt = 0.0;
  for (std::size_t c = 0; c < state.task_root.cols(); ++c)
    kt += state.task_root(ia, c) * state.task_root(ib, c);
  return kernel_rbf(ga, gb, state.lengthscale(), state.signal_variance()) * kt;
}

GpState make_gp_state(const std::vector<GpTaskData>& data, bool multi_task, const GpOptions& opt,
                      std::uint64_t seed) {
  if (data.empty()) throw InputError("GP: no tasks");
  const std::size_t n = data.front().x.cols();
  std::size_t total = 0;
  for (const auto& d : data) {
    if (d.x.cols() != n) throw InputError("GP: inconsistent input dimension");
    if (d.x.rows() != d.y.size()) throw InputError("GP: rows(x) != len(y)");
    if (d.x.rows() < 2)
      throw InputError("GP: task '" + d.task.str() + "' has fewer than 2 training points");
    total += d.x.rows();
  }
  if (opt.hidden.empty()) throw std::invalid_argument("GP: feature network needs a layer");

  GpState s;
  std::vector<std::size_t> sizes{n};
  sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
  s.mlp = init_mlp(sizes, seed, Activation::kRelu);
  s.log_lengthscale = std::log(opt.init_lengthscale);
  s.log_signal_variance = std::log(opt.init_signal_variance);
  s.multi_task = multi_task;
  s.jitter = opt.jitter;
  const std::size_t nt = data.size();
  s.log_noise.assign(nt, std::log(std::max(opt.init_noise, opt.noise_floor)));
  if (multi_task) {
    const double rho = opt.init_task_correlation;
    Matrix b(nt, nt, rho);
    for (std::size_t i = 0; i < nt; ++i) b(i, i) = 1.0;
    s.task_root = cholesky(b).lower;
  } else {
    s.task_root = Matrix::identity(nt);
  }

  s.train_x = Matrix(total, n);
  std::size_t row = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    s.tasks.push_back(data[t].task);
    const double mean = std::accumulate(data[t].y.begin(), data[t].y.end(), 0.0) /
                        static_cast<double>(data[t].y.size());
    s.task_mean.push_back(mean);
    for (std::size_t i = 0; i < data[t].x.rows(); ++i, ++row) {
      std::copy(data[t].x.row(i).begin(), data[t].x.row(i).end(), s.train_x.row(row).begin());
      s.train_y.push_back(data[t].y[i] - mean);
      s.train_task.push_back(t);
    }
  }
  refresh_gp_cache(s);
  return s;
}

void refresh_gp_cache(GpState& s) {
  compute_latent(s);
  const Matrix k = noisy_gram(s, s.task_covariance());
  auto ch = cholesky(k, s.jitter);
  s.chol = std::move(ch.lower);
  s.jitter_used = ch.jitter;
  s.alpha = cholesky_solve(s.chol, s.train_y);
}

std::vector<double> gp_parameters(const GpState& s) {
  std::vector<double> p = flatten(s.mlp);
  p.push_back(s.log_lengthscale);
  p.push_back(s.log_signal_variance);
  p.insert(p.end(), s.log_noise.begin(), s.log_noise.end());
  if (s.multi_task) p.insert(p.end(), s.task_root.data().begin(), s.task_root.data().end());
  return p;
}

void set_gp_parameters(GpState& s, std::span<const double> flat) {
  const std::size_t nm = s.mlp.num_params();
  const std::size_t nt = s.tasks.size();
  const std::size_t expected = nm + 2 + nt + (s.multi_task ? nt * nt : 0);
  if (flat.size() != expected) throw std::invalid_argument("set_gp_parameters: wrong length");
  unflatten(s.mlp, flat.subspan(0, nm));
  s.log_lengthscale = flat[nm];
  s.log_signal_variance = flat[nm + 1];
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(nm + 2),
            flat.begin() + static_cast<std::ptrdiff_t>(nm + 2 + nt), s.log_noise.begin());
  if (s.multi_task)
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(nm + 2 + nt), flat.end(),
              s.task_root.data().begin());
}

double gp_log_marginal_likelihood(const GpState& s) {
  const double m = static_cast<double>(s.train_y.size());
  return -0.5 * dot(s.train_y, s.alpha) - 0.5 * cholesky_log_det(s.chol) - 0.5 * m * kLog2Pi;
}

MllGradient gp_log_marginal_likelihood_grad(const GpState& s) {
  const std::size_t m = s.train_y.size();
  const std::size_t nt = s.tasks.size();
  const Matrix task_cov = s.task_covariance();
  const double ls2 = s.lengthscale() * s.lengthscale();
  const double sv = s.signal_variance();

  // W = dL/dK = (alpha alpha^T - K^{-1}) / 2
  Matrix w = cholesky_inverse(s.chol);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) w(i, j) = 0.5 * (s.alpha[i] * s.alpha[j] - w(i, j));

  double d_log_sv = 0.0, d_log_ls = 0.0;
  std::vector<double> d_log_noise(nt, 0.0);
  Matrix task_grad(nt, nt);  // dL/dK_task
  Matrix d_latent(m, s.latent.cols());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t ti = s.train_task[i];
    d_log_noise[ti] += w(i, i) * std::exp(s.log_noise[ti]);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t tj = s.train_task[j];
      const double r2 = sq_dist(s.latent.row(i), s.latent.row(j));
      const double k = sv * std::exp(-r2 / (2.0 * ls2));
      const double kf = k * task_cov(ti, tj);
      d_log_sv += w(i, j) * kf;
      d_log_ls += w(i, j) * kf * r2 / ls2;
      task_grad(ti, tj) += w(i, j) * k;
      if (i != j) {
        const double coef = 2.0 * w(i, j) * kf / ls2;
        for (std::size_t c = 0; c < s.latent.cols(); ++c)
          d_latent(i, c) += coef * (s.latent(j, c) - s.latent(i, c));
      }
    }
  }

  MllGradient out;
  out.value = gp_log_marginal_likelihood(s);
  std::vector<double> mlp_grad(s.mlp.num_params(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto g = flatten(mlp_backward(s.mlp, s.train_x.row(i), d_latent.row(i)));
    for (std::size_t k = 0; k < g.size(); ++k) mlp_grad[k] += g[k];
  }
  out.gradient = std::move(mlp_grad);
  out.gradient.push_back(d_log_ls);
  out.gradient.push_back(d_log_sv);
  out.gradient.insert(out.gradient.end(), d_log_noise.begin(), d_log_noise.end());
  if (s.multi_task) {
    // K_task = A A^T  =>  dL/dA = (G + G^T) A
    Matrix sym(nt, nt);
    for (std::size_t a = 0; a < nt; ++a)
      for (std::size_t b = 0; b < nt; ++b) sym(a, b) = task_grad(a, b) + task_grad(b, a);
    const Matrix da = matmul(sym, s.task_root);
    out.gradient.insert(out.gradient.end(), da.data().begin(), da.data().end());
  }
  return out;
}

GpState fit_gp(const std::vector<GpTaskData>& data, bool multi_task, const GpOptions& opt,
               std::uint64_t seed) {
  GpState s = make_gp_state(data, multi_task, opt, seed);
  const std::size_t nm = s.mlp.num_params();
  const std::size_t nt = s.tasks.size();
  const double log_floor = std::log(opt.noise_floor);

  auto project = [&](std::vector<double>& p) {
    for (std::size_t t = 0; t < nt; ++t) {
      double& v = p[nm + 2 + t];
      v = std::max(v, log_floor);
    }
  };

  MllGradient cur = gp_log_marginal_likelihood_grad(s);
  s.mll_trace.push_back(cur.value);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    if (!opt.train_noise)
      for (std::size_t t = 0; t < nt; ++t) cur.gradient[nm + 2 + t] = 0.0;
    const std::vector<double> base = gp_parameters(s);
    double step = opt.learning_rate;
    bool accepted = false;
    for (int attempt = 0; attempt <= opt.max_backoff; ++attempt, step *= 0.5) {
      std::vector<double> trial = base;
      for (std::size_t k = 0; k < trial.size(); ++k) trial[k] += step * cur.gradient[k];
      project(trial);
      GpState cand = s;
      set_gp_parameters(cand, trial);
      try {
        refresh_gp_cache(cand);
      } catch (const NumericalError&) {
        continue;
      }
      const double v = gp_log_marginal_likelihood(cand);
      if (std::isfinite(v) && v >= cur.value) {
        s = std::move(cand);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no ascent direction left at machine precision
    cur = gp_log_marginal_likelihood_grad(s);
    s.mll_trace.push_back(cur.value);
  }
  return s;
}

GpPrediction predict_gp(const GpState& s, std::span<const double> x, const TaskId& task) {
  const std::size_t t = s.task_index(task);
  if (x.size() != s.train_x.cols()) throw InputError("predict_gp: dimension mismatch");
  const Matrix task_cov = s.task_covariance();
  const auto g = mlp_forward(s.mlp, x);
  const double ls = s.lengthscale(), sv = s.signal_variance();
  std::vector<double> kstar(s.train_y.size());
  for (std::size_t i = 0; i < kstar.size(); ++i)
    kstar[i] = kernel_rbf(g, s.latent.row(i), ls, sv) * task_cov(t, s.train_task[i]);
  GpPrediction p;
  p.mean = dot(kstar, s.alpha) + s.task_mean[t];
  const auto v = forward_substitute(s.chol, kstar);
  p.variance = std::max(0.0, sv * task_cov(t, t) - squared_norm(v));
  return p;
}

}  // namespace xferlens
