#include "xferlens/meta.hpp"

#include <numeric>
#include <stdexcept>

#include "xferlens/errors.hpp"

namespace xferlens {

MseGradient mse_and_gradient(const MlpParams& p, const Matrix& x, std::span<const double> y) {
  if (x.rows() != y.size() || x.rows() == 0) throw InputError("mse: need matching, non-empty x/y");
  if (p.output_size() != 1) throw InputError("mse: network must have a scalar output");
  MseGradient out;
  out.gradient.assign(p.num_params(), 0.0);
  const double m = static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double err = mlp_forward(p, x.row(i))[0] - y[i];
    out.value += err * err / m;
    const double up = 2.0 * err / m;
    const auto g = flatten(mlp_backward(p, x.row(i), std::span<const double>(&up, 1)));
    for (std::size_t k = 0; k < g.size(); ++k) out.gradient[k] += g[k];
  }
  return out;
}

MlpParams adapt(const MlpParams& theta, const Matrix& support_x, std::span<const double> support_y,
                const MamlConfig& cfg) {
  if (support_x.rows() == 0) throw InputError("adapt: empty support set");
  if (support_x.cols() != theta.input_size()) throw InputError("adapt: input dimension mismatch");
  MlpParams phi = theta;
  if (cfg.inner_steps <= 0) return phi;
  std::vector<double> flat = flatten(phi);
  for (int k = 0; k < cfg.inner_steps; ++k) {
    const auto g = mse_and_gradient(phi, support_x, support_y).gradient;
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= cfg.inner_lr * g[i];
    unflatten(phi, flat);
  }
  return phi;
}

namespace {

RegressionTask take_rows(const RegressionTask& t, std::span<const std::size_t> idx) {
  RegressionTask out{Matrix(idx.size(), t.x.cols()), {}};
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(t.x.row(idx[i]).begin(), t.x.row(idx[i]).end(), out.x.row(i).begin());
    out.y.push_back(t.y[idx[i]]);
  }
  return out;
}

}  // namespace

EpisodeSplit split_episode(const RegressionTask& task, Rng& rng) {
  if (task.x.rows() < 2) throw InputError("meta_train: task too small to split");
  std::vector<std::size_t> idx(task.x.rows());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  const std::size_t half = idx.size() / 2;
  std::span<const std::size_t> all(idx);
  return {take_rows(task, all.subspan(0, half)), take_rows(task, all.subspan(half))};
}

std::vector<double> maml_outer_gradient(const MlpParams& theta,
                                        const std::vector<EpisodeSplit>& episodes,
                                        const MamlConfig& cfg) {
  if (!cfg.first_order && cfg.inner_steps > 0)
    throw std::invalid_argument("MAML: only the first-order meta-gradient is supported");
  std::vector<double> total(theta.num_params(), 0.0);
  for (const auto& ep : episodes) {
    const MlpParams phi = adapt(theta, ep.support.x, ep.support.y, cfg);
    const auto g = mse_and_gradient(phi, ep.query.x, ep.query.y).gradient;
    for (std::size_t k = 0; k < g.size(); ++k) total[k] += g[k];
  }
  for (double& v : total) v /= static_cast<double>(episodes.size());
  return total;
}

MlpParams meta_train(const std::vector<RegressionTask>& tasks, const MamlConfig& cfg,
                     std::uint64_t seed) {
  if (tasks.empty()) throw InputError("meta_train: no helper tasks");
  if (!(cfg.inner_lr >= 0.0) || !(cfg.outer_lr > 0.0) || cfg.meta_epochs < 0 ||
      cfg.inner_steps < 0)
    throw std::invalid_argument("meta_train: invalid configuration");
  const std::size_t n = tasks.front().x.cols();
  for (const auto& t : tasks) {
    if (t.x.cols() != n) throw InputError("meta_train: inconsistent input dimension");
    if (t.x.rows() < 2) throw InputError("meta_train: task too small to split");
  }
  std::vector<std::size_t> sizes{n};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  MlpParams theta = init_mlp(sizes, seed);
  std::vector<double> flat = flatten(theta);
  for (int epoch = 0; epoch < cfg.meta_epochs; ++epoch) {
    Rng rng(derive_seed(seed, 0x6d616d6c, static_cast<std::uint64_t>(epoch)));
    std::vector<EpisodeSplit> episodes;
    episodes.reserve(tasks.size());
    for (const auto& t : tasks) episodes.push_back(split_episode(t, rng));
    const auto g = maml_outer_gradient(theta, episodes, cfg);
    for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= cfg.outer_lr * g[k];
    unflatten(theta, flat);
  }
  return theta;
}

double predict_mlp_scalar(const MlpParams& p, std::span<const double> x) {
  return mlp_forward(p, x)[0];
}

}  // namespace xferlens
