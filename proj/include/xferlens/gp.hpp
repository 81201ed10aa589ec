#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/numerics.hpp"

namespace xferlens {

/// Training data of one task.
struct GpTaskData {
  TaskId task;
  Matrix x;
  std::vector<double> y;
};

struct GpOptions {
  double learning_rate = 0.01;
  int epochs = 200;
  /// Hidden widths of the feature network; the last width is the latent
  /// dimension fed to the RBF kernel (ReLU applied on it as well).
  std::vector<std::size_t> hidden = {50, 10};
  double init_noise = 0.01;
  double init_lengthscale = 1.0;
  double init_signal_variance = 1.0;
  /// Initial inter-task correlation of K_task (multi-task only).
  double init_task_correlation = 0.5;
  double noise_floor = 1e-6;
  bool train_noise = true;
  double jitter = 1e-6;
  int max_backoff = 20;
};

/// Deep-kernel GP over one or several tasks.
///   k([x,s],[x',s']) = sv * exp(-|g(x)-g(x')|^2 / (2 ls^2)) * K_task[s,s']
/// with K_task = A A^T and per-task Gaussian noise. Targets are centered per
/// task; the mean is added back at prediction.
struct GpState {
  MlpParams mlp;
  double log_lengthscale = 0.0;
  double log_signal_variance = 0.0;
  std::vector<double> log_noise;  // per task
  Matrix task_root;               // A
  bool multi_task = false;
  double jitter = 1e-6;

  std::vector<TaskId> tasks;
  Matrix train_x;
  std::vector<double> train_y;  // centered
  std::vector<std::size_t> train_task;
  std::vector<double> task_mean;

  // Derived from the parameters by refresh_gp_cache().
  Matrix latent;  // g(x_i) per training row
  Matrix chol;    // lower factor of K + noise + jitter
  std::vector<double> alpha;
  double jitter_used = 0.0;

  /// Log marginal likelihood after each accepted epoch (index 0 = initial).
  std::vector<double> mll_trace;

  Matrix task_covariance() const;
  std::size_t task_index(const TaskId& t) const;
  double lengthscale() const;
  double signal_variance() const;
};

double kernel_rbf(std::span<const double> a, std::span<const double> b, double lengthscale,
                  double signal_variance);

/// Kernel between two inputs of (possibly different) tasks under `state`.
double multitask_kernel(std::span<const double> xa, const TaskId& ta, std::span<const double> xb,
                        const TaskId& tb, const GpState& state);

/// Initial (untrained) state with the cache filled. `multi_task` = false
/// fixes K_task to the identity.
GpState make_gp_state(const std::vector<GpTaskData>& data, bool multi_task, const GpOptions& opt,
                      std::uint64_t seed);

/// Recomputes latent features, the Cholesky factor and alpha.
void refresh_gp_cache(GpState& state);

/// Flat trainable parameters: MLP, log lengthscale, log signal variance, log
/// noise per task, then A row-major when multi-task. set_gp_parameters leaves
/// the cache stale; call refresh_gp_cache() afterwards.
std::vector<double> gp_parameters(const GpState& state);
void set_gp_parameters(GpState& state, std::span<const double> flat);

struct MllGradient {
  double value = 0.0;
  std::vector<double> gradient;  // same layout as gp_parameters()
};

double gp_log_marginal_likelihood(const GpState& state);
MllGradient gp_log_marginal_likelihood_grad(const GpState& state);

/// Maximizes the exact log marginal likelihood by full-batch gradient ascent
/// with step halving whenever a step would lower it.
GpState fit_gp(const std::vector<GpTaskData>& data, bool multi_task, const GpOptions& opt,
               std::uint64_t seed);

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

GpPrediction predict_gp(const GpState& state, std::span<const double> x, const TaskId& task);

}  // namespace xferlens
