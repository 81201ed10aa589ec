#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xferlens/numerics.hpp"

namespace xferlens {

struct MamlConfig {
  int inner_steps = 5;
  double inner_lr = 0.01;
  double outer_lr = 0.001;
  int meta_epochs = 500;
  /// Hidden widths; input width comes from the data and the output is 1.
  std::vector<std::size_t> hidden = {50, 10};
  bool first_order = true;
};

struct RegressionTask {
  Matrix x;
  std::vector<double> y;
};

/// Mean squared error of a scalar-output network and its parameter gradient
/// (flattened, see flatten()).
struct MseGradient {
  double value = 0.0;
  std::vector<double> gradient;
};
MseGradient mse_and_gradient(const MlpParams& p, const Matrix& x, std::span<const double> y);

/// K full-batch gradient steps on the support MSE, starting from a copy of
/// theta.
MlpParams adapt(const MlpParams& theta, const Matrix& support_x, std::span<const double> support_y,
                const MamlConfig& cfg);

/// Support/query halves of one task for one meta-epoch.
struct EpisodeSplit {
  RegressionTask support;
  RegressionTask query;
};
EpisodeSplit split_episode(const RegressionTask& task, Rng& rng);

/// First-order meta-gradient: for each episode adapt theta on the support set
/// and take the query-MSE gradient at the adapted parameters; averaged over
/// episodes.
std::vector<double> maml_outer_gradient(const MlpParams& theta,
                                        const std::vector<EpisodeSplit>& episodes,
                                        const MamlConfig& cfg);

/// Learns a network initialization over the helper tasks.
MlpParams meta_train(const std::vector<RegressionTask>& tasks, const MamlConfig& cfg,
                     std::uint64_t seed);

double predict_mlp_scalar(const MlpParams& p, std::span<const double> x);

}  // namespace xferlens
