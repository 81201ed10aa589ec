#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xferlens/core_data.hpp"
#include "xferlens/numerics.hpp"

namespace xferlens {

/// Average score within a task: mean over the task's other targets for the
/// same pivot.
double predict_awt(const Dataset& train, const TaskId& task, const LangId& pivot,
                   const LangId& target);

/// Average score across tasks: mean of the same (pivot, target) score over
/// the other tasks that have it.
double predict_aat(const Dataset& train, const TaskId& task, const LangId& pivot,
                   const LangId& target);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct TreeEnsemble {
  std::vector<RegressionTree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;
  std::size_t num_features = 0;
  int max_depth = 0;
  /// Training MSE after each boosting round (index 0 = base score only).
  std::vector<double> train_mse;

  friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

struct GbtOptions {
  int n_estimators = 100;
  int max_depth = 10;
  double learning_rate = 0.3;
};

/// Gradient boosting with squared loss and exact greedy splits. Equal-gain
/// splits resolve to the lowest feature index, then the lowest threshold.
TreeEnsemble fit_gbt(const Matrix& x, std::span<const double> y, const GbtOptions& opt,
                     std::uint64_t seed = 0);

double predict_gbt(const TreeEnsemble& m, std::span<const double> x);

}  // namespace xferlens
