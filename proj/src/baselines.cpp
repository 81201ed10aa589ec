#include "xferlens/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "xferlens/errors.hpp"

namespace xferlens {

double predict_awt(const Dataset& train, const TaskId& task, const LangId& pivot,
                   const LangId& target) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : train.records)
    if (r.task == task && r.pivot == pivot && r.target != target) {
      sum += r.score;
      ++n;
    }
  if (n == 0)
    throw Error("AWT: task '" + task.str() + "' has no other targets for pivot '" + pivot.str() +
                "'");
  return sum / static_cast<double>(n);
}

double predict_aat(const Dataset& train, const TaskId& task, const LangId& pivot,
                   const LangId& target) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : train.records)
    if (r.task != task && r.pivot == pivot && r.target == target) {
      sum += r.score;
      ++n;
    }
  if (n == 0)
    throw Error("AAT: target '" + target.str() + "' unseen in every helper task for pivot '" +
                pivot.str() + "'");
  return sum / static_cast<double>(n);
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
  }
  return nodes[i].value;
}

int RegressionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<double>& residual, int max_depth)
      : x_(x), r_(residual), max_depth_(max_depth) {}

  RegressionTree build() {
    std::vector<std::size_t> all(x_.rows());
    std::iota(all.begin(), all.end(), 0);
    tree_.nodes.clear();
    grow(all, 0);
    return std::move(tree_);
  }

 private:
  int grow(const std::vector<std::size_t>& idx, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (auto i : idx) sum += r_[i];
    const double mean = sum / static_cast<double>(idx.size());
    tree_.nodes[static_cast<std::size_t>(id)].value = mean;

    if (depth >= max_depth_ || idx.size() < 2) return id;
    const SplitChoice s = best_split(idx, sum);
    if (s.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx)
      (x_(i, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(i);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  SplitChoice best_split(const std::vector<std::size_t>& idx, double total) const {
    const double n = static_cast<double>(idx.size());
    double node_ss = 0.0;
    const double mean = total / n;
    for (auto i : idx) node_ss += (r_[i] - mean) * (r_[i] - mean);
    // gains below this are rounding noise
    const double eps = 1e-12 * std::max(node_ss, 1e-300);

    SplitChoice best;
    std::vector<std::size_t> order(idx);
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
      double left_sum = 0.0;
      for (std::size_t k = 1; k < order.size(); ++k) {
        left_sum += r_[order[k - 1]];
        const double lo = x_(order[k - 1], f), hi = x_(order[k], f);
        if (!(lo < hi)) continue;
        const double nl = static_cast<double>(k), nr = n - nl;
        const double right_sum = total - left_sum;
        const double gain =
            left_sum * left_sum / nl + right_sum * right_sum / nr - total * total / n;
        if (gain > eps && gain > best.gain + eps) {
          double thr = lo + (hi - lo) / 2.0;
          if (!(thr < hi)) thr = lo;
          best = {static_cast<int>(f), thr, gain};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const std::vector<double>& r_;
  int max_depth_;
  RegressionTree tree_;
};

double mse(std::span<const double> y, std::span<const double> pred) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - pred[i]) * (y[i] - pred[i]);
  return s / static_cast<double>(y.size());
}

}  // namespace

TreeEnsemble fit_gbt(const Matrix& x, std::span<const double> y, const GbtOptions& opt,
                     std::uint64_t /*seed: no row/column subsampling, so unused*/) {
  if (x.cols() == 0) throw InputError("fit_gbt: no features");
  if (x.rows() != y.size()) throw InputError("fit_gbt: rows(x) != len(y)");
  if (x.rows() < 2) throw InputError("fit_gbt: need at least 2 samples");
  if (opt.n_estimators < 0 || opt.max_depth < 0 || !(opt.learning_rate > 0.0))
    throw std::invalid_argument("fit_gbt: invalid options");

  TreeEnsemble m;
  m.learning_rate = opt.learning_rate;
  m.num_features = x.cols();
  m.max_depth = opt.max_depth;
  m.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<double> pred(y.size(), m.base_score);
  std::vector<double> residual(y.size());
  m.train_mse.push_back(mse(y, pred));
  for (int t = 0; t < opt.n_estimators; ++t) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - pred[i];
    RegressionTree tree = TreeBuilder(x, residual, opt.max_depth).build();
    for (std::size_t i = 0; i < y.size(); ++i)
      pred[i] += m.learning_rate * tree.predict(x.row(i));
    m.trees.push_back(std::move(tree));
    m.train_mse.push_back(mse(y, pred));
  }
  return m;
}

double predict_gbt(const TreeEnsemble& m, std::span<const double> x) {
  if (x.size() != m.num_features)
    throw InputError("predict_gbt: expected " + std::to_string(m.num_features) +
                     " features, got " + std::to_string(x.size()));
  double out = m.base_score;
  for (const auto& t : m.trees) out += m.learning_rate * t.predict(x);
  return out;
}

}  // namespace xferlens
