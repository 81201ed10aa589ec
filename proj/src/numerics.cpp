#include "xferlens/numerics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

#include "xferlens/errors.hpp"

namespace xferlens {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw std::invalid_argument("Matrix: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

std::vector<double> Matrix::col(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_bt: shape mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  std::vector<double> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw std::invalid_argument("matvec_t: shape mismatch");
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

namespace {

bool try_cholesky(const Matrix& a, double jitter, Matrix& lower) {
  const std::size_t n = a.rows();
  lower = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + jitter;
    for (std::size_t k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    lower(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace

CholeskyResult cholesky(const Matrix& a, double jitter) {
  if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: matrix not square");
  CholeskyResult out;
  double j = jitter;
  while (true) {
    if (try_cholesky(a, j, out.lower)) {
      out.jitter = j;
      return out;
    }
    if (j >= kMaxJitter) break;
    j = (j <= 0.0) ? 1e-10 : std::min(j * 10.0, kMaxJitter);
  }
  throw NumericalError("cholesky: matrix not positive definite at jitter " +
                       std::to_string(kMaxJitter));
}

std::vector<double> forward_substitute(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x[k];
    x[i] = s / lower(i, i);
  }
  return x;
}

std::vector<double> backward_substitute_t(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
  return x;
}

std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b) {
  return backward_substitute_t(lower, forward_substitute(lower, b));
}

Matrix cholesky_inverse(const Matrix& lower) {
  const std::size_t n = lower.rows();
  Matrix inv(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    auto c = cholesky_solve(lower, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = c[i];
  }
  return inv;
}

double cholesky_log_det(const Matrix& lower) {
  double s = 0.0;
  for (std::size_t i = 0; i < lower.rows(); ++i) s += std::log(lower(i, i));
  return 2.0 * s;
}

std::vector<double> solve_spd(const Matrix& a, std::span<const double> b) {
  return cholesky_solve(cholesky(a).lower, b);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : state_(seed) {}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n == 0");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t v = 0;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = base;
  std::uint64_t h = splitmix64(s);
  s = h ^ (a + 0x632be59bd9b4e019ULL);
  h = splitmix64(s);
  s = h ^ (b + 0x85157af5ULL);
  return splitmix64(s);
}

// ---------------------------------------------------------------------------

std::size_t MlpParams::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].rows() * weights[l].cols() + biases[l].size();
  return n;
}

MlpParams init_mlp(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                   Activation output_activation) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("init_mlp: need at least 2 layer sizes");
  for (auto s : layer_sizes)
    if (s == 0) throw std::invalid_argument("init_mlp: zero layer width");
  MlpParams p;
  p.layer_sizes = std::move(layer_sizes);
  p.output_activation = output_activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    const std::size_t in = p.layer_sizes[l];
    const std::size_t out = p.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(out, in);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    std::vector<double> b(out);
    for (double& v : b) v = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

namespace {

void check_shapes(const MlpParams& p) {
  if (p.layer_sizes.size() != p.weights.size() + 1 || p.weights.size() != p.biases.size())
    throw std::invalid_argument("mlp: inconsistent layer count");
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (p.weights[l].cols() != p.layer_sizes[l] || p.weights[l].rows() != p.layer_sizes[l + 1] ||
        p.biases[l].size() != p.layer_sizes[l + 1])
      throw std::invalid_argument("mlp: layer " + std::to_string(l) + " has incompatible shape");
  }
}

bool relu_after(const MlpParams& p, std::size_t layer) {
  return layer + 1 < p.weights.size() || p.output_activation == Activation::kRelu;
}

// pre[l] holds the pre-activation of layer l, acts[l] its input.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre;
  std::vector<double> output;
};

ForwardTrace forward_trace(const MlpParams& p, std::span<const double> x) {
  check_shapes(p);
  if (x.size() != p.input_size())
    throw std::invalid_argument("mlp: input length " + std::to_string(x.size()) + " != " +
                                std::to_string(p.input_size()));
  ForwardTrace t;
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    std::vector<double> z = matvec(p.weights[l], h);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += p.biases[l][i];
    t.inputs.push_back(std::move(h));
    t.pre.push_back(z);
    if (relu_after(p, l))
      for (double& v : z) v = std::max(v, 0.0);
    h = std::move(z);
  }
  t.output = std::move(h);
  return t;
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x) {
  return forward_trace(p, x).output;
}

MlpGrads mlp_backward(const MlpParams& p, std::span<const double> x,
                      std::span<const double> upstream) {
  ForwardTrace t = forward_trace(p, x);
  if (upstream.size() != p.output_size())
    throw std::invalid_argument("mlp_backward: upstream gradient has wrong length");
  const std::size_t layers = p.weights.size();
  MlpGrads g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = layers; l-- > 0;) {
    if (relu_after(p, l))
      for (std::size_t i = 0; i < delta.size(); ++i)
        if (t.pre[l][i] <= 0.0) delta[i] = 0.0;
    const auto& in = t.inputs[l];
    Matrix gw(delta.size(), in.size());
    for (std::size_t i = 0; i < delta.size(); ++i)
      for (std::size_t j = 0; j < in.size(); ++j) gw(i, j) = delta[i] * in[j];
    g.weights[l] = std::move(gw);
    g.biases[l] = delta;
    delta = matvec_t(p.weights[l], delta);
  }
  g.input = std::move(delta);
  return g;
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.num_params());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    auto w = p.weights[l].data();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), p.biases[l].begin(), p.biases[l].end());
  }
  return out;
}

std::vector<double> flatten(const MlpGrads& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    auto w = g.weights[l].data();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), g.biases[l].begin(), g.biases[l].end());
  }
  return out;
}

void unflatten(MlpParams& p, std::span<const double> flat) {
  if (flat.size() != p.num_params()) throw std::invalid_argument("unflatten: length mismatch");
  std::size_t k = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (double& v : p.weights[l].data()) v = flat[k++];
    for (double& v : p.biases[l]) v = flat[k++];
  }
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> analytic, std::span<const double> at,
                           double h) {
  if (analytic.size() != at.size()) throw std::invalid_argument("grad_check: length mismatch");
  GradCheckResult r;
  r.numeric.resize(at.size());
  std::vector<double> x(at.begin(), at.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("grad_check: non-finite function value at coordinate " +
                           std::to_string(i));
    const double num = (fp - fm) / (2.0 * h);
    r.numeric[i] = num;
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(num)});
    r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic[i] - num) / denom);
  }
  return r;
}

}  // namespace xferlens
