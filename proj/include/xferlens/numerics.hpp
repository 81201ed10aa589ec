#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace xferlens {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::vector<double> col(std::size_t j) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// a^T * x
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;  // jitter actually added to the diagonal
};

inline constexpr double kMaxJitter = 1e-2;

/// Factors a + jitter*I = L L^T. On failure the jitter is escalated by x10
/// (starting from 1e-10 when zero) until kMaxJitter; throws NumericalError if
/// the matrix is still not positive definite.
CholeskyResult cholesky(const Matrix& a, double jitter = 0.0);

/// Solves L L^T x = b given the lower factor.
std::vector<double> cholesky_solve(const Matrix& lower, std::span<const double> b);
/// Solves L x = b.
std::vector<double> forward_substitute(const Matrix& lower, std::span<const double> b);
/// Solves L^T x = b.
std::vector<double> backward_substitute_t(const Matrix& lower, std::span<const double> b);
/// Inverse of L L^T.
Matrix cholesky_inverse(const Matrix& lower);
double cholesky_log_det(const Matrix& lower);

/// Solves the symmetric positive definite system a x = b.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

/// Seeded generator whose streams are identical across platforms and
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes several integers into one seed (splitmix64 based).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

enum class Activation { kIdentity, kRelu };

/// Feed-forward network: affine layers with ReLU between them. The last
/// layer uses `output_activation`.
struct MlpParams {
  std::vector<std::size_t> layer_sizes;  // input width first
  std::vector<Matrix> weights;           // weights[l] is (out x in)
  std::vector<std::vector<double>> biases;
  Activation output_activation = Activation::kIdentity;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_params() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Fan-in scaled uniform initialization: every weight and bias drawn from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
MlpParams init_mlp(std::vector<std::size_t> layer_sizes, std::uint64_t seed,
                   Activation output_activation = Activation::kIdentity);

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x);

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  std::vector<double> input;
};

/// Gradients of dot(mlp_forward(p, x), upstream) w.r.t. every parameter and x.
MlpGrads mlp_backward(const MlpParams& p, std::span<const double> x,
                      std::span<const double> upstream);

/// Parameter order: per layer, weights row-major then biases.
std::vector<double> flatten(const MlpParams& p);
std::vector<double> flatten(const MlpGrads& g);
void unflatten(MlpParams& p, std::span<const double> flat);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<double> numeric;
};

/// Compares `analytic` against central differences of f at `at` (h = 1e-5).
/// Relative error uses max(1, |analytic|, |numeric|) as the denominator.
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> analytic, std::span<const double> at,
                           double h = 1e-5);

}  // namespace xferlens
