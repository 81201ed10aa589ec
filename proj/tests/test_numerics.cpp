#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/numerics.hpp"

using namespace xferlens;
using xferlens::testing::random_matrix;
using xferlens::testing::to_eigen;

TEST_CASE("cholesky of the identity is the identity") {
  const auto r = cholesky(Matrix::identity(3));
  CHECK(r.lower == Matrix::identity(3));
  CHECK(r.jitter == 0.0);
}

TEST_CASE("cholesky of a 2x2 by hand") {
  const auto r = cholesky(Matrix::from_rows({{4, 2}, {2, 3}}));
  CHECK(r.lower(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.lower(0, 1) == 0.0);
  CHECK(r.lower(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.lower(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("cholesky reconstructs random PSD matrices") {
  Rng rng(7);
  for (std::size_t n : {1u, 2u, 5u, 10u, 25u, 50u}) {
    const Matrix b = random_matrix(n + 3, n, rng);
    const Matrix a = matmul(b.transposed(), b);
    const auto r = cholesky(a, 0.0);
    const Eigen::MatrixXd l = to_eigen(r.lower);
    Eigen::MatrixXd target = to_eigen(a);
    target.diagonal().array() += r.jitter;
    const double err = (l * l.transpose() - target).norm() / target.norm();
    CHECK(err < 1e-8);
    CHECK(l.isLowerTriangular());
  }
}

TEST_CASE("cholesky escalates jitter on a singular matrix") {
  // rank one: needs jitter to factor
  const Matrix a = Matrix::from_rows({{1, 1}, {1, 1}});
  const auto r = cholesky(a, 0.0);
  CHECK(r.jitter > 0.0);
  CHECK(r.jitter <= kMaxJitter);
}

TEST_CASE("cholesky fails on an indefinite matrix") {
  CHECK_THROWS_AS(cholesky(Matrix::from_rows({{1, 0}, {0, -1}})), NumericalError);
}

TEST_CASE("cholesky solve matches Eigen") {
  Rng rng(3);
  const Matrix b = random_matrix(8, 6, rng);
  const Matrix a = matmul(b.transposed(), b);
  const auto rhs = xferlens::testing::random_vector(6, rng);
  const auto x = solve_spd(a, rhs);
  const Eigen::VectorXd expect = to_eigen(a).ldlt().solve(
      Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size())));
  for (std::size_t i = 0; i < 6; ++i) CHECK(x[i] == doctest::Approx(expect(i)).epsilon(1e-9));
  const auto l = cholesky(a).lower;
  CHECK(cholesky_log_det(l) ==
        doctest::Approx(std::log(to_eigen(a).determinant())).epsilon(1e-9));
}

TEST_CASE("mlp_forward with zero parameters is zero") {
  MlpParams p = init_mlp({3, 4, 2}, 1);
  std::vector<double> zeros(p.num_params(), 0.0);
  unflatten(p, zeros);
  const auto y = mlp_forward(p, std::vector<double>{1.0, -2.0, 3.0});
  CHECK(y == std::vector<double>{0.0, 0.0});
}

TEST_CASE("mlp_forward identity single layer") {
  MlpParams p = init_mlp({3, 3}, 1);
  p.weights[0] = Matrix::identity(3);
  p.biases[0] = {0, 0, 0};
  const std::vector<double> x{0.5, -1.5, 2.0};
  CHECK(mlp_forward(p, x) == x);
}

TEST_CASE("mlp_forward 2-3-2 by hand") {
  MlpParams p = init_mlp({2, 3, 2}, 1);
  p.weights[0] = Matrix::from_rows({{1, 0}, {0, 1}, {1, -1}});
  p.biases[0] = {0.0, -1.0, 0.5};
  p.weights[1] = Matrix::from_rows({{1, 1, 1}, {2, 0, -1}});
  p.biases[1] = {0.1, 0.0};
  // x = (1, 2): pre = (1, 1, -0.5), relu = (1, 1, 0)
  const auto y = mlp_forward(p, std::vector<double>{1.0, 2.0});
  CHECK(y[0] == doctest::Approx(2.1));
  CHECK(y[1] == doctest::Approx(2.0));
}

TEST_CASE("mlp_forward rejects a wrong input size") {
  const MlpParams p = init_mlp({3, 2}, 1);
  CHECK_THROWS(mlp_forward(p, std::vector<double>{1.0, 2.0}));
}

TEST_CASE("mlp_backward of a linear layer is W^T upstream") {
  Rng rng(5);
  MlpParams p = init_mlp({4, 3}, 9);
  const std::vector<double> x{0.1, 0.2, -0.3, 0.4};
  const std::vector<double> up{1.0, -2.0, 0.5};
  const auto g = mlp_backward(p, x, up);
  const auto expect = matvec_t(p.weights[0], up);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.input[i] == doctest::Approx(expect[i]));
  for (std::size_t o = 0; o < 3; ++o) {
    CHECK(g.biases[0][o] == up[o]);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.weights[0](o, i) == doctest::Approx(up[o] * x[i]));
  }
}

TEST_CASE("mlp_backward with inactive ReLU stops the gradient") {
  MlpParams p = init_mlp({2, 3, 1}, 2);
  p.biases[0] = {-100, -100, -100};
  const auto g = mlp_backward(p, std::vector<double>{0.3, 0.4}, std::vector<double>{1.0});
  for (double v : g.input) CHECK(v == 0.0);
  for (double v : g.weights[0].data()) CHECK(v == 0.0);
  for (double v : g.biases[0]) CHECK(v == 0.0);
}

TEST_CASE("mlp_backward agrees with finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 100);
    for (Activation act : {Activation::kIdentity, Activation::kRelu}) {
      const MlpParams p = init_mlp({9, 50, 10}, seed, act);
      const auto x = xferlens::testing::random_vector(9, rng);
      const auto up = xferlens::testing::random_vector(10, rng);
      const auto g = mlp_backward(p, x, up);
      const auto f = [&](std::span<const double> flat) {
        MlpParams q = p;
        unflatten(q, flat);
        return dot(mlp_forward(q, x), up);
      };
      CHECK(grad_check(f, flatten(g), flatten(p)).max_relative_error < 1e-5);
      const auto fx = [&](std::span<const double> xx) { return dot(mlp_forward(p, xx), up); };
      CHECK(grad_check(fx, g.input, x).max_relative_error < 1e-5);
    }
  }
}

TEST_CASE("grad_check on a quadratic and a constant") {
  const std::vector<double> at{0.3, -1.2, 4.0};
  std::vector<double> analytic;
  for (double v : at) analytic.push_back(2 * v);
  const auto q = [](std::span<const double> w) { return squared_norm(w); };
  CHECK(grad_check(q, analytic, at).max_relative_error < 1e-9);
  const auto c = [](std::span<const double>) { return 3.0; };
  const std::vector<double> zero(3, 0.0);
  const auto r = grad_check(c, zero, at);
  CHECK(r.max_relative_error == 0.0);
  for (double v : r.numeric) CHECK(v == 0.0);
}

TEST_CASE("grad_check rejects non-finite values") {
  const auto f = [](std::span<const double>) { return std::nan(""); };
  const std::vector<double> at{1.0};
  CHECK_THROWS(grad_check(f, at, at));
}

TEST_CASE("init_mlp is deterministic per seed") {
  CHECK(init_mlp({9, 50, 10}, 42) == init_mlp({9, 50, 10}, 42));
  CHECK_FALSE(init_mlp({9, 50, 10}, 42) == init_mlp({9, 50, 10}, 43));
  const MlpParams p = init_mlp({4, 6}, 1);
  for (double v : flatten(p)) CHECK(std::abs(v) <= 0.5);
}

TEST_CASE("flatten and unflatten round trip") {
  MlpParams p = init_mlp({3, 5, 2}, 11);
  const auto flat = flatten(p);
  CHECK(flat.size() == p.num_params());
  MlpParams q = init_mlp({3, 5, 2}, 12);
  unflatten(q, flat);
  CHECK(q == p);
}

TEST_CASE("rng streams are reproducible") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.below(7) < 7);
  }
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}
