#include <doctest.h>

#include <functional>
#include <random>

#include "ddc/autodiff.hpp"
#include "ddc/transition.hpp"

using namespace ddc;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

double evaluate(const Builder& f, const std::vector<Mat>& inputs) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.constant(m));
  return f(t, vars).value()(0, 0);
}

// Max relative error between tape gradients and central differences.
double gradient_error(const Builder& f, std::vector<Mat> inputs, double h = 1e-6) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.leaf(m));
  const Var out = f(t, vars);
  t.backward(out);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat analytic = t.grad(vars[k]).size() ? t.grad(vars[k]) : Mat::Zero(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k].data()[i];
      inputs[k].data()[i] = saved + h;
      const double up = evaluate(f, inputs);
      inputs[k].data()[i] = saved - h;
      const double down = evaluate(f, inputs);
      inputs[k].data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double a = analytic.data()[i];
      worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

// Random linear functional to turn a matrix output into a scalar.
Var probe(Tape& t, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(y, t.constant(random_mat(rng, y.rows(), y.cols()))));
}

}  // namespace

TEST_CASE("elementwise and linear ops match central differences") {
  std::mt19937_64 rng(1);
  const Mat a = random_mat(rng, 3, 4), b = random_mat(rng, 3, 4);
  const Mat w = random_mat(rng, 4, 2), row = random_mat(rng, 1, 2), col = random_mat(rng, 3, 1);
  const Mat pos = a.array().abs() + 0.5;

  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::mul(v[0], v[1]), 7); }, {a, b}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::div(v[0], v[1]), 7); }, {a, pos}) < 1e-6);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::add_row(ad::matmul(v[0], v[1]), v[2]), 3); },
                       {a, w, row}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::scale_rows(v[0], v[1]), 5); }, {a, col}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::softplus(v[0]), 5); }, {a}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::sigmoid(v[0]), 5); }, {a}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::log(v[0]), 5); }, {pos}) < 1e-6);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::exp(v[0]), 5); }, {a}) < 1e-6);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::square(v[0]), 5); }, {a}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::sum_cols(v[0]), 5); }, {a}) < 1e-7);
  CHECK(gradient_error([](Tape& t, auto& v) { return probe(t, ad::mean_rows(v[0]), 5); }, {a}) < 1e-7);
  CHECK(gradient_error(
            [](Tape& t, auto& v) { return probe(t, ad::concat_cols(ad::slice_cols(v[0], 1, 2), v[1]), 9); },
            {a, b}) < 1e-7);
}

TEST_CASE("detach blocks gradient flow") {
  Tape t;
  const Var x = t.leaf(Mat::Constant(1, 1, 2.0));
  const Var y = ad::add(ad::mul(x, x), ad::mul(ad::detach(x), x));
  t.backward(ad::sum(y));
  CHECK(t.grad(x)(0, 0) == doctest::Approx(2 * 2.0 + 2.0));
}

TEST_CASE("batched small-matrix ops match central differences") {
  std::mt19937_64 rng(2);
  const int n = 3, rank = 2;
  const Mat A = random_mat(rng, 4, n * n, 0.3);
  Mat Ainv = A;
  for (Eigen::Index i = 0; i < 4; ++i)
    for (int k = 0; k < n; ++k) Ainv(i, k * n + k) += 2.0;  // keep well conditioned
  const Mat x = random_mat(rng, 4, n), bm = random_mat(rng, 4, n * 2), u = random_mat(rng, 4, 2);
  const Mat U = random_mat(rng, 4, n * rank), V = random_mat(rng, 4, n * rank);

  CHECK(gradient_error([=](Tape& t, auto& v) { return probe(t, ad::batched_matvec(v[0], v[1], n, n), 4); },
                       {A, x}) < 1e-7);
  CHECK(gradient_error([=](Tape& t, auto& v) { return probe(t, ad::batched_matvec(v[0], v[1], n, 2), 4); },
                       {bm, u}) < 1e-7);
  CHECK(gradient_error([=](Tape& t, auto& v) { return probe(t, ad::batched_solve(v[0], v[1], n), 4); },
                       {Ainv, x}) < 1e-6);
  CHECK(gradient_error([=](Tape& t, auto& v) { return probe(t, ad::batched_lowrank(v[0], v[1], n, rank), 4); },
                       {U, V}) < 1e-7);
}

TEST_CASE("determinant guard: scaling hits the floor and differentiates implicitly") {
  const int n = 2;
  const double floor = 1e-2;
  // Rank 1 with r^T v = -1.5: unscaled det = -0.5 < floor.
  Mat u(1, n), v(1, n);
  u << 1.0, 0.5;
  v << -1.0, -1.0;
  {
    Tape t;
    const Var s = ad::determinant_guard(t.constant(u), t.constant(v), n, 1, floor);
    const double m = (u.row(0).dot(v.row(0)));
    CHECK(s.value()(0, 0) == doctest::Approx((floor - 1.0) / m));
    CHECK(1.0 + s.value()(0, 0) * m == doctest::Approx(floor));
  }
  CHECK(gradient_error([=](Tape&, auto& w) { return ad::sum(ad::determinant_guard(w[0], w[1], n, 1, floor)); },
                       {u, v}) < 1e-6);

  // Rank 2 with an active guard; the bisected root is differentiated through
  // det(I + s M) = floor.
  const int r = 2;
  Mat U2(1, n * r), V2(1, n * r);
  U2 << -1.2, 0.1, 0.2, -0.9;
  V2 << 1.0, 0.0, 0.0, 1.0;
  {
    Tape t;
    const Var s = ad::determinant_guard(t.constant(U2), t.constant(V2), n, r, floor);
    Eigen::Matrix2d Um, Vm;
    Um << U2(0, 0), U2(0, 2), U2(0, 1), U2(0, 3);
    Vm << V2(0, 0), V2(0, 2), V2(0, 1), V2(0, 3);
    const double det = (Eigen::Matrix2d::Identity() + s.value()(0, 0) * Vm.transpose() * Um).determinant();
    CHECK(s.value()(0, 0) < 1.0);
    CHECK(det == doctest::Approx(floor).epsilon(1e-9));
  }
  CHECK(gradient_error([=](Tape&, auto& w) { return ad::sum(ad::determinant_guard(w[0], w[1], n, r, floor)); },
                       {U2, V2}, 1e-7) < 1e-4);
}

TEST_CASE("im2col and col2im are adjoint") {
  std::mt19937_64 rng(3);
  const ad::ConvGeometry g{2, 6, 6, 3, 2, 1};
  const Mat x = random_mat(rng, 3, 2 * 36);
  const Mat cols = ad::im2col(x, g);
  const Mat y = random_mat(rng, cols.rows(), cols.cols());
  CHECK(cols.cwiseProduct(y).sum() == doctest::Approx(x.cwiseProduct(ad::col2im(y, g, 3)).sum()));
}

TEST_CASE("convolutions match central differences") {
  std::mt19937_64 rng(4);
  const ad::ConvGeometry g{2, 4, 4, 3, 2, 1};  // -> 2x2
  const Mat x = random_mat(rng, 2, 2 * 16);
  const Mat w = random_mat(rng, 3, g.patch_size(), 0.5);
  const Mat b = random_mat(rng, 1, 3);
  CHECK(gradient_error([=](Tape& t, auto& v) { return probe(t, ad::conv2d(v[0], v[1], v[2], g), 11); }, {x, w, b}) <
        1e-7);

  const ad::ConvGeometry up{3, 4, 4, 4, 2, 1};  // 2x2 -> 4x4, 2 -> 3 channels
  const Mat xi = random_mat(rng, 2, 2 * 4);
  const Mat wt = random_mat(rng, 2, up.patch_size(), 0.5);
  const Mat bt = random_mat(rng, 1, 3);
  CHECK(gradient_error([=](Tape& t, auto& v) { return probe(t, ad::conv_transpose2d(v[0], v[1], v[2], up), 12); },
                       {xi, wt, bt}) < 1e-7);
}

TEST_CASE("conv2d agrees with a direct loop") {
  std::mt19937_64 rng(5);
  const ad::ConvGeometry g{1, 5, 5, 3, 2, 1};
  const Mat x = random_mat(rng, 1, 25), w = random_mat(rng, 1, 9), b = Mat::Zero(1, 1);
  Tape t;
  const Mat y = ad::conv2d(t.constant(x), t.constant(w), t.constant(b), g).value();
  REQUIRE(y.cols() == 9);
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 3; ++ox) {
      double s = 0.0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = 2 * oy - 1 + ky, ix = 2 * ox - 1 + kx;
          if (iy >= 0 && iy < 5 && ix >= 0 && ix < 5) s += w(0, ky * 3 + kx) * x(0, iy * 5 + ix);
        }
      CHECK(y(0, oy * 3 + ox) == doctest::Approx(s));
    }
}
