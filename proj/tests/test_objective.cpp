#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ddc/objective.hpp"
#include "oracles.hpp"

using namespace ddc;

namespace {

GaussianLatentd gauss(std::initializer_list<double> m, std::initializer_list<double> s) {
  GaussianLatentd g;
  g.mean = Eigen::Map<const Eigen::VectorXd>(m.begin(), static_cast<Eigen::Index>(m.size()));
  g.stddev = Eigen::Map<const Eigen::VectorXd>(s.begin(), static_cast<Eigen::Index>(s.size()));
  return g;
}

struct TinyFixture {
  HyperConfig hyper = oracle::tiny_hyper();
  ModelParams params = oracle::tiny_params(hyper, 4);
  std::mt19937_64 rng{5};
  XBatch bx;
  YBatch by;

  explicit TinyFixture(Eigen::Index n = 1) {
    bx.x_t = oracle::random_images(rng, n, hyper.pixels());
    bx.x_next = oracle::random_images(rng, n, hyper.pixels());
    bx.u = oracle::random_images(rng, n, 2).array() * 6.0 - 3.0;
    by.y_t = oracle::random_images(rng, n, hyper.pixels());
    by.x_t = oracle::random_images(rng, n, hyper.pixels());
  }
};

}  // namespace

TEST_CASE("gaussian_kl closed form") {
  CHECK(gaussian_kl(gauss({0.3, -1}, {0.5, 2}), gauss({0.3, -1}, {0.5, 2})) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(gaussian_kl(gauss({0}, {1}), gauss({1}, {1})) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(gaussian_kl(gauss({0}, {2}), gauss({0}, {1})) == doctest::Approx(2.0 - 0.5 - std::log(2.0)).epsilon(1e-12));
  CHECK(oracle::kl_1d(0, 1, 1, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(oracle::kl_1d(0, 2, 0, 1) == doctest::Approx(0.80685).epsilon(1e-5));
  CHECK_THROWS_AS(gaussian_kl(gauss({0, 0}, {1, 1}), gauss({0}, {1})), std::invalid_argument);

  // Zero only at q = p.
  const GaussianLatentd p = gauss({0.1, 0.2}, {0.7, 1.3});
  GaussianLatentd q = p;
  q.mean(1) += 1e-3;
  CHECK(gaussian_kl(q, p) > 0.0);
}

TEST_CASE("gaussian_kl and entropy agree with quadrature on random instances") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> sd(0.2, 3.0);
  for (int dim : {1, 5})
    for (int trial = 0; trial < 20; ++trial) {
      GaussianLatentd q, p;
      q.mean = Eigen::VectorXd::NullaryExpr(dim, [&] { return nd(rng); });
      p.mean = Eigen::VectorXd::NullaryExpr(dim, [&] { return nd(rng); });
      q.stddev = Eigen::VectorXd::NullaryExpr(dim, [&] { return sd(rng); });
      p.stddev = Eigen::VectorXd::NullaryExpr(dim, [&] { return sd(rng); });
      CHECK(std::abs(gaussian_kl(q, p) - oracle::kl_diag(q.mean, q.stddev, p.mean, p.stddev)) < 1e-6);
      CHECK(std::abs(gaussian_entropy(q) - oracle::entropy_diag(q.mean, q.stddev)) < 1e-6);
    }
}

TEST_CASE("gaussian_entropy identities") {
  const double h1 = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  CHECK(gaussian_entropy(gauss({0}, {1})) == doctest::Approx(1.41894).epsilon(1e-5));
  CHECK(gaussian_entropy(gauss({0}, {1})) == doctest::Approx(h1).epsilon(1e-14));
  CHECK(gaussian_entropy(gauss({0, 0}, {1, 1})) == doctest::Approx(2 * h1).epsilon(1e-14));
  CHECK(gaussian_entropy(gauss({0, 0}, {2, 1})) - gaussian_entropy(gauss({0, 0}, {1, 1})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("bernoulli_loglik") {
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(1600, 0.5);
  CHECK(bernoulli_loglik(half, half) == doctest::Approx(1600 * std::log(0.5)));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(0.01, 0.99);
  const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(1600, [&] { return ud(rng); });
  const Eigen::VectorXd m = Eigen::VectorXd::NullaryExpr(1600, [&] { return ud(rng); });
  CHECK(std::abs(bernoulli_loglik(x, m) - oracle::bernoulli_loop(x, m)) < 1e-10);

  // Binary targets: the value rises toward 0 as the means approach them.
  Eigen::VectorXd bin = (x.array() > 0.5).cast<double>();
  double prev = -1e300;
  for (double eps : {0.3, 0.1, 1e-3, 1e-6}) {
    const Eigen::VectorXd near = bin.array() * (1 - eps) + (1 - bin.array()) * eps;
    const double v = bernoulli_loglik(bin, near);
    CHECK(v < 0.0);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(prev > -1e-2);

  // The tape version with logits agrees, and the sum ignores pixel order.
  ad::Tape t;
  const Eigen::VectorXd logits = (m.array() / (1 - m.array())).log();
  const double tape_val =
      terms::bernoulli_loglik_logits(t.constant(x.transpose()), t.constant(logits.transpose())).value()(0, 0);
  CHECK(tape_val == doctest::Approx(oracle::bernoulli_loop(x, m)).epsilon(1e-12));
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(1600);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 1600, rng);
  CHECK(bernoulli_loglik(perm * x, perm * m) == doctest::Approx(bernoulli_loglik(x, m)).epsilon(1e-12));
}

TEST_CASE("tape terms match the closed forms") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> sd(0.2, 2.0);
  Eigen::MatrixXd qm = Eigen::MatrixXd::Random(3, 2), pm = Eigen::MatrixXd::Random(3, 2);
  Eigen::MatrixXd qs = Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return sd(rng); });
  Eigen::MatrixXd ps = Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return sd(rng); });
  ad::Tape t;
  const Eigen::MatrixXd kl = terms::gaussian_kl(t.constant(qm), t.constant(qs), t.constant(pm), t.constant(ps)).value();
  const Eigen::MatrixXd h = terms::gaussian_entropy(t.constant(qs)).value();
  const Eigen::MatrixXd lp = terms::gaussian_log_density(t.constant(pm), t.constant(qm), t.constant(qs)).value();
  for (int i = 0; i < 3; ++i) {
    const GaussianLatentd q{qm.row(i).transpose(), qs.row(i).transpose()};
    const GaussianLatentd p{pm.row(i).transpose(), ps.row(i).transpose()};
    CHECK(std::abs(kl(i, 0) - gaussian_kl(q, p)) < 1e-12);
    CHECK(std::abs(h(i, 0) - gaussian_entropy(q)) < 1e-12);
    CHECK(std::abs(lp(i, 0) - gaussian_log_density(q, p.mean)) < 1e-12);
  }
}

TEST_CASE("elbo bookkeeping and determinism") {
  TinyFixture f(4);
  std::mt19937_64 rng(1);
  const NoiseX nx = draw_noise_x(4, f.hyper, rng);
  const NoiseY ny = draw_noise_y(4, f.hyper, rng);
  const auto ex = elbo_x_batch(f.bx, f.params, nx);
  const auto ex2 = elbo_x_batch(f.bx, f.params, nx);
  const auto ey = elbo_y_batch(f.by, f.params, ny);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    CHECK(ex[i].total == doctest::Approx(ex[i].x_total()).epsilon(1e-12));
    CHECK(ex[i].total == ex2[i].total);
    CHECK(ex[i].recon_x == ex2[i].recon_x);
    CHECK(ex[i].kl_zbar >= 0.0);
    CHECK(ex[i].kl_wx >= 0.0);
    CHECK(ey[i].total == doctest::Approx(ey[i].y_total()).epsilon(1e-12));
    CHECK(ey[i].kl_v >= 0.0);
    CHECK(ey[i].kl_wy >= 0.0);

    // Entropy is the closed form of the posterior actually used.
    const GaussianLatentd q = encode_dynamics_batch(f.bx.x_next.row(i), f.params).row(0);
    CHECK(std::abs(ex[i].entropy_zhat - gaussian_entropy(q)) < 1e-10);
  }
}

TEST_CASE("kl_v is non-negative when y equals x") {
  TinyFixture f(8);
  f.by.y_t = f.by.x_t;
  std::mt19937_64 rng(2);
  for (const auto& e : elbo_y_batch(f.by, f.params, draw_noise_y(8, f.hyper, rng))) CHECK(e.kl_v >= 0.0);
}

TEST_CASE("total_loss on single records and with beta_y = 0") {
  TinyFixture f(1);
  std::mt19937_64 rng(3);
  const NoiseX nx = draw_noise_x(1, f.hyper, rng);
  const NoiseY ny = draw_noise_y(1, f.hyper, rng);
  const double beta = 0.7;
  const LossResult r = total_loss(f.bx, f.by, f.params, beta, nx, ny, false);
  const double ex = elbo_x_batch(f.bx, f.params, nx)[0].total;
  const double ey = elbo_y_batch(f.by, f.params, ny)[0].total;
  CHECK(r.loss == doctest::Approx(-(ex + beta * ey)).epsilon(1e-12));

  const LossResult r0 = total_loss(f.bx, f.by, f.params, 0.0, nx, ny, true);
  CHECK(r0.loss == doctest::Approx(-ex).epsilon(1e-12));
  CHECK(r0.grads.at("prior.mu_wy").norm() == 0.0);
  CHECK(r0.grads.at("prior.mu_wx").norm() > 0.0);

  CHECK_THROWS_AS(total_loss(XBatch{}, f.by, f.params, beta, nx, ny, false), std::invalid_argument);
}

TEST_CASE("total_loss gradient matches central differences on the tiny model") {
  TinyFixture f(1);
  f.params.hyper.block_prior_gradient = false;
  std::mt19937_64 rng(4);
  const NoiseX nx = draw_noise_x(1, f.hyper, rng);
  const NoiseY ny = draw_noise_y(1, f.hyper, rng);
  const auto check = oracle::check_total_loss_gradient(f.params, f.bx, f.by, nx, ny);
  // Every block must actually carry gradient, or the comparison is vacuous.
  for (const auto& [name, g] : total_loss(f.bx, f.by, f.params, 1.0, nx, ny, true).grads) {
    INFO(name);
    CHECK(g.norm() > 0.0);
  }
  for (const auto& [name, err] : check.per_block) {
    INFO(name);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("blocked prior gradient matches differences with the prior frozen") {
  TinyFixture f(1);
  f.params.hyper.block_prior_gradient = true;
  std::mt19937_64 rng(6);
  const NoiseX nx = draw_noise_x(1, f.hyper, rng);
  const NoiseY ny = draw_noise_y(1, f.hyper, rng);
  const auto check = oracle::check_total_loss_gradient(f.params, f.bx, f.by, nx, ny, 1e-4, true);
  for (const auto& [name, err] : check.per_block) {
    INFO(name);
    CHECK(err < 1e-3);
  }
  // Blocking changes the dynamics-encoder gradient, nothing else.
  ModelParams open = f.params;
  open.hyper.block_prior_gradient = false;
  const auto blocked = total_loss(f.bx, f.by, f.params, 1.0, nx, ny, true).grads;
  const auto flowing = total_loss(f.bx, f.by, open, 1.0, nx, ny, true).grads;
  CHECK((blocked.at("enc_dyn.conv0.w") - flowing.at("enc_dyn.conv0.w")).norm() > 0.0);
  CHECK((blocked.at("dec.fc0.w") - flowing.at("dec.fc0.w")).norm() == 0.0);
}

TEST_CASE("Monte Carlo averages agree with a high-sample estimate") {
  TinyFixture f(1);
  auto mc = [&](auto&& batch_fn, Eigen::Index samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double sum = 0.0, sq = 0.0;
    const Eigen::Index chunk = 5000;
    for (Eigen::Index done = 0; done < samples; done += chunk) {
      const Eigen::Index n = std::min(chunk, samples - done);
      for (double v : batch_fn(n, rng)) {
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / samples;
    return std::pair{mean, (sq / samples - mean * mean) / samples};  // mean, squared standard error
  };
  auto x_fn = [&](Eigen::Index n, std::mt19937_64& rng) {
    XBatch b{f.bx.x_t.replicate(n, 1), f.bx.u.replicate(n, 1), f.bx.x_next.replicate(n, 1)};
    std::vector<double> out;
    for (const auto& e : elbo_x_batch(b, f.params, draw_noise_x(n, f.hyper, rng))) out.push_back(e.total);
    return out;
  };
  auto y_fn = [&](Eigen::Index n, std::mt19937_64& rng) {
    YBatch b{f.by.y_t.replicate(n, 1), f.by.x_t.replicate(n, 1)};
    std::vector<double> out;
    for (const auto& e : elbo_y_batch(b, f.params, draw_noise_y(n, f.hyper, rng))) out.push_back(e.total);
    return out;
  };
  const auto [xs, xs_se2] = mc(x_fn, 1000, 100);
  const auto [xl, xl_se2] = mc(x_fn, 100000, 200);
  CHECK(std::abs(xs - xl) < 3.0 * std::sqrt(xs_se2 + xl_se2));
  const auto [ys, ys_se2] = mc(y_fn, 1000, 300);
  const auto [yl, yl_se2] = mc(y_fn, 100000, 400);
  CHECK(std::abs(ys - yl) < 3.0 * std::sqrt(ys_se2 + yl_se2));
}
