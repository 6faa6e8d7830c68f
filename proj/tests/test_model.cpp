#include <doctest.h>

#include <cmath>
#include <random>

#include "ddc/model.hpp"
#include "ddc/transition.hpp"

using namespace ddc;

namespace {

Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return nd(rng); });
}

Image random_image(std::mt19937_64& rng, int pixels) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  return Image::NullaryExpr(pixels, [&] { return ud(rng); });
}

TransitionParamsd random_transition(std::mt19937_64& rng, int d, int m, int r) {
  return make_low_rank_transition<double>(gaussian_matrix(rng, d, r), gaussian_matrix(rng, d, r),
                                          gaussian_matrix(rng, d, m), gaussian_matrix(rng, d, 1), 1e-2);
}

double softplus(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST_CASE("init is deterministic in the seed and sets identity dynamics") {
  const HyperConfig h;
  const ModelParams a = init_params(h, 1), b = init_params(h, 1), c = init_params(h, 2);
  CHECK(a.blocks == b.blocks);
  CHECK_FALSE(a.blocks == c.blocks);
  CHECK(a.all_finite());
  CHECK(a.blocks.count("enc_dyn_y.fc1.w") == 0);
  CHECK(a.at("prior.mu_wx") == Eigen::MatrixXd::Ones(1, 2));
  CHECK(a.at("prior.mu_wy") == -Eigen::MatrixXd::Ones(1, 2));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const TransitionParamsd tp = transition_params(gaussian_matrix(rng, 2, 1, 5.0), a);
    CHECK(tp.A == Eigen::Matrix2d::Identity());
    CHECK(tp.B.isZero(0.0));
    CHECK(tp.c.isZero(0.0));
  }
}

TEST_CASE("hyper config validation and round trip") {
  HyperConfig h;
  h.latent_dim = 1;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = HyperConfig{};
  h.std_floor = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = HyperConfig{};
  h.content_dim = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = HyperConfig{};
  h.conv_channels = {8, 8, 8, 8};  // 40 is not divisible by 16
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);

  HyperConfig custom;
  custom.latent_dim = 3;
  custom.conv_channels = {4, 8};
  custom.block_prior_gradient = false;
  KeyValues kv;
  write_hyper_config(custom, "model.", kv);
  KeyReader reader(kv);
  const HyperConfig back = read_hyper_config(reader, "model.");
  CHECK(back.latent_dim == 3);
  CHECK(back.conv_channels == custom.conv_channels);
  CHECK_FALSE(back.block_prior_gradient);
}

TEST_CASE("zeroed encoder head gives mean 0 and the floored softplus stddev") {
  HyperConfig h;
  ModelParams p = init_params(h, 4);
  p.blocks["enc_dyn.fc1.w"].setZero();
  p.blocks["enc_dyn.fc1.b"].setZero();
  std::mt19937_64 rng(5);
  const GaussianLatentd q = encode_dynamics(random_image(rng, h.pixels()), p);
  CHECK(q.mean.isZero(0.0));
  for (Eigen::Index i = 0; i < q.dim(); ++i) CHECK(q.stddev(i) == doctest::Approx(softplus(0.0) + h.std_floor));
}

TEST_CASE("encoders are deterministic and respect the floor") {
  HyperConfig h;
  const ModelParams p = init_params(h, 6);
  std::mt19937_64 rng(7);
  const Image x = random_image(rng, h.pixels());
  const GaussianLatentd a = encode_dynamics(x, p), b = encode_dynamics(x, p);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
  CHECK(encode_content(x, p).mean == encode_content(x, p).mean);
  CHECK(encode_content(x, p).dim() == h.content_dim);
  const GaussianLatentd back = backward_encode(x, Eigen::Vector2d(0.3, -2.0), p);
  CHECK(back.stddev.minCoeff() >= h.std_floor);
  CHECK(back.mean == backward_encode(x, Eigen::Vector2d(0.3, -2.0), p).mean);
  CHECK(a.stddev.minCoeff() >= h.std_floor);

  // Batch and single-image paths agree.
  Eigen::MatrixXd batch(2, h.pixels());
  batch.row(0) = x.transpose();
  batch.row(1) = random_image(rng, h.pixels()).transpose();
  CHECK(encode_dynamics_batch(batch, p).mean.row(0).transpose().isApprox(a.mean, 1e-12));
}

TEST_CASE("all four dynamics roles consult one parameter node") {
  const HyperConfig h;
  const ModelParams p = init_params(h, 8);
  ad::Tape tape;
  ModelGraph g(p, tape, true);
  std::mt19937_64 rng(9);
  const ad::Var img = g.input(random_image(rng, h.pixels()).transpose());
  g.encode_dynamics(img, DynamicsRole::next_posterior);
  const auto after_first = g.bound();
  for (DynamicsRole role : {DynamicsRole::backward_prior, DynamicsRole::state_prior, DynamicsRole::y_posterior}) {
    CHECK(dynamics_encoder_block(role, h) == "enc_dyn");
    g.encode_dynamics(img, role);
    REQUIRE(g.bound().size() == after_first.size());
    for (const auto& [name, var] : after_first) CHECK(g.bound().at(name).id == var.id);
  }

  HyperConfig split = h;
  split.share_dynamics_encoder = false;
  CHECK(dynamics_encoder_block(DynamicsRole::y_posterior, split) == "enc_dyn_y");
  CHECK(dynamics_encoder_block(DynamicsRole::state_prior, split) == "enc_dyn");
  CHECK(init_params(split, 1).blocks.count("enc_dyn_y.fc1.w") == 1);
}

TEST_CASE("decoder outputs stay strictly inside (0, 1)") {
  const HyperConfig h;
  const ModelParams p = init_params(h, 10);
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd z = gaussian_matrix(rng, 1000, 2, 10.0), w = gaussian_matrix(rng, 1000, 2, 10.0);
  const Eigen::MatrixXd m = decode_batch(z, w, p);
  CHECK(m.rows() == 1000);
  CHECK(m.cols() == 1600);
  CHECK(m.minCoeff() > 0.0);
  CHECK(m.maxCoeff() < 1.0);
  CHECK_THROWS_AS(decode(Eigen::Vector2d(NAN, 0), Eigen::Vector2d(0, 0), p), NumericError);
}

TEST_CASE("network outputs are finite for extreme finite pixels") {
  const HyperConfig h;
  ModelParams p = init_params(h, 12);
  // Non-trivial transition heads, so the guard is exercised too.
  std::mt19937_64 rng(13);
  p.blocks["trans.fc2.w"] = gaussian_matrix(rng, h.transition_hidden, p.at("trans.fc2.w").cols(), 1.0);
  std::uniform_real_distribution<double> ud(-1e6, 1e6);
  for (int i = 0; i < 20; ++i) {
    const Image x = Image::NullaryExpr(h.pixels(), [&] { return ud(rng); });
    const GaussianLatentd q = encode_dynamics(x, p);
    CHECK(q.is_valid());
    CHECK(encode_content(x, p).is_valid());
    CHECK(backward_encode(x, q.mean, p).is_valid());
    const TransitionParamsd tp = transition_params(q.mean, p);
    CHECK(tp.is_finite());
    CHECK(std::abs(tp.A.determinant()) >= h.det_floor * (1 - 1e-9));
    CHECK(decode(q.mean, encode_content(x, p).mean, p).allFinite());
  }
}

TEST_CASE("determinant guard holds for random latent inputs") {
  const HyperConfig h;
  ModelParams p = init_params(h, 14);
  std::mt19937_64 rng(15);
  p.blocks["trans.fc2.w"] = gaussian_matrix(rng, h.transition_hidden, p.at("trans.fc2.w").cols(), 2.0);
  p.blocks["trans.fc2.b"] = gaussian_matrix(rng, 1, p.at("trans.fc2.b").cols(), 2.0);
  int guarded = 0;
  for (int i = 0; i < 1000; ++i) {
    const TransitionParamsd tp = transition_params(gaussian_matrix(rng, 2, 1, 3.0), p);
    const double det = tp.A.determinant();
    CHECK(std::abs(det) >= h.det_floor * (1 - 1e-9));
    CHECK(transition_determinant(tp) == doctest::Approx(det).epsilon(1e-10));
    guarded += std::abs(det - h.det_floor) < 1e-9;
  }
  CHECK(guarded > 0);  // the sample must actually hit the guard
}

TEST_CASE("rank-1 determinant lemma") {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::VectorXd u = gaussian_matrix(rng, 3, 1), v = gaussian_matrix(rng, 3, 1);
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3) + u * v.transpose();
    CHECK(std::abs(A.determinant() - (1.0 + v.dot(u))) < 1e-10 * std::max(1.0, std::abs(A.determinant())));
  }
}

TEST_CASE("forward transition examples") {
  TransitionParamsd id = TransitionParamsd::identity(2, 2);
  const Eigen::Vector2d z(0.7, -1.1), u(2, -1);
  CHECK(forward_transition(z, u, id) == z);

  TransitionParamsd tp = id;
  tp.B = Eigen::Matrix2d::Identity();
  CHECK(forward_transition(Eigen::Vector2d(1, 1), u, tp) == Eigen::Vector2d(3, 0));

  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    TransitionParamsd r;
    r.A = gaussian_matrix(rng, 3, 3);
    r.B = gaussian_matrix(rng, 3, 2);
    r.c = gaussian_matrix(rng, 3, 1);
    const Eigen::VectorXd zz = gaussian_matrix(rng, 3, 1), uu = gaussian_matrix(rng, 2, 1);
    Eigen::VectorXd ref(3);
    for (int a = 0; a < 3; ++a) {
      ref(a) = r.c(a);
      for (int b = 0; b < 3; ++b) ref(a) += r.A(a, b) * zz(b);
      for (int b = 0; b < 2; ++b) ref(a) += r.B(a, b) * uu(b);
    }
    CHECK((forward_transition(zz, uu, r) - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("inverse transition") {
  TransitionParamsd two = TransitionParamsd::identity(2, 2);
  two.A *= 2.0;
  CHECK(inverse_transition(Eigen::Vector2d(4, 4), Eigen::Vector2d(1, 1), two).isApprox(Eigen::Vector2d(2, 2)));

  std::mt19937_64 rng(18);
  for (int i = 0; i < 1000; ++i) {
    const int r = i % 2 + 1;
    const TransitionParamsd tp = random_transition(rng, 2, 2, r);
    const Eigen::VectorXd z = gaussian_matrix(rng, 2, 1), u = gaussian_matrix(rng, 2, 1);
    const Eigen::VectorXd back = inverse_transition(forward_transition(z, u, tp), u, tp);
    CHECK((back - z).norm() <= 1e-9 * std::max(1.0, z.norm()));
    const Eigen::VectorXd y = gaussian_matrix(rng, 2, 1);
    const Eigen::VectorXd dense = tp.A.fullPivLu().solve(y - tp.B * u - tp.c);
    CHECK((inverse_transition(y, u, tp) - dense).norm() <= 1e-10 * std::max(1.0, dense.norm()));
  }

  // Near the floor the condition guard reports it.
  TransitionParamsd bad = TransitionParamsd::identity(2, 2);
  bad.A << 1, 0, 0, 1e-4;
  InverseDiagnostics diag;
  inverse_transition(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 0), bad, &diag, 1e-2);
  CHECK(diag.ill_conditioned);
  InverseDiagnostics ok;
  inverse_transition(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 0), two, &ok, 1e-2);
  CHECK_FALSE(ok.ill_conditioned);
}
