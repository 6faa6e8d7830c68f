#include "ddc/objective.hpp"

#include <cmath>
#include <numbers>

namespace ddc {

ElboBreakdown& ElboBreakdown::operator+=(const ElboBreakdown& o) {
  recon_x += o.recon_x;
  kl_zbar += o.kl_zbar;
  entropy_zhat += o.entropy_zhat;
  logp_zt += o.logp_zt;
  kl_wx += o.kl_wx;
  recon_y += o.recon_y;
  kl_v += o.kl_v;
  kl_wy += o.kl_wy;
  total += o.total;
  return *this;
}

ElboBreakdown& ElboBreakdown::operator*=(double s) {
  recon_x *= s;
  kl_zbar *= s;
  entropy_zhat *= s;
  logp_zt *= s;
  kl_wx *= s;
  recon_y *= s;
  kl_v *= s;
  kl_wy *= s;
  total *= s;
  return *this;
}

namespace {

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

ad::Var reparameterize(ModelGraph& g, const GaussianVars& q, const Eigen::MatrixXd& eps) {
  return ad::add(q.mean, ad::mul(q.stddev, g.input(eps)));
}

ad::Var broadcast_row(ModelGraph& g, ad::Var row, Eigen::Index rows) {
  return ad::add_row(g.input(Eigen::MatrixXd::Zero(rows, row.cols())), row);
}

void require_finite(ad::Var v, const std::string& term) {
  if (!v.value().allFinite()) throw NumericError(term, "non-finite value");
}

}  // namespace

NoiseX draw_noise_x(Eigen::Index batch, const HyperConfig& h, Rng& rng) {
  NoiseX n;
  n.z_next = standard_normal(batch, h.latent_dim, rng);
  n.w = standard_normal(batch, h.content_dim, rng);
  n.z_bar = standard_normal(batch, h.latent_dim, rng);
  return n;
}

NoiseY draw_noise_y(Eigen::Index batch, const HyperConfig& h, Rng& rng) {
  NoiseY n;
  n.v = standard_normal(batch, h.latent_dim, rng);
  n.w = standard_normal(batch, h.content_dim, rng);
  return n;
}

XBatch make_x_batch(const std::vector<TripleRecord>& records, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_x_batch: empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index pixels = records.at(indices.front()).x_t().size();
  XBatch b{Eigen::MatrixXd(n, pixels), Eigen::MatrixXd(n, 2), Eigen::MatrixXd(n, pixels)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const TripleRecord& r = records.at(indices[i]);
    b.x_t.row(i) = r.x_t().transpose();
    b.u.row(i) = r.u_t().transpose();
    b.x_next.row(i) = r.x_next().transpose();
  }
  return b;
}

YBatch make_y_batch(const std::vector<PairedRecord>& records, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_y_batch: empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index pixels = records.at(indices.front()).y_t().size();
  YBatch b{Eigen::MatrixXd(n, pixels), Eigen::MatrixXd(n, pixels)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const PairedRecord& r = records.at(indices[i]);
    b.y_t.row(i) = r.y_t().transpose();
    b.x_t.row(i) = r.x_t().transpose();
  }
  return b;
}

namespace terms {

ad::Var gaussian_kl(ad::Var q_mean, ad::Var q_std, ad::Var p_mean, ad::Var p_std) {
  const ad::Var log_ratio = ad::log(ad::div(p_std, q_std));
  const ad::Var num = ad::add(ad::square(q_std), ad::square(ad::sub(q_mean, p_mean)));
  const ad::Var quad = ad::div(num, ad::scale(ad::square(p_std), 2.0));
  return ad::sum_cols(ad::add_scalar(ad::add(log_ratio, quad), -0.5));
}

ad::Var gaussian_entropy(ad::Var q_std) {
  const double d = static_cast<double>(q_std.cols());
  return ad::add_scalar(ad::sum_cols(ad::log(q_std)), 0.5 * d * (1.0 + std::log(2.0 * std::numbers::pi)));
}

ad::Var gaussian_log_density(ad::Var x, ad::Var mean, ad::Var std) {
  const double d = static_cast<double>(x.cols());
  const ad::Var r = ad::div(ad::sub(x, mean), std);
  const ad::Var per = ad::add(ad::scale(ad::square(r), -0.5), ad::neg(ad::log(std)));
  return ad::add_scalar(ad::sum_cols(per), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

ad::Var bernoulli_loglik_logits(ad::Var targets, ad::Var logits) {
  return ad::sum_cols(ad::sub(ad::mul(targets, logits), ad::softplus(logits)));
}

}  // namespace terms

ElboXVars build_elbo_x(ModelGraph& g, const XBatch& batch, const NoiseX& noise) {
  const Eigen::Index n = batch.size();
  const ad::Var x_t = g.input(batch.x_t);
  const ad::Var x_next = g.input(batch.x_next);
  const ad::Var u = g.input(batch.u);

  const GaussianVars q_hat = g.encode_dynamics(x_next, DynamicsRole::next_posterior);
  const GaussianVars q_w = g.encode_content(x_next);
  const ad::Var z_hat = reparameterize(g, q_hat, noise.z_next);
  const ad::Var w = reparameterize(g, q_w, noise.w);

  ElboXVars out;
  out.recon_x = terms::bernoulli_loglik_logits(x_next, g.decode_logits(z_hat, w));
  require_finite(out.recon_x, "elbo_x.recon_x");

  const GaussianVars q_bar = g.backward_encode(x_t, z_hat);
  const ad::Var z_bar = reparameterize(g, q_bar, noise.z_bar);
  // p(z-_t|x_t) and p(z_t|x_t) are the same tied conditional; one evaluation serves both.
  const GaussianVars p_xt = g.encode_dynamics(x_t, DynamicsRole::state_prior);
  out.kl_zbar = terms::gaussian_kl(q_bar.mean, q_bar.stddev, p_xt.mean, p_xt.stddev);
  require_finite(out.kl_zbar, "elbo_x.kl_zbar");

  out.entropy_zhat = terms::gaussian_entropy(q_hat.stddev);
  require_finite(out.entropy_zhat, "elbo_x.entropy_zhat");

  const TransitionVars tp = g.transition(z_bar);
  const ad::Var z_t = g.inverse_transition(z_hat, u, tp);
  out.logp_zt = terms::gaussian_log_density(z_t, p_xt.mean, p_xt.stddev);
  require_finite(out.logp_zt, "elbo_x.logp_zt");

  const ad::Var mu_wx = broadcast_row(g, g.param("prior.mu_wx"), n);
  out.kl_wx = terms::gaussian_kl(q_w.mean, q_w.stddev, mu_wx, g.input(Eigen::MatrixXd::Ones(n, q_w.mean.cols())));
  require_finite(out.kl_wx, "elbo_x.kl_wx");

  out.total = ad::sub(ad::add(ad::add(ad::sub(out.recon_x, out.kl_zbar), out.entropy_zhat), out.logp_zt), out.kl_wx);
  return out;
}

ElboYVars build_elbo_y(ModelGraph& g, const YBatch& batch, const NoiseY& noise, const ModelParams* prior_source) {
  const Eigen::Index n = batch.size();
  const ad::Var y_t = g.input(batch.y_t);

  const GaussianVars q_v = g.encode_dynamics(y_t, DynamicsRole::y_posterior);
  const GaussianVars q_w = g.encode_content(y_t);
  const ad::Var v = reparameterize(g, q_v, noise.v);
  const ad::Var w = reparameterize(g, q_w, noise.w);

  ElboYVars out;
  out.recon_y = terms::bernoulli_loglik_logits(y_t, g.decode_logits(v, w));
  require_finite(out.recon_y, "elbo_y.recon_y");

  GaussianVars prior;
  if (prior_source != nullptr) {
    ModelGraph frozen(*prior_source, g.tape(), false);
    prior = frozen.encode_dynamics(frozen.input(batch.x_t), DynamicsRole::state_prior);
  } else {
    prior = g.encode_dynamics(g.input(batch.x_t), DynamicsRole::state_prior);
    if (g.hyper().block_prior_gradient) prior = {ad::detach(prior.mean), ad::detach(prior.stddev)};
  }
  out.kl_v = terms::gaussian_kl(q_v.mean, q_v.stddev, prior.mean, prior.stddev);
  require_finite(out.kl_v, "elbo_y.kl_v");

  const ad::Var mu_wy = broadcast_row(g, g.param("prior.mu_wy"), n);
  out.kl_wy = terms::gaussian_kl(q_w.mean, q_w.stddev, mu_wy, g.input(Eigen::MatrixXd::Ones(n, q_w.mean.cols())));
  require_finite(out.kl_wy, "elbo_y.kl_wy");

  out.total = ad::sub(ad::sub(out.recon_y, out.kl_v), out.kl_wy);
  return out;
}

std::vector<ElboBreakdown> elbo_x_batch(const XBatch& batch, const ModelParams& params, const NoiseX& noise) {
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const ElboXVars e = build_elbo_x(g, batch, noise);
  std::vector<ElboBreakdown> out(static_cast<std::size_t>(batch.size()));
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    ElboBreakdown& b = out[static_cast<std::size_t>(i)];
    b.recon_x = e.recon_x.value()(i, 0);
    b.kl_zbar = e.kl_zbar.value()(i, 0);
    b.entropy_zhat = e.entropy_zhat.value()(i, 0);
    b.logp_zt = e.logp_zt.value()(i, 0);
    b.kl_wx = e.kl_wx.value()(i, 0);
    b.total = e.total.value()(i, 0);
  }
  return out;
}

std::vector<ElboBreakdown> elbo_y_batch(const YBatch& batch, const ModelParams& params, const NoiseY& noise) {
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const ElboYVars e = build_elbo_y(g, batch, noise);
  std::vector<ElboBreakdown> out(static_cast<std::size_t>(batch.size()));
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    ElboBreakdown& b = out[static_cast<std::size_t>(i)];
    b.recon_y = e.recon_y.value()(i, 0);
    b.kl_v = e.kl_v.value()(i, 0);
    b.kl_wy = e.kl_wy.value()(i, 0);
    b.total = e.total.value()(i, 0);
  }
  return out;
}

ElboBreakdown elbo_x(const TripleRecord& record, const ModelParams& params, const NoiseX& noise) {
  return elbo_x_batch(make_x_batch({record}, {0}), params, noise).front();
}

ElboBreakdown elbo_y(const PairedRecord& record, const ModelParams& params, const NoiseY& noise) {
  return elbo_y_batch(make_y_batch({record}, {0}), params, noise).front();
}

LossResult total_loss(const XBatch& batch_x, const YBatch& batch_y, const ModelParams& params, double beta_y,
                      const NoiseX& noise_x, const NoiseY& noise_y, bool with_gradient,
                      const ModelParams* prior_source) {
  if (batch_x.size() == 0 || batch_y.size() == 0) throw std::invalid_argument("total_loss: empty batch");
  ad::Tape tape;
  ModelGraph g(params, tape, with_gradient);
  const ElboXVars ex = build_elbo_x(g, batch_x, noise_x);
  const ElboYVars ey = build_elbo_y(g, batch_y, noise_y, prior_source);

  const ad::Var mean_x = ad::scale(ad::sum(ex.total), 1.0 / static_cast<double>(batch_x.size()));
  const ad::Var mean_y = ad::scale(ad::sum(ey.total), 1.0 / static_cast<double>(batch_y.size()));
  const ad::Var loss = ad::neg(ad::add(mean_x, ad::scale(mean_y, beta_y)));

  LossResult r;
  r.loss = loss.value()(0, 0);
  if (!std::isfinite(r.loss)) throw NumericError("total_loss", "non-finite loss");
  const double nx = static_cast<double>(batch_x.size()), ny = static_cast<double>(batch_y.size());
  r.mean_x.recon_x = ex.recon_x.value().sum() / nx;
  r.mean_x.kl_zbar = ex.kl_zbar.value().sum() / nx;
  r.mean_x.entropy_zhat = ex.entropy_zhat.value().sum() / nx;
  r.mean_x.logp_zt = ex.logp_zt.value().sum() / nx;
  r.mean_x.kl_wx = ex.kl_wx.value().sum() / nx;
  r.mean_x.total = ex.total.value().sum() / nx;
  r.mean_y.recon_y = ey.recon_y.value().sum() / ny;
  r.mean_y.kl_v = ey.kl_v.value().sum() / ny;
  r.mean_y.kl_wy = ey.kl_wy.value().sum() / ny;
  r.mean_y.total = ey.total.value().sum() / ny;

  if (with_gradient) {
    tape.backward(loss);
    for (const auto& [name, block] : params.blocks) {
      const auto it = g.bound().find(name);
      if (it != g.bound().end() && tape.grad(it->second).size() != 0)
        r.grads[name] = tape.grad(it->second);
      else
        r.grads[name] = Eigen::MatrixXd::Zero(block.rows(), block.cols());
    }
  }
  return r;
}

}  // namespace ddc
