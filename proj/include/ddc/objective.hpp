#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddc/autodiff.hpp"
#include "ddc/dataset.hpp"
#include "ddc/model.hpp"

namespace ddc {

/// Terms of the variational bound; X fields come from a triple, Y fields from
/// an action-free observation. `total` is their signed sum.
struct ElboBreakdown {
  double recon_x = 0.0;
  double kl_zbar = 0.0;
  double entropy_zhat = 0.0;
  double logp_zt = 0.0;
  double kl_wx = 0.0;
  double recon_y = 0.0;
  double kl_v = 0.0;
  double kl_wy = 0.0;
  double total = 0.0;

  double x_total() const { return recon_x - kl_zbar + entropy_zhat + logp_zt - kl_wx; }
  double y_total() const { return recon_y - kl_v - kl_wy; }
  double signed_sum() const { return x_total() + y_total(); }

  ElboBreakdown& operator+=(const ElboBreakdown& o);
  ElboBreakdown& operator*=(double s);
};

/// Standard-normal draws for one X batch (rows = records).
struct NoiseX {
  Eigen::MatrixXd z_next;  // B x d, for z^_{t+1}
  Eigen::MatrixXd w;       // B x k, for w_x
  Eigen::MatrixXd z_bar;   // B x d, for z-_t
};

struct NoiseY {
  Eigen::MatrixXd v;  // B x d
  Eigen::MatrixXd w;  // B x k
};

NoiseX draw_noise_x(Eigen::Index batch, const HyperConfig& hyper, Rng& rng);
NoiseY draw_noise_y(Eigen::Index batch, const HyperConfig& hyper, Rng& rng);

/// Row-stacked model inputs. Only images and actions, never true states.
struct XBatch {
  Eigen::MatrixXd x_t;
  Eigen::MatrixXd u;
  Eigen::MatrixXd x_next;
  Eigen::Index size() const { return x_t.rows(); }
};

struct YBatch {
  Eigen::MatrixXd y_t;
  Eigen::MatrixXd x_t;
  Eigen::Index size() const { return y_t.rows(); }
};

XBatch make_x_batch(const std::vector<TripleRecord>& records, const std::vector<std::size_t>& indices);
YBatch make_y_batch(const std::vector<PairedRecord>& records, const std::vector<std::size_t>& indices);

// --- closed-form pieces on the tape (per row, B x 1) ---------------------
namespace terms {
ad::Var gaussian_kl(ad::Var q_mean, ad::Var q_std, ad::Var p_mean, ad::Var p_std);
ad::Var gaussian_entropy(ad::Var q_std);
ad::Var gaussian_log_density(ad::Var x, ad::Var mean, ad::Var std);
/// Bernoulli log-likelihood of `targets` under sigmoid(logits).
ad::Var bernoulli_loglik_logits(ad::Var targets, ad::Var logits);
}  // namespace terms

/// Per-row bound terms as tape nodes.
struct ElboXVars {
  ad::Var recon_x, kl_zbar, entropy_zhat, logp_zt, kl_wx, total;
};
struct ElboYVars {
  ad::Var recon_y, kl_v, kl_wy, total;
};

/// `prior_source`, when given, supplies the parameters of the tied prior
/// N(mu(x_t), sigma(x_t)) for v_t instead of the graph's own parameters; it
/// is always treated as constant.
ElboXVars build_elbo_x(ModelGraph& graph, const XBatch& batch, const NoiseX& noise);
ElboYVars build_elbo_y(ModelGraph& graph, const YBatch& batch, const NoiseY& noise,
                       const ModelParams* prior_source = nullptr);

/// Per-record breakdowns (X fields only / Y fields only).
std::vector<ElboBreakdown> elbo_x_batch(const XBatch& batch, const ModelParams& params, const NoiseX& noise);
std::vector<ElboBreakdown> elbo_y_batch(const YBatch& batch, const ModelParams& params, const NoiseY& noise);
ElboBreakdown elbo_x(const TripleRecord& record, const ModelParams& params, const NoiseX& noise);
ElboBreakdown elbo_y(const PairedRecord& record, const ModelParams& params, const NoiseY& noise);

using ParamGrads = std::map<std::string, Eigen::MatrixXd>;

struct LossResult {
  double loss = 0.0;
  ElboBreakdown mean_x;  // batch means of the X terms
  ElboBreakdown mean_y;  // batch means of the Y terms
  ParamGrads grads;      // d loss / d block, empty unless requested; zero for untouched blocks
};

/// loss = -(mean elbo_x total + beta_y * mean elbo_y total).
/// Throws NumericError naming the first non-finite term.
LossResult total_loss(const XBatch& batch_x, const YBatch& batch_y, const ModelParams& params, double beta_y,
                      const NoiseX& noise_x, const NoiseY& noise_y, bool with_gradient,
                      const ModelParams* prior_source = nullptr);

}  // namespace ddc
