#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddc/autodiff.hpp"
#include "ddc/gaussian.hpp"
#include "ddc/key_values.hpp"
#include "ddc/planar_env.hpp"
#include "ddc/transition.hpp"

namespace ddc {

struct HyperConfig {
  int image_side = 40;
  int latent_dim = 2;
  int content_dim = 2;
  int action_dim = 2;
  std::vector<int> conv_channels{16, 32, 32};
  int dense_hidden = 128;
  int transition_hidden = 64;
  double std_floor = 1e-3;
  int a_rank = 1;
  double det_floor = 1e-2;
  double beta_y = 1.0;
  /// q(v|y) reuses the X dynamics encoder.
  bool share_dynamics_encoder = true;
  /// Treat the tied prior N(mu(x_t), sigma(x_t)) of v_t as a constant.
  bool block_prior_gradient = true;

  void validate() const;
  int base_side() const { return image_side >> conv_channels.size(); }
  int pixels() const { return image_side * image_side; }
};

void write_hyper_config(const HyperConfig& hyper, const std::string& prefix, KeyValues& out);
HyperConfig read_hyper_config(KeyReader& in, const std::string& prefix);

/// Named parameter blocks of every network in the model.
///
/// Blocks: enc_dyn.* (dynamics encoder, shared by q(z^_{t+1}|x_{t+1}),
/// p(z-_t|x_t), p(z_t|x_t) and q(v_t|y_t)), enc_dyn_y.* (only when the Y
/// dynamics encoder is unshared), enc_content.*, dec.*, back.* (backward
/// encoder), trans.* (transition network), prior.mu_wx / prior.mu_wy.
struct ModelParams {
  HyperConfig hyper;
  std::map<std::string, Eigen::MatrixXd> blocks;

  const Eigen::MatrixXd& at(const std::string& name) const;
  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// He-scaled normal weights, zero biases, transition heads for U, B and c
/// zeroed so that the initial dynamics are A = I, B = 0, c = 0.
ModelParams init_params(const HyperConfig& hyper, std::uint64_t seed);

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// The four conditionals hard-tied to the dynamics encoder.
enum class DynamicsRole { next_posterior, backward_prior, state_prior, y_posterior };

/// Parameter-block prefix consulted for a role.
std::string dynamics_encoder_block(DynamicsRole role, const HyperConfig& hyper);

struct GaussianVars {
  ad::Var mean;
  ad::Var stddev;
};

/// Batched per-row transition: A (B x d*d, row-major), B (B x d*m), c (B x d),
/// plus the guarded low-rank factor U (already scaled) and V.
struct TransitionVars {
  ad::Var A;
  ad::Var B;
  ad::Var c;
  ad::Var U;
  ad::Var V;
};

/// Binds ModelParams onto a tape. Each block becomes exactly one tape node,
/// so tied conditionals share the node, not just its value.
class ModelGraph {
 public:
  ModelGraph(const ModelParams& params, ad::Tape& tape, bool track_gradients);

  ad::Var param(const std::string& name);
  ad::Var input(const Eigen::MatrixXd& value) { return tape_.constant(value); }

  GaussianVars encode_dynamics(ad::Var images, DynamicsRole role);
  GaussianVars encode_content(ad::Var images);
  GaussianVars backward_encode(ad::Var images, ad::Var z_next);
  ad::Var decode_logits(ad::Var z, ad::Var w);
  TransitionVars transition(ad::Var z_bar);

  ad::Var forward_transition(ad::Var z, ad::Var u, const TransitionVars& tp);
  ad::Var inverse_transition(ad::Var z_next, ad::Var u, const TransitionVars& tp);

  const HyperConfig& hyper() const { return params_.hyper; }
  ad::Tape& tape() { return tape_; }
  const std::map<std::string, ad::Var>& bound() const { return bound_; }

 private:
  ad::Var conv_stack(ad::Var images, const std::string& prefix);
  GaussianVars gaussian_head(ad::Var hidden, const std::string& prefix, int dim);
  ad::Var checked(ad::Var v, const std::string& where);

  const ModelParams& params_;
  ad::Tape& tape_;
  bool track_;
  std::map<std::string, ad::Var> bound_;
};

// --- single-image and batched evaluation ---------------------------------

/// Row-stacked latent Gaussians for a batch.
struct BatchGaussian {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd stddev;

  GaussianLatentd row(Eigen::Index i) const { return {mean.row(i).transpose(), stddev.row(i).transpose()}; }
};

/// Images stacked as rows (B x side*side).
Eigen::MatrixXd stack_images(const std::vector<const Image*>& images);

BatchGaussian encode_dynamics_batch(const Eigen::MatrixXd& images, const ModelParams& params,
                                    DynamicsRole role = DynamicsRole::next_posterior);
BatchGaussian encode_content_batch(const Eigen::MatrixXd& images, const ModelParams& params);
/// Per-pixel Bernoulli means, B x side*side, strictly inside (0, 1).
Eigen::MatrixXd decode_batch(const Eigen::MatrixXd& z, const Eigen::MatrixXd& w, const ModelParams& params);

GaussianLatentd encode_dynamics(const Image& image, const ModelParams& params,
                                DynamicsRole role = DynamicsRole::next_posterior);
GaussianLatentd encode_content(const Image& image, const ModelParams& params);
Eigen::VectorXd decode(const Eigen::VectorXd& z, const Eigen::VectorXd& w, const ModelParams& params);
GaussianLatentd backward_encode(const Image& x_t, const Eigen::VectorXd& z_next, const ModelParams& params);
TransitionParamsd transition_params(const Eigen::VectorXd& z_bar, const ModelParams& params);

/// Logits are clipped to this magnitude before the sigmoid in decode().
inline constexpr double kDecoderLogitClip = 30.0;

}  // namespace ddc
