#include "ddc/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ddc {

namespace {

constexpr int kEncoderKernel = 3;
constexpr int kDecoderKernel = 4;

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': malformed integer list '" + text + "'");
    }
  }
  return out;
}

}  // namespace

void HyperConfig::validate() const {
  if (latent_dim < 2) throw std::invalid_argument("hyper: latent_dim must be at least 2");
  if (content_dim < 1) throw std::invalid_argument("hyper: content_dim must be at least 1");
  if (action_dim < 1) throw std::invalid_argument("hyper: action_dim must be at least 1");
  if (!(std_floor > 0.0)) throw std::invalid_argument("hyper: std_floor must be positive");
  if (!(det_floor > 0.0) || det_floor >= 1.0) throw std::invalid_argument("hyper: det_floor must lie in (0, 1)");
  if (a_rank < 1 || a_rank > latent_dim) throw std::invalid_argument("hyper: a_rank must lie in [1, latent_dim]");
  if (conv_channels.empty()) throw std::invalid_argument("hyper: at least one conv layer required");
  for (int c : conv_channels)
    if (c < 1) throw std::invalid_argument("hyper: conv channel counts must be positive");
  if (image_side < 1 || (image_side % (1 << conv_channels.size())) != 0)
    throw std::invalid_argument("hyper: image_side must be divisible by 2^(number of conv layers)");
  if (dense_hidden < 1 || transition_hidden < 1) throw std::invalid_argument("hyper: hidden widths must be positive");
  if (!(beta_y >= 0.0)) throw std::invalid_argument("hyper: beta_y must be non-negative");
}

void write_hyper_config(const HyperConfig& h, const std::string& p, KeyValues& out) {
  out[p + "image_side"] = std::to_string(h.image_side);
  out[p + "latent_dim"] = std::to_string(h.latent_dim);
  out[p + "content_dim"] = std::to_string(h.content_dim);
  out[p + "action_dim"] = std::to_string(h.action_dim);
  out[p + "conv_channels"] = join_ints(h.conv_channels);
  out[p + "dense_hidden"] = std::to_string(h.dense_hidden);
  out[p + "transition_hidden"] = std::to_string(h.transition_hidden);
  out[p + "std_floor"] = format_double(h.std_floor);
  out[p + "a_rank"] = std::to_string(h.a_rank);
  out[p + "det_floor"] = format_double(h.det_floor);
  out[p + "beta_y"] = format_double(h.beta_y);
  out[p + "share_dynamics_encoder"] = h.share_dynamics_encoder ? "true" : "false";
  out[p + "block_prior_gradient"] = h.block_prior_gradient ? "true" : "false";
}

HyperConfig read_hyper_config(KeyReader& in, const std::string& p) {
  HyperConfig h;
  h.image_side = in.get<int>(p + "image_side", h.image_side);
  h.latent_dim = in.get<int>(p + "latent_dim", h.latent_dim);
  h.content_dim = in.get<int>(p + "content_dim", h.content_dim);
  h.action_dim = in.get<int>(p + "action_dim", h.action_dim);
  if (in.has(p + "conv_channels"))
    h.conv_channels = parse_ints(p + "conv_channels", in.get<std::string>(p + "conv_channels", ""));
  h.dense_hidden = in.get<int>(p + "dense_hidden", h.dense_hidden);
  h.transition_hidden = in.get<int>(p + "transition_hidden", h.transition_hidden);
  h.std_floor = in.get<double>(p + "std_floor", h.std_floor);
  h.a_rank = in.get<int>(p + "a_rank", h.a_rank);
  h.det_floor = in.get<double>(p + "det_floor", h.det_floor);
  h.beta_y = in.get<double>(p + "beta_y", h.beta_y);
  h.share_dynamics_encoder = in.get<bool>(p + "share_dynamics_encoder", h.share_dynamics_encoder);
  h.block_prior_gradient = in.get<bool>(p + "block_prior_gradient", h.block_prior_gradient);
  return h;
}

const Eigen::MatrixXd& ModelParams::at(const std::string& name) const {
  const auto it = blocks.find(name);
  if (it == blocks.end()) throw std::out_of_range("model: no parameter block '" + name + "'");
  return it->second;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : blocks) n += static_cast<std::size_t>(m.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& [name, m] : blocks)
    if (!m.allFinite()) return false;
  return true;
}

std::string dynamics_encoder_block(DynamicsRole role, const HyperConfig& hyper) {
  if (role == DynamicsRole::y_posterior && !hyper.share_dynamics_encoder) return "enc_dyn_y";
  return "enc_dyn";
}

ModelParams init_params(const HyperConfig& hyper, std::uint64_t seed) {
  hyper.validate();
  ModelParams p;
  p.hyper = hyper;
  Rng rng(seed);
  auto normal = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> nd(0.0, stddev);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return m;
  };
  auto dense = [&](const std::string& name, int in, int out) {
    p.blocks[name + ".w"] = normal(in, out, std::sqrt(2.0 / in));
    p.blocks[name + ".b"] = Eigen::MatrixXd::Zero(1, out);
  };
  const int d = hyper.latent_dim, k = hyper.content_dim, m = hyper.action_dim, r = hyper.a_rank;
  const int layers = static_cast<int>(hyper.conv_channels.size());
  const int flat = hyper.conv_channels.back() * hyper.base_side() * hyper.base_side();

  auto conv_stack = [&](const std::string& prefix) {
    int cin = 1;
    for (int i = 0; i < layers; ++i) {
      const int cout = hyper.conv_channels[i];
      const std::string name = prefix + ".conv" + std::to_string(i);
      p.blocks[name + ".w"] = normal(cout, cin * kEncoderKernel * kEncoderKernel,
                                     std::sqrt(2.0 / (cin * kEncoderKernel * kEncoderKernel)));
      p.blocks[name + ".b"] = Eigen::MatrixXd::Zero(1, cout);
      cin = cout;
    }
  };
  auto encoder = [&](const std::string& prefix, int out_dim) {
    conv_stack(prefix);
    dense(prefix + ".fc0", flat, hyper.dense_hidden);
    dense(prefix + ".fc1", hyper.dense_hidden, 2 * out_dim);
  };

  encoder("enc_dyn", d);
  if (!hyper.share_dynamics_encoder) encoder("enc_dyn_y", d);
  encoder("enc_content", k);

  dense("dec.fc0", d + k, hyper.dense_hidden);
  dense("dec.fc1", hyper.dense_hidden, flat);
  for (int j = 0; j < layers; ++j) {
    const int cin = hyper.conv_channels[layers - 1 - j];
    const int cout = j + 1 < layers ? hyper.conv_channels[layers - 2 - j] : 1;
    const std::string name = "dec.deconv" + std::to_string(j);
    p.blocks[name + ".w"] = normal(cin, cout * kDecoderKernel * kDecoderKernel, std::sqrt(2.0 / (cin * 4)));
    p.blocks[name + ".b"] = Eigen::MatrixXd::Zero(1, cout);
  }

  conv_stack("back");
  dense("back.fc0", flat + d, hyper.dense_hidden);
  dense("back.fc1", hyper.dense_hidden, 2 * d);

  const int h = hyper.transition_hidden;
  dense("trans.fc0", d, h);
  dense("trans.fc1", h, h);
  // Head layout: [U (d*r) | V (d*r) | B (d*m) | c (d)]. Only V is random;
  // a zero U keeps A = I while leaving dL/dU = (dL/dA) V non-zero.
  Eigen::MatrixXd head = Eigen::MatrixXd::Zero(h, 2 * d * r + d * m + d);
  head.middleCols(d * r, d * r) = normal(h, d * r, std::sqrt(1.0 / h));
  p.blocks["trans.fc2.w"] = head;
  p.blocks["trans.fc2.b"] = Eigen::MatrixXd::Zero(1, head.cols());

  p.blocks["prior.mu_wx"] = Eigen::MatrixXd::Constant(1, k, 1.0);
  p.blocks["prior.mu_wy"] = Eigen::MatrixXd::Constant(1, k, -1.0);
  return p;
}

// --- graph ----------------------------------------------------------------

ModelGraph::ModelGraph(const ModelParams& params, ad::Tape& tape, bool track_gradients)
    : params_(params), tape_(tape), track_(track_gradients) {}

ad::Var ModelGraph::param(const std::string& name) {
  if (const auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Eigen::MatrixXd& value = params_.at(name);
  const ad::Var v = track_ ? tape_.leaf(value) : tape_.constant(value);
  bound_.emplace(name, v);
  return v;
}

ad::Var ModelGraph::checked(ad::Var v, const std::string& where) {
  if (!v.value().allFinite()) throw NumericError(where, "non-finite output");
  return v;
}

ad::Var ModelGraph::conv_stack(ad::Var images, const std::string& prefix) {
  const HyperConfig& h = params_.hyper;
  ad::Var x = images;
  int cin = 1, side = h.image_side;
  for (std::size_t i = 0; i < h.conv_channels.size(); ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i);
    const ad::ConvGeometry g{cin, side, side, kEncoderKernel, 2, 1};
    x = checked(ad::relu(ad::conv2d(x, param(name + ".w"), param(name + ".b"), g)), name);
    cin = h.conv_channels[i];
    side = g.out_height();
  }
  return x;
}

GaussianVars ModelGraph::gaussian_head(ad::Var hidden, const std::string& prefix, int dim) {
  const ad::Var out = checked(ad::add_row(ad::matmul(hidden, param(prefix + ".w")), param(prefix + ".b")), prefix);
  const ad::Var mean = ad::slice_cols(out, 0, dim);
  const ad::Var stddev = ad::add_scalar(ad::softplus(ad::slice_cols(out, dim, dim)), params_.hyper.std_floor);
  return {mean, stddev};
}

GaussianVars ModelGraph::encode_dynamics(ad::Var images, DynamicsRole role) {
  const std::string prefix = dynamics_encoder_block(role, params_.hyper);
  const ad::Var flat = conv_stack(images, prefix);
  const ad::Var h = checked(
      ad::relu(ad::add_row(ad::matmul(flat, param(prefix + ".fc0.w")), param(prefix + ".fc0.b"))), prefix + ".fc0");
  return gaussian_head(h, prefix + ".fc1", params_.hyper.latent_dim);
}

GaussianVars ModelGraph::encode_content(ad::Var images) {
  const ad::Var flat = conv_stack(images, "enc_content");
  const ad::Var h = checked(
      ad::relu(ad::add_row(ad::matmul(flat, param("enc_content.fc0.w")), param("enc_content.fc0.b"))),
      "enc_content.fc0");
  return gaussian_head(h, "enc_content.fc1", params_.hyper.content_dim);
}

GaussianVars ModelGraph::backward_encode(ad::Var images, ad::Var z_next) {
  const ad::Var flat = conv_stack(images, "back");
  const ad::Var joined = ad::concat_cols(flat, z_next);
  const ad::Var h = checked(
      ad::relu(ad::add_row(ad::matmul(joined, param("back.fc0.w")), param("back.fc0.b"))), "back.fc0");
  return gaussian_head(h, "back.fc1", params_.hyper.latent_dim);
}

ad::Var ModelGraph::decode_logits(ad::Var z, ad::Var w) {
  const HyperConfig& h = params_.hyper;
  const ad::Var in = ad::concat_cols(z, w);
  ad::Var x = checked(ad::relu(ad::add_row(ad::matmul(in, param("dec.fc0.w")), param("dec.fc0.b"))), "dec.fc0");
  x = checked(ad::relu(ad::add_row(ad::matmul(x, param("dec.fc1.w")), param("dec.fc1.b"))), "dec.fc1");
  const int layers = static_cast<int>(h.conv_channels.size());
  int side = h.base_side();
  for (int j = 0; j < layers; ++j) {
    const int cout = j + 1 < layers ? h.conv_channels[layers - 2 - j] : 1;
    side *= 2;
    const std::string name = "dec.deconv" + std::to_string(j);
    const ad::ConvGeometry g{cout, side, side, kDecoderKernel, 2, 1};
    x = ad::conv_transpose2d(x, param(name + ".w"), param(name + ".b"), g);
    if (j + 1 < layers) x = ad::relu(x);
    x = checked(x, name);
  }
  return x;
}

TransitionVars ModelGraph::transition(ad::Var z_bar) {
  const HyperConfig& h = params_.hyper;
  const int d = h.latent_dim, m = h.action_dim, r = h.a_rank;
  ad::Var x = checked(ad::relu(ad::add_row(ad::matmul(z_bar, param("trans.fc0.w")), param("trans.fc0.b"))), "trans.fc0");
  x = checked(ad::relu(ad::add_row(ad::matmul(x, param("trans.fc1.w")), param("trans.fc1.b"))), "trans.fc1");
  const ad::Var out = checked(ad::add_row(ad::matmul(x, param("trans.fc2.w")), param("trans.fc2.b")), "trans.fc2");
  const ad::Var U = ad::slice_cols(out, 0, d * r);
  const ad::Var V = ad::slice_cols(out, d * r, d * r);
  const ad::Var B = ad::slice_cols(out, 2 * d * r, d * m);
  const ad::Var c = ad::slice_cols(out, 2 * d * r + d * m, d);
  const ad::Var s = ad::determinant_guard(U, V, d, r, h.det_floor);
  const ad::Var Us = ad::scale_rows(U, s);
  Eigen::MatrixXd eye(1, d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) eye(0, i * d + j) = i == j ? 1.0 : 0.0;
  const ad::Var A = ad::add_row(ad::batched_lowrank(Us, V, d, r), tape_.constant(eye));
  return {A, B, c, Us, V};
}

ad::Var ModelGraph::forward_transition(ad::Var z, ad::Var u, const TransitionVars& tp) {
  const int d = params_.hyper.latent_dim, m = params_.hyper.action_dim;
  return ad::add(ad::add(ad::batched_matvec(tp.A, z, d, d), ad::batched_matvec(tp.B, u, d, m)), tp.c);
}

ad::Var ModelGraph::inverse_transition(ad::Var z_next, ad::Var u, const TransitionVars& tp) {
  const int d = params_.hyper.latent_dim, m = params_.hyper.action_dim;
  const ad::Var rhs = ad::sub(ad::sub(z_next, ad::batched_matvec(tp.B, u, d, m)), tp.c);
  return ad::batched_solve(tp.A, rhs, d);
}

// --- evaluation helpers ----------------------------------------------------

Eigen::MatrixXd stack_images(const std::vector<const Image*>& images) {
  if (images.empty()) return {};
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), images.front()->size());
  for (std::size_t i = 0; i < images.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = images[i]->transpose();
  return out;
}

namespace {

void require_pixels(const Eigen::MatrixXd& images, const HyperConfig& h) {
  if (images.cols() != h.pixels())
    throw std::invalid_argument("model: expected " + std::to_string(h.pixels()) + " pixels per image");
}

}  // namespace

BatchGaussian encode_dynamics_batch(const Eigen::MatrixXd& images, const ModelParams& params, DynamicsRole role) {
  require_pixels(images, params.hyper);
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const GaussianVars q = g.encode_dynamics(g.input(images), role);
  return {q.mean.value(), q.stddev.value()};
}

BatchGaussian encode_content_batch(const Eigen::MatrixXd& images, const ModelParams& params) {
  require_pixels(images, params.hyper);
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const GaussianVars q = g.encode_content(g.input(images));
  return {q.mean.value(), q.stddev.value()};
}

Eigen::MatrixXd decode_batch(const Eigen::MatrixXd& z, const Eigen::MatrixXd& w, const ModelParams& params) {
  if (!z.allFinite() || !w.allFinite()) throw NumericError("dec.input", "non-finite latent");
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const Eigen::MatrixXd logits = g.decode_logits(g.input(z), g.input(w)).value();
  return logits.unaryExpr([](double x) {
    const double c = std::clamp(x, -kDecoderLogitClip, kDecoderLogitClip);
    return 1.0 / (1.0 + std::exp(-c));
  });
}

GaussianLatentd encode_dynamics(const Image& image, const ModelParams& params, DynamicsRole role) {
  return encode_dynamics_batch(image.transpose(), params, role).row(0);
}

GaussianLatentd encode_content(const Image& image, const ModelParams& params) {
  return encode_content_batch(image.transpose(), params).row(0);
}

Eigen::VectorXd decode(const Eigen::VectorXd& z, const Eigen::VectorXd& w, const ModelParams& params) {
  return decode_batch(z.transpose(), w.transpose(), params).row(0).transpose();
}

GaussianLatentd backward_encode(const Image& x_t, const Eigen::VectorXd& z_next, const ModelParams& params) {
  require_pixels(x_t.transpose(), params.hyper);
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const GaussianVars q = g.backward_encode(g.input(x_t.transpose()), g.input(z_next.transpose()));
  return {q.mean.value().row(0).transpose(), q.stddev.value().row(0).transpose()};
}

TransitionParamsd transition_params(const Eigen::VectorXd& z_bar, const ModelParams& params) {
  const HyperConfig& h = params.hyper;
  if (z_bar.size() != h.latent_dim) throw std::invalid_argument("transition_params: latent dimension mismatch");
  if (!z_bar.allFinite()) throw NumericError("trans.input", "non-finite latent");
  ad::Tape tape;
  ModelGraph g(params, tape, false);
  const TransitionVars tv = g.transition(g.input(z_bar.transpose()));
  const int d = h.latent_dim, m = h.action_dim, r = h.a_rank;
  TransitionParamsd tp;
  tp.A.resize(d, d);
  tp.B.resize(d, m);
  tp.U.resize(d, r);
  tp.V.resize(d, r);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) tp.A(i, j) = tv.A.value()(0, i * d + j);
    for (int j = 0; j < m; ++j) tp.B(i, j) = tv.B.value()(0, i * m + j);
    for (int j = 0; j < r; ++j) {
      tp.U(i, j) = tv.U.value()(0, j * d + i);
      tp.V(i, j) = tv.V.value()(0, j * d + i);
    }
  }
  tp.c = tv.c.value().row(0).transpose();
  return tp;
}

}  // namespace ddc
