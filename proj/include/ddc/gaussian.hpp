#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace ddc {

/// Diagonal Gaussian over a latent vector.
template <typename Scalar>
struct GaussianLatent {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector mean;
  Vector stddev;

  Eigen::Index dim() const { return mean.size(); }

  bool is_valid() const {
    return mean.size() == stddev.size() && mean.allFinite() && stddev.allFinite() &&
           (stddev.array() > Scalar(0)).all();
  }

  /// Reparameterized draw mean + stddev * eps.
  template <typename Derived>
  Vector sample(const Eigen::MatrixBase<Derived>& eps) const {
    return mean + stddev.cwiseProduct(eps);
  }
};

using GaussianLatentd = GaussianLatent<double>;

/// KL(q || p) for diagonal Gaussians, closed form.
template <typename Scalar>
Scalar gaussian_kl(const GaussianLatent<Scalar>& q, const GaussianLatent<Scalar>& p) {
  if (q.dim() != p.dim() || q.stddev.size() != q.dim() || p.stddev.size() != p.dim())
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  const auto qs = q.stddev.array();
  const auto ps = p.stddev.array();
  const auto dm = (q.mean - p.mean).array();
  return ((ps / qs).log() + (qs.square() + dm.square()) / (Scalar(2) * ps.square()) - Scalar(0.5)).sum();
}

/// Differential entropy of a diagonal Gaussian.
template <typename Scalar>
Scalar gaussian_entropy(const GaussianLatent<Scalar>& q) {
  using std::log;
  const Scalar d = static_cast<Scalar>(q.dim());
  return Scalar(0.5) * d * (Scalar(1) + log(Scalar(2) * std::numbers::pi_v<Scalar>)) +
         q.stddev.array().log().sum();
}

/// log N(x; mean, diag(stddev^2)).
template <typename Scalar, typename Derived>
Scalar gaussian_log_density(const GaussianLatent<Scalar>& q, const Eigen::MatrixBase<Derived>& x) {
  using std::log;
  if (x.size() != q.dim()) throw std::invalid_argument("gaussian_log_density: dimension mismatch");
  const auto r = ((x - q.mean).array() / q.stddev.array());
  const Scalar d = static_cast<Scalar>(q.dim());
  return Scalar(-0.5) * r.square().sum() - q.stddev.array().log().sum() -
         Scalar(0.5) * d * log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// Sum over pixels of x log m + (1 - x) log(1 - m); pixels act as soft targets.
template <typename DerivedX, typename DerivedM>
typename DerivedX::Scalar bernoulli_loglik(const Eigen::MatrixBase<DerivedX>& image,
                                           const Eigen::MatrixBase<DerivedM>& means) {
  if (image.size() != means.size()) throw std::invalid_argument("bernoulli_loglik: size mismatch");
  const auto x = image.array();
  const auto m = means.array();
  using Scalar = typename DerivedX::Scalar;
  return (x * m.log() + (Scalar(1) - x) * (Scalar(1) - m).log()).sum();
}

}  // namespace ddc
