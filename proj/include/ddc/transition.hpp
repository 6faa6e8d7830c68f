#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace ddc {

/// Local affine latent dynamics z' = A z + B u + c.
///
/// When produced by the transition network, A = I + U V^T with U, V of size
/// d x r (the guard scaling already folded into U), which lets the inverse and
/// determinant use the low-rank structure. Hand-built instances may leave U
/// and V empty, in which case dense routines are used.
template <typename Scalar>
struct TransitionParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix A;
  Matrix B;
  Vector c;
  Matrix U;
  Matrix V;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index action_dim() const { return B.cols(); }
  bool has_low_rank() const { return U.size() > 0; }

  bool is_finite() const {
    return A.allFinite() && B.allFinite() && c.allFinite() && U.allFinite() && V.allFinite();
  }

  static TransitionParams identity(Eigen::Index d, Eigen::Index m) {
    return {Matrix::Identity(d, d), Matrix::Zero(d, m), Vector::Zero(d), Matrix(), Matrix()};
  }
};

using TransitionParamsd = TransitionParams<double>;

/// Largest admissible scaling s in (0, 1] of a low-rank perturbation such that
/// det(I + s M) >= floor, where M = V^T U is the r x r capacitance core.
/// Returns 1 when the unscaled determinant clears the floor; otherwise the
/// first s at which the determinant reaches the floor.
template <typename Derived>
typename Derived::Scalar determinant_guard_scale(const Eigen::MatrixBase<Derived>& core,
                                                 typename Derived::Scalar floor) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index r = core.rows();
  const Matrix I = Matrix::Identity(r, r);
  auto det_at = [&](Scalar s) { return (I + s * core).determinant(); };
  if (det_at(Scalar(1)) >= floor) return Scalar(1);
  if (r == 1) return (floor - Scalar(1)) / core(0, 0);
  constexpr int kScan = 256;
  Scalar lo = 0, hi = 1;
  for (int k = 1; k <= kScan; ++k) {
    const Scalar s = Scalar(k) / Scalar(kScan);
    if (det_at(s) < floor) {
      hi = s;
      break;
    }
    lo = s;
  }
  for (int it = 0; it < 100; ++it) {
    const Scalar mid = Scalar(0.5) * (lo + hi);
    (det_at(mid) >= floor ? lo : hi) = mid;
  }
  return lo;
}

/// Builds A = I + s U V^T with the determinant guard applied.
template <typename Scalar>
TransitionParams<Scalar> make_low_rank_transition(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& U,
                                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& V,
                                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B,
                                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& c,
                                                  Scalar det_floor) {
  if (U.rows() != V.rows() || U.cols() != V.cols() || B.rows() != U.rows() || c.size() != U.rows())
    throw std::invalid_argument("make_low_rank_transition: shape mismatch");
  const Scalar s = determinant_guard_scale(V.transpose() * U, det_floor);
  TransitionParams<Scalar> tp;
  tp.U = s * U;
  tp.V = V;
  tp.A = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Identity(U.rows(), U.rows()) + tp.U * V.transpose();
  tp.B = B;
  tp.c = c;
  return tp;
}

/// det A via the matrix determinant lemma when the low-rank factors exist.
template <typename Scalar>
Scalar transition_determinant(const TransitionParams<Scalar>& tp) {
  if (!tp.has_low_rank()) return tp.A.determinant();
  const Eigen::Index r = tp.U.cols();
  return (Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Identity(r, r) + tp.V.transpose() * tp.U)
      .determinant();
}

template <typename Scalar, typename DerivedZ, typename DerivedU>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> forward_transition(const Eigen::MatrixBase<DerivedZ>& z,
                                                            const Eigen::MatrixBase<DerivedU>& u,
                                                            const TransitionParams<Scalar>& tp) {
  return tp.A * z + tp.B * u + tp.c;
}

struct InverseDiagnostics {
  bool ill_conditioned = false;
  double condition_estimate = 1.0;
};

/// A^{-1}(z_next - B u - c). Uses the Woodbury identity when A is a low-rank
/// perturbation of identity. If `diag` is given, it receives the 2-norm
/// condition number of A and flags it when it exceeds `1 / det_floor`.
template <typename Scalar, typename DerivedZ, typename DerivedU>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inverse_transition(const Eigen::MatrixBase<DerivedZ>& z_next,
                                                            const Eigen::MatrixBase<DerivedU>& u,
                                                            const TransitionParams<Scalar>& tp,
                                                            InverseDiagnostics* diag = nullptr,
                                                            Scalar det_floor = Scalar(1e-2)) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Vector y = z_next - tp.B * u - tp.c;
  if (diag != nullptr) {
    Eigen::JacobiSVD<Matrix> svd(tp.A);
    const auto& sv = svd.singularValues();
    const Scalar smin = sv(sv.size() - 1);
    diag->condition_estimate =
        smin > Scalar(0) ? static_cast<double>(sv(0) / smin) : std::numeric_limits<double>::infinity();
    diag->ill_conditioned = diag->condition_estimate > 1.0 / static_cast<double>(det_floor);
  }
  if (tp.has_low_rank()) {
    const Eigen::Index r = tp.U.cols();
    const Matrix core = Matrix::Identity(r, r) + tp.V.transpose() * tp.U;
    return y - tp.U * core.partialPivLu().solve(tp.V.transpose() * y);
  }
  return tp.A.partialPivLu().solve(y);
}

}  // namespace ddc
