#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddc/transition.hpp"

namespace ddc {

/// Q (state, d x d, PSD) and R (action, m x m, PD) of the quadratic cost
/// J = sum_{t=1..T} (z_t - g)^T Q (z_t - g) + sum_{t=0..T-1} u_t^T R u_t.
template <typename Scalar>
class CostWeights {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  CostWeights(Matrix Q, Matrix R) : Q_(std::move(Q)), R_(std::move(R)) {
    if (Q_.rows() != Q_.cols() || R_.rows() != R_.cols()) throw std::invalid_argument("CostWeights: Q and R must be square");
    const Scalar tol = Scalar(1e-12) * std::max<Scalar>(Scalar(1), Q_.cwiseAbs().maxCoeff());
    if (!Q_.isApprox(Q_.transpose(), Scalar(1e-12)) || !R_.isApprox(R_.transpose(), Scalar(1e-12)))
      throw std::invalid_argument("CostWeights: Q and R must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> q(Q_), r(R_);
    if (q.eigenvalues().minCoeff() < -tol) throw std::invalid_argument("CostWeights: Q must be positive semidefinite");
    if (!(r.eigenvalues().minCoeff() > Scalar(0))) throw std::invalid_argument("CostWeights: R must be positive definite");
  }

  /// Q = q I_d, R = r I_m.
  static CostWeights scaled_identity(Eigen::Index d, Eigen::Index m, Scalar q, Scalar r) {
    return CostWeights(q * Matrix::Identity(d, d), r * Matrix::Identity(m, m));
  }

  const Matrix& Q() const { return Q_; }
  const Matrix& R() const { return R_; }

 private:
  Matrix Q_;
  Matrix R_;
};

struct IlqrOptions {
  int max_iterations = 50;
  /// Converged once (J_old - J_new) / J_old drops below this.
  double tolerance = 1e-4;
  double mu_min = 1e-6;
  double mu_max = 1e3;
  double mu_factor = 10.0;
  /// Backtracking halvings tried from step 1.
  int max_halvings = 20;
  /// Per-coordinate action bound, enforced by clamping in the forward pass.
  double u_max = std::numeric_limits<double>::infinity();
};

template <typename Scalar>
struct IlqrResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Vector> actions;     // T
  std::vector<Vector> trajectory;  // T + 1, trajectory[0] = z_init
  Scalar cost = Scalar(0);
  /// Cost after each accepted iteration, starting with the initial nominal.
  std::vector<Scalar> cost_history;
  int iterations = 0;
  bool converged = false;
  /// Non-empty when the regularization ladder was exhausted.
  std::string stop_reason;
};

class PlanningError : public std::runtime_error {
 public:
  PlanningError(const std::string& what, int iteration)
      : std::runtime_error("iLQR iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Local dynamics at a latent point: z' = A z + B u + c.
template <typename Scalar>
using LocalDynamics =
    std::function<TransitionParams<Scalar>(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z)>;

namespace detail {

template <typename Scalar>
Scalar plan_cost(const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& z,
                 const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& u,
                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& goal, const CostWeights<Scalar>& w) {
  Scalar j = Scalar(0);
  for (std::size_t t = 1; t < z.size(); ++t) {
    const auto e = z[t] - goal;
    j += e.dot(w.Q() * e);
  }
  for (const auto& ut : u) j += ut.dot(w.R() * ut);
  return j;
}

template <typename Scalar>
bool all_finite(const TransitionParams<Scalar>& tp) {
  return tp.A.allFinite() && tp.B.allFinite() && tp.c.allFinite();
}

}  // namespace detail

/// Rolls `actions` through the local dynamics from z0, re-linearizing at
/// every visited point.
template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> rollout(
    const LocalDynamics<Scalar>& dynamics, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z0,
    const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& actions) {
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> z{z0};
  for (const auto& u : actions) z.push_back(forward_transition(z.back(), u, dynamics(z.back())));
  return z;
}

/// Iterative LQR with a Levenberg-style regularization ladder on Q_uu and a
/// backtracking line search. Linearization at the nominal uses the local
/// (A, B) of the model directly.
template <typename Scalar>
IlqrResult<Scalar> ilqr(const LocalDynamics<Scalar>& dynamics, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& z_init,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& goal,
                        std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> actions,
                        const CostWeights<Scalar>& w, const IlqrOptions& opt) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const int T = static_cast<int>(actions.size());
  if (T < 1) throw std::invalid_argument("ilqr: horizon must be at least 1");
  const Eigen::Index d = z_init.size(), m = actions.front().size();
  if (w.Q().rows() != d || w.R().rows() != m || goal.size() != d)
    throw std::invalid_argument("ilqr: cost weights do not match the state/action dimensions");
  const Scalar u_max = static_cast<Scalar>(opt.u_max);
  auto clamp = [&](Vector u) { return Vector(u.cwiseMax(-u_max).cwiseMin(u_max)); };

  for (auto& u : actions) u = clamp(u);
  IlqrResult<Scalar> res;
  res.actions = actions;
  res.trajectory = rollout(dynamics, z_init, actions);
  res.cost = detail::plan_cost(res.trajectory, res.actions, goal, w);
  res.cost_history.push_back(res.cost);

  const Matrix Q2 = Scalar(2) * w.Q(), R2 = Scalar(2) * w.R();
  std::vector<Matrix> K(T);
  std::vector<Vector> k(T);
  double mu = 0.0;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    std::vector<TransitionParams<Scalar>> lin(T);
    for (int t = 0; t < T; ++t) {
      lin[t] = dynamics(res.trajectory[t]);
      if (!detail::all_finite(lin[t]) || !res.trajectory[t].allFinite())
        throw PlanningError("non-finite dynamics along the nominal at t = " + std::to_string(t), it);
    }

    // Backward pass; restarts with larger mu until Q_uu is positive definite
    // and every value Hessian is symmetric PSD.
    bool backward_ok = false;
    Scalar expected = Scalar(0);  // predicted reduction of a full step
    while (!backward_ok) {
      expected = Scalar(0);
      Vector vx = Q2 * (res.trajectory[T] - goal);
      Matrix vxx = Q2;
      backward_ok = true;
      for (int t = T - 1; t >= 0; --t) {
        const Matrix& A = lin[t].A;
        const Matrix& B = lin[t].B;
        const Vector lx = t > 0 ? Vector(Q2 * (res.trajectory[t] - goal)) : Vector::Zero(d);
        const Matrix lxx = t > 0 ? Q2 : Matrix::Zero(d, d);
        const Vector qx = lx + A.transpose() * vx;
        const Vector qu = R2 * res.actions[t] + B.transpose() * vx;
        const Matrix qxx = lxx + A.transpose() * vxx * A;
        const Matrix qux = B.transpose() * vxx * A;
        const Matrix quu = R2 + B.transpose() * vxx * B + static_cast<Scalar>(mu) * Matrix::Identity(m, m);
        Eigen::LLT<Matrix> llt(quu);
        if (llt.info() != Eigen::Success) {
          backward_ok = false;
          break;
        }
        k[t] = -llt.solve(qu);
        K[t] = -llt.solve(qux);
        expected -= k[t].dot(qu) + Scalar(0.5) * k[t].dot(quu * k[t]);
        vx = qx + K[t].transpose() * quu * k[t] + K[t].transpose() * qu + qux.transpose() * k[t];
        vxx = qxx + K[t].transpose() * quu * K[t] + K[t].transpose() * qux + qux.transpose() * K[t];
        vxx = (Scalar(0.5) * (vxx + vxx.transpose())).eval();  // eval: the transpose aliases vxx
        const Scalar tol = Scalar(1e-9) * std::max<Scalar>(Scalar(1), vxx.cwiseAbs().maxCoeff());
        if (!vxx.allFinite() || Eigen::SelfAdjointEigenSolver<Matrix>(vxx, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() < -tol) {
          backward_ok = false;
          break;
        }
      }
      if (!backward_ok) {
        mu = std::max(opt.mu_min, mu * opt.mu_factor);
        if (mu > opt.mu_max) {
          res.stop_reason = "regularization exceeded mu_max in the backward pass";
          return res;
        }
      }
    }

    if (expected <= static_cast<Scalar>(opt.tolerance) * Scalar(1e-3) * std::max(res.cost, Scalar(1e-12))) {
      res.converged = true;  // the quadratic model predicts no meaningful descent
      return res;
    }

    // Forward pass with backtracking.
    bool accepted = false;
    Scalar alpha = Scalar(1);
    for (int h = 0; h <= opt.max_halvings && !accepted; ++h, alpha *= Scalar(0.5)) {
      std::vector<Vector> u_new(T), z_new{z_init};
      bool finite = true;
      for (int t = 0; t < T && finite; ++t) {
        u_new[t] = clamp(res.actions[t] + alpha * k[t] + K[t] * (z_new[t] - res.trajectory[t]));
        z_new.push_back(forward_transition(z_new[t], u_new[t], dynamics(z_new[t])));
        finite = z_new.back().allFinite();  // an overflowing trial is rejected, not evaluated further
      }
      if (!finite) continue;
      const Scalar j = detail::plan_cost(z_new, u_new, goal, w);
      if (std::isfinite(static_cast<double>(j)) && j < res.cost) {
        const Scalar old = res.cost;
        res.actions = std::move(u_new);
        res.trajectory = std::move(z_new);
        res.cost = j;
        res.cost_history.push_back(j);
        res.iterations = it;
        accepted = true;
        mu = mu / opt.mu_factor < opt.mu_min ? 0.0 : mu / opt.mu_factor;
        if (old <= Scalar(0) || (old - j) / old < static_cast<Scalar>(opt.tolerance)) {
          res.converged = true;
          return res;
        }
      }
    }
    if (!accepted) {
      // No descent at any step length: either at a local optimum or the
      // quadratic model is poor; stiffen it.
      if (mu == 0.0 && res.cost <= Scalar(0)) {
        res.converged = true;
        return res;
      }
      mu = std::max(opt.mu_min, mu * opt.mu_factor);
      if (mu > opt.mu_max) {
        res.converged = true;  // no further improvement is available
        res.stop_reason = "no descent direction up to mu_max";
        return res;
      }
      res.iterations = it;
    }
  }
  return res;
}

}  // namespace ddc
