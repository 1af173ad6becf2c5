#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace cbridge {

// Classical RK4 steps for the two linear systems living on a ladder of states
// x, x+1, ..., y (index j <-> state x + j).
//
// Backward (hitting probabilities):  d/dt h_j = rate_j (h_j - h_{j+1}),  h_{n+1} = 0
// Forward  (occupation):             d/dt q_j = k_{j-1} q_{j-1} - k_j q_j
//
// Both are templated on the scalar so the same code runs in double and in the
// extended-exponent ExtReal.

namespace detail {

template <typename Scalar>
void backward_rhs(const std::vector<Scalar>& v, const Eigen::VectorXd& rate, std::vector<Scalar>& out) {
  const std::size_t n = v.size();
  for (std::size_t j = 0; j + 1 < n; ++j) out[j] = Scalar(rate[static_cast<Eigen::Index>(j)]) * (v[j] - v[j + 1]);
  out[n - 1] = Scalar(rate[static_cast<Eigen::Index>(n - 1)]) * v[n - 1];
}

template <typename Scalar>
void forward_rhs(const std::vector<Scalar>& q, const Eigen::VectorXd& k, std::vector<Scalar>& out) {
  const std::size_t n = q.size();
  Scalar inflow(0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const Scalar outflow = Scalar(k[static_cast<Eigen::Index>(j)]) * q[j];
    out[j] = inflow - outflow;
    inflow = outflow;
  }
}

}  // namespace detail

/// One RK4 step of the backward system from t to t - dt. The rate vectors are
/// sampled at t, t - dt/2 and t - dt.
template <typename Scalar>
void backward_ladder_step(std::vector<Scalar>& h, const Eigen::VectorXd& rate_start,
                          const Eigen::VectorXd& rate_mid, const Eigen::VectorXd& rate_end, double dt) {
  const std::size_t n = h.size();
  std::vector<Scalar> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const Scalar half(-0.5 * dt);
  const Scalar full(-dt);
  detail::backward_rhs(h, rate_start, k1);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = h[j] + half * k1[j];
  detail::backward_rhs(tmp, rate_mid, k2);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = h[j] + half * k2[j];
  detail::backward_rhs(tmp, rate_mid, k3);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = h[j] + full * k3[j];
  detail::backward_rhs(tmp, rate_end, k4);
  const Scalar sixth(-dt / 6.0);
  for (std::size_t j = 0; j < n; ++j)
    h[j] = h[j] + sixth * (k1[j] + Scalar(2.0) * k2[j] + Scalar(2.0) * k3[j] + k4[j]);
}

/// One RK4 step of the forward system from t to t + dt with jump rates sampled
/// at t, t + dt/2 and t + dt. Preserves the total mass up to rounding.
template <typename Scalar>
void forward_ladder_step(std::vector<Scalar>& q, const Eigen::VectorXd& k_start,
                         const Eigen::VectorXd& k_mid, const Eigen::VectorXd& k_end, double dt) {
  const std::size_t n = q.size();
  std::vector<Scalar> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const Scalar half(0.5 * dt);
  const Scalar full(dt);
  detail::forward_rhs(q, k_start, k1);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = q[j] + half * k1[j];
  detail::forward_rhs(tmp, k_mid, k2);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = q[j] + half * k2[j];
  detail::forward_rhs(tmp, k_mid, k3);
  for (std::size_t j = 0; j < n; ++j) tmp[j] = q[j] + full * k3[j];
  detail::forward_rhs(tmp, k_end, k4);
  const Scalar sixth(dt / 6.0);
  for (std::size_t j = 0; j < n; ++j)
    q[j] = q[j] + sixth * (k1[j] + Scalar(2.0) * k2[j] + Scalar(2.0) * k3[j] + k4[j]);
}

}  // namespace cbridge
