#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "tgbplane/error.hpp"

// Decentralized adaptive commit pacing.
//
// A producer waits a gap T after every commit attempt. With the other N-1
// producers' attempt starts modelled as Poisson processes of rate 1/(T+tau),
// the chance that one of them lands inside our fragile window tau is
//
//     p(T) = 1 - exp(-(N-1) tau / (T + tau))
//
// and the fraction of time spent on manifest I/O is d(T) = tau / (T + tau).
// Both fall monotonically in T, so the smallest gap meeting p <= epsilon and
// d <= delta is the larger of the two closed-form bounds.
namespace tgbplane::dac {

struct DacParams {
  double delta = 0.5;     // duty budget, (0, 1]
  double epsilon = 0.05;  // conflict budget, (0, 1)
  double alpha = 0.2;     // EMA coefficient, (0, 1]
  double rho = 0.1;       // jitter magnitude, >= 0

  // Conflict budget used for end-to-end training runs.
  static DacParams end_to_end() {
    DacParams p;
    p.epsilon = 0.20;
    return p;
  }

  void validate() const {
    if (!(delta > 0.0 && delta <= 1.0)) fail(Errc::kConfigInvalid, "delta must lie in (0, 1]");
    if (!(epsilon > 0.0 && epsilon < 1.0)) fail(Errc::kConfigInvalid, "epsilon must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha <= 1.0)) fail(Errc::kConfigInvalid, "alpha must lie in (0, 1]");
    if (!(rho >= 0.0) || !std::isfinite(rho)) fail(Errc::kConfigInvalid, "rho must be >= 0");
  }
};

struct DacState {
  std::optional<double> tau_hat;  // unset until the first observation
  double gap = 0.0;
  std::uint64_t n_producers = 1;
  double t_last = 0.0;
};

namespace detail {
inline void require_nonneg(double x, const char* what) {
  if (!(x >= 0.0) || !std::isfinite(x)) fail(Errc::kDomainError, std::string(what) + " must be finite and >= 0");
}
inline void require_n(std::uint64_t n) {
  if (n < 1) fail(Errc::kDomainError, "producer count must be >= 1");
}
}  // namespace detail

inline double conflict_probability(double gap, double tau, std::uint64_t n) {
  detail::require_nonneg(gap, "gap");
  detail::require_nonneg(tau, "tau");
  detail::require_n(n);
  if (tau == 0.0) return 0.0;
  return -std::expm1(-static_cast<double>(n - 1) * tau / (gap + tau));
}

inline double duty(double gap, double tau) {
  detail::require_nonneg(gap, "gap");
  detail::require_nonneg(tau, "tau");
  if (tau == 0.0) return 0.0;
  return tau / (gap + tau);
}

// Smallest gap with conflict_probability <= epsilon.
inline double t_conf(double tau_hat, std::uint64_t n, double epsilon) {
  detail::require_nonneg(tau_hat, "tau_hat");
  detail::require_n(n);
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail(Errc::kDomainError, "epsilon must lie in (0, 1)");
  double rate = -std::log1p(-epsilon);
  return std::max(0.0, static_cast<double>(n - 1) * tau_hat / rate - tau_hat);
}

// Smallest gap with duty <= delta.
inline double t_cost(double tau_hat, double delta) {
  detail::require_nonneg(tau_hat, "tau_hat");
  if (!(delta > 0.0 && delta <= 1.0)) fail(Errc::kDomainError, "delta must lie in (0, 1]");
  return (1.0 - delta) / delta * tau_hat;
}

inline double t_star(double tau_hat, std::uint64_t n, const DacParams& params) {
  return std::max(t_conf(tau_hat, n, params.epsilon), t_cost(tau_hat, params.delta));
}

// `u` is a caller-drawn Uniform(0,1) sample.
inline double jittered_gap(double t_star_value, double rho, double u) {
  detail::require_nonneg(t_star_value, "t_star");
  detail::require_nonneg(rho, "rho");
  if (!(u >= 0.0 && u <= 1.0)) fail(Errc::kDomainError, "u must lie in [0, 1]");
  return t_star_value * (1.0 + rho * u);
}

inline double update_tau(double tau_hat, double observed, double alpha) {
  detail::require_nonneg(tau_hat, "tau_hat");
  detail::require_nonneg(observed, "observed");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(Errc::kDomainError, "alpha must lie in (0, 1]");
  return (1.0 - alpha) * tau_hat + alpha * observed;
}

// EMA step with seeding: the first observation becomes the estimate.
inline double observe_tau(const std::optional<double>& tau_hat, double observed, double alpha) {
  if (!tau_hat) {
    detail::require_nonneg(observed, "observed");
    return observed;
  }
  return update_tau(*tau_hat, observed, alpha);
}

// One controller step after an attempt: fold in the observed window, refresh
// N, recompute the jittered gap. Mutates only `state`.
inline void after_attempt(DacState& state, const DacParams& params, double observed_tau,
                          std::uint64_t n_producers, double u, double now) {
  state.tau_hat = observe_tau(state.tau_hat, observed_tau, params.alpha);
  state.n_producers = std::max<std::uint64_t>(1, n_producers);
  state.gap = jittered_gap(t_star(*state.tau_hat, state.n_producers, params), params.rho, u);
  state.t_last = now;
}

}  // namespace tgbplane::dac
