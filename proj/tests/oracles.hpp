#pragma once

// Independent reference computations used to check the library. None of
// these call into the code under test.

#include <cmath>
#include <cstdint>
#include <set>
#include <tuple>
#include <vector>

namespace tgbtest::oracle {

// Forward formulas, written out directly.
inline double p_conflict(double gap, double tau, std::uint64_t n) {
  if (tau == 0.0) return 0.0;
  return 1.0 - std::exp(-static_cast<double>(n - 1) * tau / (gap + tau));
}

inline double duty(double gap, double tau) { return tau == 0.0 ? 0.0 : tau / (gap + tau); }

// Smallest gap T >= 0 satisfying `ok(T)` for a predicate that is false below
// some threshold and true above it. Bisects to adjacent doubles.
template <typename Pred>
double bisect_threshold(Pred ok) {
  if (ok(0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (!ok(hi)) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < 2000; ++i) {
    double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline double t_conf(double tau, std::uint64_t n, double eps) {
  return bisect_threshold([&](double t) { return p_conflict(t, tau, n) <= eps; });
}

inline double t_star(double tau, std::uint64_t n, double eps, double delta) {
  return bisect_threshold([&](double t) { return p_conflict(t, tau, n) <= eps && duty(t, tau) <= delta; });
}

// Enumerates the (dp, cp, tp, pp) mesh in rank order and returns the
// (d, c) owned by each rank.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> unfold_mesh(std::uint32_t dp, std::uint32_t cp,
                                                                         std::uint32_t tp, std::uint32_t pp) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t d = 0; d < dp; ++d)
    for (std::uint32_t c = 0; c < cp; ++c)
      for (std::uint32_t t = 0; t < tp; ++t)
        for (std::uint32_t p = 0; p < pp; ++p) out.emplace_back(d, c);
  return out;
}

}  // namespace tgbtest::oracle
