// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-only helpers: a deterministic RNG and the brute-force Bouligand cone
// oracle used to cross-check tangent_cone. The oracle stays independent of
// the production cone code: it only uses set membership/margins and the
// limit-of-difference-quotients definition.

#include <cmath>
#include <cstdint>
#include <vector>

#include "hysim/sets.hpp"

namespace hysim::testing {

struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed * 6364136223846793005ULL + 1442695040888963407ULL) {}

  double next01() {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>((state >> 11) & ((1ULL << 53) - 1)) / static_cast<double>(1ULL << 53);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next01(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next01() * (hi - lo + 1)) % (hi - lo + 1);
  }
  Vec unit_direction(int dim) {
    // Box–Muller-ish via central limit is overkill; use rejection-free polar
    Vec d(static_cast<size_t>(dim));
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double u1 = std::max(next01(), 1e-12);
        const double u2 = next01();
        d[static_cast<size_t>(k)] = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        n2 += d[static_cast<size_t>(k)] * d[static_cast<size_t>(k)];
      }
    } while (n2 < 1e-12);
    return scale(std::move(d), 1.0 / std::sqrt(n2));
  }
};

/// Direction grid on the unit sphere: 100 angles in 2D, seeded random unit
/// vectors otherwise.
inline std::vector<Vec> direction_grid(int dim, int count, Rng& rng) {
  std::vector<Vec> out;
  if (dim == 1) {
    out.push_back({1.0});
    out.push_back({-1.0});
    return out;
  }
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 6.283185307179586 * i / count;
      out.push_back({std::cos(th), std::sin(th)});
    }
    return out;
  }
  for (int i = 0; i < count; ++i) out.push_back(rng.unit_direction(dim));
  return out;
}

/// d is accepted as a tangent direction of S at xi when dist(xi + tau d, S)
/// vanishes faster than tau along the refinement tau = 1e-2, 1e-3, 1e-4.
/// For the convex sets under test the ratio is monotone, so the smallest tau
/// decides.
inline bool oracle_accepts_direction(const SetExpr& S, const Vec& xi, const Vec& d,
                                     double ratio_tol = 1e-6) {
  for (double tau : {1e-2, 1e-3, 1e-4}) {
    const Vec p = axpy(xi, tau, d);
    const double dist = std::max(0.0, set_margin(S, p));
    if (tau == 1e-4) return dist <= ratio_tol * tau + 1e-15;
    (void)dist;
  }
  return false;
}

/// Random closed box with side lengths in [0.2, 2] around a random center.
inline Box random_box(Rng& rng, int dim) {
  Vec lo(static_cast<size_t>(dim)), hi(static_cast<size_t>(dim));
  for (int k = 0; k < dim; ++k) {
    const double c = rng.uniform(-3.0, 3.0);
    const double half = rng.uniform(0.1, 1.0);
    lo[static_cast<size_t>(k)] = c - half;
    hi[static_cast<size_t>(k)] = c + half;
  }
  return Box::closed(lo, hi);
}

/// A point on (or in) the box: project a random nearby point onto the box,
/// which lands on faces/edges/corners with decent frequency.
inline Vec random_box_point(Rng& rng, const Box& b) {
  Vec p(static_cast<size_t>(b.dim()));
  for (int k = 0; k < b.dim(); ++k) {
    const auto& iv = b.iv[static_cast<size_t>(k)];
    const int mode = rng.uniform_int(0, 3);
    if (mode == 0)
      p[static_cast<size_t>(k)] = iv.lo;
    else if (mode == 1)
      p[static_cast<size_t>(k)] = iv.hi;
    else
      p[static_cast<size_t>(k)] = rng.uniform(iv.lo, iv.hi);
  }
  return p;
}

}  // namespace hysim::testing
