// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "hysim/errors.hpp"

namespace hysim {

/// Dense state/input vectors. Dimensions in this library are desk-scale
/// (n <= 8), so a plain std::vector keeps everything value-semantic.
using Vec = std::vector<double>;

/// Row-major dense matrix for affine maps.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // rows*cols, row-major

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Vec mat_vec(const Mat& m, const Vec& x) {
  if (static_cast<int>(x.size()) != m.cols)
    fail(errc::dimension_mismatch, "mat_vec: expected dim " + std::to_string(m.cols));
  Vec y(static_cast<size_t>(m.rows), 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += m(r, c) * x[static_cast<size_t>(c)];
    y[static_cast<size_t>(r)] = s;
  }
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double dist2(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline Vec add(Vec a, const Vec& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec sub(Vec a, const Vec& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Vec scale(Vec a, double s) {
  for (double& v : a) v *= s;
  return a;
}

/// a + s*b
inline Vec axpy(Vec a, double s, const Vec& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
  return a;
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec r = a;
  r.insert(r.end(), b.begin(), b.end());
  return r;
}

inline Vec slice(const Vec& a, size_t begin, size_t end) {
  return Vec(a.begin() + static_cast<long>(begin), a.begin() + static_cast<long>(end));
}

constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool approx_eq(double a, double b, double tol = 1e-12) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Decimal form that round-trips the exact double (17 significant digits).
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace hysim
