// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/interval.hpp"
#include "hysim/linalg.hpp"

namespace hysim {

// ---------------------------------------------------------------------------
// Output maps h : R^{n_x} -> R^{n_y} for output-form sets {(z,w) : h(z)+w in S_y}
// ---------------------------------------------------------------------------

struct AffineOutputMap {
  Mat A;
  Vec c;
  bool open_map = false;  // declared: maps open sets to open sets

  Vec eval(const Vec& z) const { return add(mat_vec(A, z), c); }
};

/// Componentwise strictly monotone piecewise-linear map: y_i = table_i(z_i).
struct MonotoneOutputMap {
  struct Table {
    std::vector<double> xs;  // strictly increasing
    std::vector<double> ys;  // strictly monotone (either direction)
  };
  std::vector<Table> comps;
  bool open_map = false;

  static double interp(const Table& t, double x) {
    const auto& xs = t.xs;
    size_t i;
    if (x <= xs.front())
      i = 0;
    else if (x >= xs.back())
      i = xs.size() - 2;
    else
      i = static_cast<size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    const double s = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return t.ys[i] + s * (t.ys[i + 1] - t.ys[i]);  // end segments extrapolate
  }

  static double inverse(const Table& t, double y) {
    const auto& ys = t.ys;
    const size_t n = ys.size();
    const bool inc = ys.back() >= ys.front();
    size_t i;
    if ((inc && y <= ys.front()) || (!inc && y >= ys.front())) {
      i = 0;
    } else if ((inc && y >= ys.back()) || (!inc && y <= ys.back())) {
      i = n - 2;
    } else {
      i = 0;
      for (size_t k = 0; k + 1 < n; ++k) {
        const double a = std::min(ys[k], ys[k + 1]), b = std::max(ys[k], ys[k + 1]);
        if (y >= a && y <= b) {
          i = k;
          break;
        }
      }
    }
    const double dy = ys[i + 1] - ys[i];
    if (dy == 0.0) return t.xs[i];
    const double s = (y - ys[i]) / dy;
    return t.xs[i] + s * (t.xs[i + 1] - t.xs[i]);
  }

  Vec eval(const Vec& z) const {
    Vec y(comps.size());
    for (size_t i = 0; i < comps.size(); ++i) y[i] = interp(comps[i], z[i]);
    return y;
  }
};

using OutputMap = std::variant<AffineOutputMap, MonotoneOutputMap>;

inline Vec output_eval(const OutputMap& h, const Vec& z) {
  return std::visit([&](const auto& m) { return m.eval(z); }, h);
}
inline int output_in_dim(const OutputMap& h) {
  if (const auto* a = std::get_if<AffineOutputMap>(&h)) return a->A.cols;
  return static_cast<int>(std::get<MonotoneOutputMap>(h).comps.size());
}
inline int output_out_dim(const OutputMap& h) {
  if (const auto* a = std::get_if<AffineOutputMap>(&h)) return a->A.rows;
  return static_cast<int>(std::get<MonotoneOutputMap>(h).comps.size());
}
inline bool output_is_open_map(const OutputMap& h) {
  return std::visit([](const auto& m) { return m.open_map; }, h);
}

inline OutputMap identity_output_map(int n, bool open_map = true) {
  AffineOutputMap m;
  m.A = Mat::identity(n);
  m.c = Vec(static_cast<size_t>(n), 0.0);
  m.open_map = open_map;
  return m;
}

// ---------------------------------------------------------------------------
// SetExpr
// ---------------------------------------------------------------------------

class SetExpr;

struct BoxSet {
  Box box;
};

/// Finite list of halfspaces a_i . x <= b_i, rows normalized to |a_i| = 1.
struct PolyhedronSet {
  std::vector<Vec> a;
  Vec b;
};

/// {(z,w) : h(z)+w in inner}; with `outside` the complement in y-space:
/// {(z,w) : h(z)+w not in inner}. Openness lives in `inner`'s endpoint flags
/// (an outside-form over an open inner box is a closed set). n_w may be zero,
/// which makes this a plain state-space condition {z : h(z) in inner}.
struct OutputFormSet {
  OutputMap h;
  Box inner;
  bool outside = false;
  int n_x = 0;
  int n_w = 0;
};

struct ProductSet {
  std::vector<SetExpr> parts;
};

struct IntersectionSet {
  std::vector<SetExpr> parts;
};

/// Open complement of a closed set.
struct ComplementOpenSet {
  std::shared_ptr<const SetExpr> inner;
};

/// Structured set description for C, D, W and friends. Immutable value type;
/// copies share nodes.
class SetExpr {
 public:
  using Node =
      std::variant<BoxSet, PolyhedronSet, OutputFormSet, ProductSet, IntersectionSet, ComplementOpenSet>;

  SetExpr() : SetExpr(BoxSet{Box::whole(0)}, 0) {}

  static SetExpr box(Box b) {
    const int d = b.dim();
    return SetExpr(BoxSet{std::move(b)}, d);
  }

  static SetExpr polyhedron(std::vector<Vec> rows, Vec rhs) {
    if (rows.empty() || rows.size() != rhs.size())
      fail(errc::bad_config, "polyhedron needs matching rows/rhs");
    const int d = static_cast<int>(rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(rows[i].size()) != d) fail(errc::dimension_mismatch, "polyhedron row dim");
      const double n = norm2(rows[i]);
      if (n < 1e-14) fail(errc::bad_config, "polyhedron row with zero normal");
      rows[i] = scale(std::move(rows[i]), 1.0 / n);
      rhs[i] /= n;
    }
    return SetExpr(PolyhedronSet{std::move(rows), std::move(rhs)}, d);
  }

  static SetExpr output_form(OutputMap h, Box inner, bool outside, int n_x, int n_w) {
    if (output_in_dim(h) != n_x) fail(errc::dimension_mismatch, "output map domain dim");
    if (n_w != 0 && inner.dim() != n_w)
      fail(errc::dimension_mismatch, "output-form inner box dim must equal n_w");
    if (output_out_dim(h) != inner.dim())
      fail(errc::dimension_mismatch, "output map range dim vs inner box");
    return SetExpr(OutputFormSet{std::move(h), std::move(inner), outside, n_x, n_w}, n_x + n_w);
  }

  static SetExpr product(std::vector<SetExpr> parts) {
    int d = 0;
    for (const auto& p : parts) d += p.dim();
    return SetExpr(ProductSet{std::move(parts)}, d);
  }

  static SetExpr intersection(std::vector<SetExpr> parts) {
    if (parts.empty()) fail(errc::bad_config, "intersection of nothing");
    const int d = parts.front().dim();
    for (const auto& p : parts)
      if (p.dim() != d) fail(errc::dimension_mismatch, "intersection part dims differ");
    return SetExpr(IntersectionSet{std::move(parts)}, d);
  }

  static SetExpr complement_open(SetExpr closed_inner) {
    const int d = closed_inner.dim();
    return SetExpr(ComplementOpenSet{std::make_shared<const SetExpr>(std::move(closed_inner))}, d);
  }

  int dim() const { return dim_; }
  const Node& node() const { return *node_; }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(node_.get());
  }

 private:
  SetExpr(Node n, int d) : node_(std::make_shared<const Node>(std::move(n))), dim_(d) {}

  std::shared_ptr<const Node> node_;
  int dim_ = 0;
};

// ---------------------------------------------------------------------------
// Membership and margin
// ---------------------------------------------------------------------------

inline bool set_contains(const SetExpr& S, const Vec& x, double tol = 0.0) {
  if (static_cast<int>(x.size()) != S.dim())
    fail(errc::dimension_mismatch,
         "set_contains: dim " + std::to_string(x.size()) + " vs " + std::to_string(S.dim()));
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          return n.box.contains(x, tol);
        } else if constexpr (std::is_same_v<T, PolyhedronSet>) {
          for (size_t i = 0; i < n.a.size(); ++i)
            if (dot(n.a[i], x) > n.b[i] + tol) return false;
          return true;
        } else if constexpr (std::is_same_v<T, OutputFormSet>) {
          const Vec z = slice(x, 0, static_cast<size_t>(n.n_x));
          const Vec w = slice(x, static_cast<size_t>(n.n_x), x.size());
          Vec y = output_eval(n.h, z);
          for (size_t i = 0; i < y.size(); ++i) y[i] += (n.n_w ? w[i] : 0.0);
          return n.outside ? !n.inner.contains(y, -tol) : n.inner.contains(y, tol);
        } else if constexpr (std::is_same_v<T, ProductSet>) {
          size_t off = 0;
          for (const auto& p : n.parts) {
            const Vec part = slice(x, off, off + static_cast<size_t>(p.dim()));
            if (!set_contains(p, part, tol)) return false;
            off += static_cast<size_t>(p.dim());
          }
          return true;
        } else if constexpr (std::is_same_v<T, IntersectionSet>) {
          for (const auto& p : n.parts)
            if (!set_contains(p, x, tol)) return false;
          return true;
        } else {  // ComplementOpenSet
          return !set_contains(*n.inner, x, -tol);
        }
      },
      S.node());
}

/// Signed boundary distance: negative inside, zero on the boundary, positive
/// outside. Exact Euclidean for boxes, exact max halfspace violation for
/// polyhedra; output forms measure in y-space. Open complements have no
/// margin (UnsupportedVariant).
inline double set_margin(const SetExpr& S, const Vec& x) {
  if (static_cast<int>(x.size()) != S.dim()) fail(errc::dimension_mismatch, "set_margin");
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          return n.box.margin(x);
        } else if constexpr (std::is_same_v<T, PolyhedronSet>) {
          double m = -kInf;
          for (size_t i = 0; i < n.a.size(); ++i) m = std::max(m, dot(n.a[i], x) - n.b[i]);
          return m;
        } else if constexpr (std::is_same_v<T, OutputFormSet>) {
          const Vec z = slice(x, 0, static_cast<size_t>(n.n_x));
          const Vec w = slice(x, static_cast<size_t>(n.n_x), x.size());
          Vec y = output_eval(n.h, z);
          for (size_t i = 0; i < y.size(); ++i) y[i] += (n.n_w ? w[i] : 0.0);
          const double m = n.inner.closure().margin(y);
          return n.outside ? -m : m;
        } else if constexpr (std::is_same_v<T, ProductSet>) {
          double out2 = 0.0;
          double inside = -kInf;
          size_t off = 0;
          for (const auto& p : n.parts) {
            const Vec part = slice(x, off, off + static_cast<size_t>(p.dim()));
            const double m = set_margin(p, part);
            if (m > 0.0)
              out2 += m * m;
            else
              inside = std::max(inside, m);
            off += static_cast<size_t>(p.dim());
          }
          return out2 > 0.0 ? std::sqrt(out2) : inside;
        } else if constexpr (std::is_same_v<T, IntersectionSet>) {
          double m = -kInf;
          for (const auto& p : n.parts) m = std::max(m, set_margin(p, x));
          return m;
        } else {
          fail(errc::unsupported_variant, "margin of an open complement");
        }
      },
      S.node());
}

// ---------------------------------------------------------------------------
// Halfspace form (closed Box / Polyhedron / affine inside-OutputForm)
// ---------------------------------------------------------------------------

/// Halfspace description when the variant admits one exactly.
inline std::optional<PolyhedronSet> as_polyhedron(const SetExpr& S) {
  if (const auto* bs = S.get_if<BoxSet>()) {
    if (!bs->box.is_closed()) return std::nullopt;
    PolyhedronSet p;
    const int d = bs->box.dim();
    for (int k = 0; k < d; ++k) {
      const auto& iv = bs->box.iv[static_cast<size_t>(k)];
      if (std::isfinite(iv.hi)) {
        Vec row(static_cast<size_t>(d), 0.0);
        row[static_cast<size_t>(k)] = 1.0;
        p.a.push_back(row);
        p.b.push_back(iv.hi);
      }
      if (std::isfinite(iv.lo)) {
        Vec row(static_cast<size_t>(d), 0.0);
        row[static_cast<size_t>(k)] = -1.0;
        p.a.push_back(row);
        p.b.push_back(-iv.lo);
      }
    }
    return p;
  }
  if (const auto* ps = S.get_if<PolyhedronSet>()) return *ps;
  if (const auto* of = S.get_if<OutputFormSet>()) {
    if (of->outside || !of->inner.is_closed()) return std::nullopt;
    const auto* aff = std::get_if<AffineOutputMap>(&of->h);
    if (aff == nullptr) return std::nullopt;
    PolyhedronSet p;
    const int d = of->n_x + of->n_w;
    for (int k = 0; k < of->inner.dim(); ++k) {
      const auto& iv = of->inner.iv[static_cast<size_t>(k)];
      Vec row(static_cast<size_t>(d), 0.0);
      for (int j = 0; j < of->n_x; ++j) row[static_cast<size_t>(j)] = aff->A(k, j);
      if (of->n_w) row[static_cast<size_t>(of->n_x + k)] = 1.0;
      if (std::isfinite(iv.hi)) {
        p.a.push_back(row);
        p.b.push_back(iv.hi - aff->c[static_cast<size_t>(k)]);
      }
      if (std::isfinite(iv.lo)) {
        p.a.push_back(scale(row, -1.0));
        p.b.push_back(aff->c[static_cast<size_t>(k)] - iv.lo);
      }
    }
    // normalize like the factory does
    for (size_t i = 0; i < p.a.size(); ++i) {
      const double n = norm2(p.a[i]);
      if (n < 1e-14) continue;
      p.a[i] = scale(std::move(p.a[i]), 1.0 / n);
      p.b[i] /= n;
    }
    return p;
  }
  if (const auto* is = S.get_if<IntersectionSet>()) {
    PolyhedronSet all;
    for (const auto& part : is->parts) {
      auto sub = as_polyhedron(part);
      if (!sub) return std::nullopt;
      all.a.insert(all.a.end(), sub->a.begin(), sub->a.end());
      all.b.insert(all.b.end(), sub->b.begin(), sub->b.end());
    }
    return all;
  }
  if (const auto* pr = S.get_if<ProductSet>()) {
    PolyhedronSet all;
    int off = 0;
    const int d = S.dim();
    for (const auto& part : pr->parts) {
      auto sub = as_polyhedron(part);
      if (!sub) return std::nullopt;
      for (size_t i = 0; i < sub->a.size(); ++i) {
        Vec row(static_cast<size_t>(d), 0.0);
        for (int j = 0; j < part.dim(); ++j) row[static_cast<size_t>(off + j)] = sub->a[i][static_cast<size_t>(j)];
        all.a.push_back(std::move(row));
        all.b.push_back(sub->b[i]);
      }
      off += part.dim();
    }
    return all;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Fourier–Motzkin elimination (exact linear feasibility / projection)
// ---------------------------------------------------------------------------

namespace fm {

struct Row {
  Vec a;
  double b = 0.0;
};

inline void prune(std::vector<Row>& rows) {
  // drop duplicates after normalization; keeps FM from ballooning
  for (auto& r : rows) {
    const double n = norm2(r.a);
    if (n > 1e-14) {
      r.a = scale(std::move(r.a), 1.0 / n);
      r.b /= n;
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    if (x.b != y.b) return x.b < y.b;
    return x.a < y.a;
  });
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const Row& x, const Row& y) {
                           if (std::abs(x.b - y.b) > 1e-12) return false;
                           for (size_t i = 0; i < x.a.size(); ++i)
                             if (std::abs(x.a[i] - y.a[i]) > 1e-12) return false;
                           return true;
                         }),
             rows.end());
}

/// Eliminate variable `k`; the result has the same feasible projection.
inline std::vector<Row> eliminate(const std::vector<Row>& rows, size_t k) {
  std::vector<Row> zero, pos, neg;
  for (const auto& r : rows) {
    const double c = r.a[k];
    if (std::abs(c) < 1e-12) {
      zero.push_back(r);
    } else if (c > 0.0) {
      pos.push_back(r);
    } else {
      neg.push_back(r);
    }
  }
  std::vector<Row> out = zero;
  for (const auto& p : pos)
    for (const auto& n : neg) {
      const double cp = p.a[k], cn = -n.a[k];
      Row r;
      r.a = add(scale(p.a, cn), scale(n.a, cp));
      r.b = cn * p.b + cp * n.b;
      r.a[k] = 0.0;
      out.push_back(std::move(r));
    }
  prune(out);
  return out;
}

/// Feasibility of {u : rows hold} by eliminating every variable.
inline bool feasible(std::vector<Row> rows, size_t nvars, double tol = 1e-9) {
  for (size_t k = 0; k < nvars; ++k) rows = eliminate(rows, k);
  for (const auto& r : rows)
    if (r.b < -tol) return false;
  return true;
}

/// Project onto the first `keep` variables (eliminate the trailing ones).
inline std::vector<Row> project_prefix(std::vector<Row> rows, size_t keep, size_t nvars) {
  for (size_t k = keep; k < nvars; ++k) rows = eliminate(rows, k);
  std::vector<Row> out;
  for (auto& r : rows) {
    Vec head = slice(r.a, 0, keep);
    if (norm2(head) < 1e-12) {
      if (r.b < -1e-9) {
        // infeasible everywhere: encode as 0 <= -1 over the kept vars
        out.clear();
        out.push_back(Row{Vec(keep, 0.0), -1.0});
        return out;
      }
      continue;
    }
    out.push_back(Row{std::move(head), r.b});
  }
  prune(out);
  return out;
}

}  // namespace fm

// ---------------------------------------------------------------------------
// Projection  Pi_x(M, W)
// ---------------------------------------------------------------------------

struct Projection {
  SetExpr set;        // exact projection, or an over-approximation when !exact
  bool exact = true;
  std::optional<SetExpr> under;  // sampled under-approximation when !exact
  std::string note;
};

namespace detail {

/// Preimage {z : h(z) in Y} for supported h; nullopt when not representable.
inline std::optional<SetExpr> output_preimage(const OutputMap& h, const Box& Y) {
  if (const auto* aff = std::get_if<AffineOutputMap>(&h)) {
    // diagonal affine: exact per-axis intervals with openness preserved
    const int n = aff->A.cols;
    bool diagonal = aff->A.rows == n;
    if (diagonal) {
      for (int r = 0; r < aff->A.rows && diagonal; ++r)
        for (int c = 0; c < n; ++c)
          if (r != c && std::abs(aff->A(r, c)) > 0.0) diagonal = false;
      for (int r = 0; r < aff->A.rows && diagonal; ++r)
        if (aff->A(r, r) == 0.0) diagonal = false;
    }
    if (diagonal) {
      Box out;
      for (int k = 0; k < n; ++k) {
        const double s = aff->A(k, k);
        Interval iv = Y.iv[static_cast<size_t>(k)];
        iv.lo -= aff->c[static_cast<size_t>(k)];
        iv.hi -= aff->c[static_cast<size_t>(k)];
        Interval r;
        if (s > 0.0) {
          r = {iv.lo / s, iv.hi / s, iv.lo_open, iv.hi_open};
        } else {
          r = {iv.hi / s, iv.lo / s, iv.hi_open, iv.lo_open};
        }
        out.iv.push_back(r);
      }
      return SetExpr::box(out);
    }
    if (!Y.is_closed()) return std::nullopt;  // general affine: closed halfspaces only
    std::vector<Vec> rows;
    Vec rhs;
    for (int k = 0; k < aff->A.rows; ++k) {
      const auto& iv = Y.iv[static_cast<size_t>(k)];
      Vec row(static_cast<size_t>(n), 0.0);
      for (int j = 0; j < n; ++j) row[static_cast<size_t>(j)] = aff->A(k, j);
      if (std::isfinite(iv.hi)) {
        rows.push_back(row);
        rhs.push_back(iv.hi - aff->c[static_cast<size_t>(k)]);
      }
      if (std::isfinite(iv.lo)) {
        rows.push_back(scale(row, -1.0));
        rhs.push_back(aff->c[static_cast<size_t>(k)] - iv.lo);
      }
    }
    if (rows.empty()) return SetExpr::box(Box::whole(n));
    return SetExpr::polyhedron(std::move(rows), std::move(rhs));
  }
  const auto& mono = std::get<MonotoneOutputMap>(h);
  Box out;
  for (size_t k = 0; k < mono.comps.size(); ++k) {
    const auto& t = mono.comps[k];
    const bool inc = t.ys.back() > t.ys.front();
    const Interval& iv = Y.iv[k];
    double lo = std::isfinite(iv.lo) ? MonotoneOutputMap::inverse(t, iv.lo) : -kInf;
    double hi = std::isfinite(iv.hi) ? MonotoneOutputMap::inverse(t, iv.hi) : kInf;
    Interval r;
    if (inc)
      r = {lo, hi, iv.lo_open, iv.hi_open};
    else
      r = {hi, lo, iv.hi_open, iv.lo_open};
    out.iv.push_back(r);
  }
  return SetExpr::box(out);
}

inline Projection sampled_projection(const SetExpr& M, const Box& W, int n_x, unsigned seed) {
  // coarse over/under pair, clearly flagged
  Projection pr{SetExpr::box(Box::whole(n_x)), false, std::nullopt,
                "sampled fallback: over-approximation is the whole space"};
  const int nw = M.dim() - n_x;
  Vec lo(static_cast<size_t>(n_x), kInf), hi(static_cast<size_t>(n_x), -kInf);
  bool any = false;
  // deterministic pseudo-random probe
  unsigned long long s = seed * 6364136223846793005ULL + 1442695040888963407ULL;
  auto next01 = [&s]() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>((s >> 11) & ((1ULL << 53) - 1)) / static_cast<double>(1ULL << 53);
  };
  for (int i = 0; i < 4096; ++i) {
    Vec xw(static_cast<size_t>(M.dim()));
    for (int k = 0; k < n_x; ++k) xw[static_cast<size_t>(k)] = -10.0 + 20.0 * next01();
    for (int k = 0; k < nw; ++k) {
      const auto& ivw = W.iv[static_cast<size_t>(k)];
      const double a = std::isfinite(ivw.lo) ? ivw.lo : -10.0;
      const double b = std::isfinite(ivw.hi) ? ivw.hi : 10.0;
      xw[static_cast<size_t>(n_x + k)] = a + (b - a) * next01();
    }
    if (set_contains(M, xw)) {
      any = true;
      for (int k = 0; k < n_x; ++k) {
        lo[static_cast<size_t>(k)] = std::min(lo[static_cast<size_t>(k)], xw[static_cast<size_t>(k)]);
        hi[static_cast<size_t>(k)] = std::max(hi[static_cast<size_t>(k)], xw[static_cast<size_t>(k)]);
      }
    }
  }
  if (any) pr.under = SetExpr::box(Box::closed(lo, hi));
  return pr;
}

}  // namespace detail

/// Pi_x(M, W) = {xi : exists w in W with (xi,w) in M}. Exact for boxes,
/// polyhedra (Fourier–Motzkin) and output forms; otherwise a flagged
/// over/under approximation pair.
inline Projection project_x(const SetExpr& M, const Box& W, unsigned seed = 0) {
  const int n_w = W.dim();
  const int n_x = M.dim() - n_w;
  if (n_x < 0) fail(errc::dimension_mismatch, "project_x: W dim exceeds M dim");

  if (const auto* bs = M.get_if<BoxSet>()) {
    Box xpart, wpart;
    for (int k = 0; k < n_x; ++k) xpart.iv.push_back(bs->box.iv[static_cast<size_t>(k)]);
    for (int k = n_x; k < M.dim(); ++k) wpart.iv.push_back(bs->box.iv[static_cast<size_t>(k)]);
    if (intersect(wpart, W).empty()) {
      Box empty = xpart;
      for (auto& iv : empty.iv) iv = {1.0, -1.0, false, false};
      return {SetExpr::box(empty), true, std::nullopt, "empty: W misses the w-slice"};
    }
    return {SetExpr::box(xpart), true, std::nullopt, ""};
  }

  if (const auto* of = M.get_if<OutputFormSet>()) {
    if (of->n_w != n_w) fail(errc::dimension_mismatch, "project_x: output form n_w vs W");
    if (!of->outside) {
      // {z : h(z) in inner - W}
      const Box target = minkowski_sub(of->inner, W);
      auto pre = detail::output_preimage(of->h, target);
      if (pre) return {*pre, true, std::nullopt, ""};
    } else {
      // complement of {z : h(z) in inner (-) W}
      if (W.is_closed()) {
        const Box safe = pontryagin_sub(of->inner.closure(), W);
        // {z : h(z) not in safe-with-inner's-openness}: flip via outside-form in x
        Box keep = safe;
        for (size_t k = 0; k < keep.iv.size(); ++k) {
          keep.iv[k].lo_open = of->inner.iv[k].lo_open;
          keep.iv[k].hi_open = of->inner.iv[k].hi_open;
        }
        return {SetExpr::output_form(of->h, keep, true, of->n_x, 0), true, std::nullopt, ""};
      }
    }
  }

  if (auto poly = as_polyhedron(M)) {
    if (!W.is_closed())
      return detail::sampled_projection(M, W, n_x, seed);
    std::vector<fm::Row> rows;
    for (size_t i = 0; i < poly->a.size(); ++i) rows.push_back({poly->a[i], poly->b[i]});
    for (int k = 0; k < n_w; ++k) {
      const auto& iv = W.iv[static_cast<size_t>(k)];
      if (std::isfinite(iv.hi)) {
        Vec r(static_cast<size_t>(M.dim()), 0.0);
        r[static_cast<size_t>(n_x + k)] = 1.0;
        rows.push_back({std::move(r), iv.hi});
      }
      if (std::isfinite(iv.lo)) {
        Vec r(static_cast<size_t>(M.dim()), 0.0);
        r[static_cast<size_t>(n_x + k)] = -1.0;
        rows.push_back({std::move(r), -iv.lo});
      }
    }
    auto projected = fm::project_prefix(std::move(rows), static_cast<size_t>(n_x),
                                        static_cast<size_t>(M.dim()));
    if (projected.empty()) return {SetExpr::box(Box::whole(n_x)), true, std::nullopt, ""};
    // try to read the rows back as a box (common case)
    Box bx = Box::whole(n_x);
    bool is_box = true;
    for (const auto& r : projected) {
      int nonzero = 0;
      for (int k = 0; k < n_x; ++k)
        if (std::abs(r.a[static_cast<size_t>(k)]) > 1e-12) ++nonzero;
      if (nonzero > 1) {
        is_box = false;
        break;
      }
    }
    if (is_box) {
      for (const auto& r : projected) {
        for (int k = 0; k < n_x; ++k) {
          const double c = r.a[static_cast<size_t>(k)];
          if (std::abs(c) <= 1e-12) continue;
          auto& iv = bx.iv[static_cast<size_t>(k)];
          if (c > 0.0)
            iv.hi = std::min(iv.hi, r.b / c);
          else
            iv.lo = std::max(iv.lo, r.b / c);
        }
      }
      return {SetExpr::box(bx), true, std::nullopt, ""};
    }
    std::vector<Vec> a;
    Vec b;
    for (auto& r : projected) {
      a.push_back(std::move(r.a));
      b.push_back(r.b);
    }
    return {SetExpr::polyhedron(std::move(a), std::move(b)), true, std::nullopt, ""};
  }

  if (const auto* co = M.get_if<ComplementOpenSet>()) {
    // {xi : exists w in W, (xi,w) outside inner}: exact for box inner
    if (const auto* ibs = co->inner->get_if<BoxSet>()) {
      Box wpart;
      for (int k = n_x; k < M.dim(); ++k) wpart.iv.push_back(ibs->box.iv[static_cast<size_t>(k)]);
      Box xpart;
      for (int k = 0; k < n_x; ++k) xpart.iv.push_back(ibs->box.iv[static_cast<size_t>(k)]);
      if (!subset_of(W, wpart)) return {SetExpr::box(Box::whole(n_x)), true, std::nullopt, ""};
      return {SetExpr::complement_open(SetExpr::box(xpart.closure())), true, std::nullopt, ""};
    }
  }

  return detail::sampled_projection(M, W, n_x, seed);
}

// ---------------------------------------------------------------------------
// Box calculus on SetExpr level
// ---------------------------------------------------------------------------

inline Box expect_box(const SetExpr& S, const char* who) {
  const auto* bs = S.get_if<BoxSet>();
  if (bs == nullptr) fail(errc::unsupported_variant, std::string(who) + " needs Box operands");
  return bs->box;
}

/// A (-) B = {x : {x}+B subset A}; may come out empty.
inline SetExpr pontryagin_diff(const SetExpr& A, const SetExpr& B) {
  const Box& a = expect_box(A, "pontryagin_diff");
  const Box& b = expect_box(B, "pontryagin_diff");
  if (a.dim() != b.dim()) fail(errc::dimension_mismatch, "pontryagin_diff dims");
  return SetExpr::box(pontryagin_sub(a, b));
}

/// A - B = {a - b : a in A, b in B} by exact interval arithmetic.
inline SetExpr minkowski_diff(const SetExpr& A, const SetExpr& B) {
  const Box& a = expect_box(A, "minkowski_diff");
  const Box& b = expect_box(B, "minkowski_diff");
  if (a.dim() != b.dim()) fail(errc::dimension_mismatch, "minkowski_diff dims");
  return SetExpr::box(minkowski_sub(a, b));
}

// ---------------------------------------------------------------------------
// Tangent cones
// ---------------------------------------------------------------------------

/// Bouligand tangent cone in one of three exact shapes.
struct Cone {
  enum class Kind { WholeSpace, Polyhedral, AxisBox };
  struct AxisAllow {
    bool neg = true;
    bool pos = true;
  };

  Kind kind = Kind::WholeSpace;
  int dim = 0;
  std::vector<Vec> rows;        // Polyhedral: {u : a.u <= 0}
  std::vector<AxisAllow> axes;  // AxisBox: per-axis allowed sign sets (0 always allowed)

  bool contains(const Vec& u, double tol = 1e-12) const {
    if (kind == Kind::WholeSpace) return true;
    if (kind == Kind::AxisBox) {
      for (size_t k = 0; k < axes.size(); ++k) {
        if (u[k] > tol && !axes[k].pos) return false;
        if (u[k] < -tol && !axes[k].neg) return false;
      }
      return true;
    }
    const double scale_tol = tol * std::max(1.0, norm2(u));
    for (const auto& a : rows)
      if (dot(a, u) > scale_tol) return false;
    return true;
  }

  /// Halfspace rows (AxisBox converted); empty list means whole space.
  std::vector<Vec> halfspace_rows() const {
    if (kind == Kind::WholeSpace) return {};
    if (kind == Kind::Polyhedral) return rows;
    std::vector<Vec> out;
    for (size_t k = 0; k < axes.size(); ++k) {
      if (!axes[k].pos) {
        Vec r(static_cast<size_t>(dim), 0.0);
        r[k] = 1.0;
        out.push_back(std::move(r));
      }
      if (!axes[k].neg) {
        Vec r(static_cast<size_t>(dim), 0.0);
        r[k] = -1.0;
        out.push_back(std::move(r));
      }
    }
    return out;
  }
};

/// Tangent cone of S at xi (exact classes only: closed Box, Polyhedron,
/// affine inside-OutputForm). WholeSpace at interior points.
inline Cone tangent_cone(const SetExpr& S, const Vec& xi, double active_tol = 1e-8) {
  if (!set_contains(S, xi, active_tol))
    fail(errc::point_not_in_set, "tangent_cone: point not in set");
  if (const auto* bs = S.get_if<BoxSet>()) {
    if (!bs->box.is_closed()) fail(errc::unsupported_variant, "tangent cone of open box");
    Cone c;
    c.dim = S.dim();
    c.kind = Cone::Kind::AxisBox;
    bool all_free = true;
    for (size_t k = 0; k < bs->box.iv.size(); ++k) {
      Cone::AxisAllow a;
      const auto& iv = bs->box.iv[k];
      if (std::isfinite(iv.lo) && xi[k] <= iv.lo + active_tol) a.neg = false;
      if (std::isfinite(iv.hi) && xi[k] >= iv.hi - active_tol) a.pos = false;
      if (!a.neg || !a.pos) all_free = false;
      c.axes.push_back(a);
    }
    if (all_free) {
      c.kind = Cone::Kind::WholeSpace;
      c.axes.clear();
    }
    return c;
  }
  auto poly = as_polyhedron(S);
  if (!poly) fail(errc::unsupported_variant, "tangent cone supported for Box/Polyhedron/affine output form");
  Cone c;
  c.dim = S.dim();
  for (size_t i = 0; i < poly->a.size(); ++i)
    if (dot(poly->a[i], xi) >= poly->b[i] - active_tol) c.rows.push_back(poly->a[i]);
  c.kind = c.rows.empty() ? Cone::Kind::WholeSpace : Cone::Kind::Polyhedral;
  return c;
}

/// Does (F_box x {fixed}) meet the cone? Exact linear feasibility via
/// Fourier–Motzkin over the box.
inline bool cone_feasible(const Cone& K, const Box& F_box, const Vec& fixed, double tol = 1e-9) {
  const int m = F_box.dim();
  if (K.dim != m + static_cast<int>(fixed.size()))
    fail(errc::dimension_mismatch, "cone_feasible dims");
  if (F_box.empty()) return false;
  if (K.kind == Cone::Kind::WholeSpace) return true;
  if (K.kind == Cone::Kind::AxisBox) {
    for (int k = 0; k < m; ++k) {
      const auto& ax = K.axes[static_cast<size_t>(k)];
      const auto& iv = F_box.iv[static_cast<size_t>(k)];
      const bool can_zero = iv.lo <= tol && iv.hi >= -tol;
      const bool can_pos = ax.pos && iv.hi > 0.0;
      const bool can_neg = ax.neg && iv.lo < 0.0;
      if (!(can_zero || can_pos || can_neg)) return false;
    }
    for (size_t k = 0; k < fixed.size(); ++k) {
      const auto& ax = K.axes[static_cast<size_t>(m) + k];
      if (fixed[k] > tol && !ax.pos) return false;
      if (fixed[k] < -tol && !ax.neg) return false;
    }
    return true;
  }
  // Polyhedral: feasibility of {u in F_box : a_head.u <= -a_tail.fixed}
  std::vector<fm::Row> rows;
  for (const auto& a : K.rows) {
    Vec head = slice(a, 0, static_cast<size_t>(m));
    const Vec tail = slice(a, static_cast<size_t>(m), a.size());
    rows.push_back({std::move(head), -dot(tail, fixed)});
  }
  for (int k = 0; k < m; ++k) {
    const auto& iv = F_box.iv[static_cast<size_t>(k)];
    if (std::isfinite(iv.hi)) {
      Vec r(static_cast<size_t>(m), 0.0);
      r[static_cast<size_t>(k)] = 1.0;
      rows.push_back({std::move(r), iv.hi});
    }
    if (std::isfinite(iv.lo)) {
      Vec r(static_cast<size_t>(m), 0.0);
      r[static_cast<size_t>(k)] = -1.0;
      rows.push_back({std::move(r), -iv.lo});
    }
  }
  return fm::feasible(std::move(rows), static_cast<size_t>(m), tol);
}

// ---------------------------------------------------------------------------
// Output-form set condition  range(h) ∩ (C_y − W) ∩ (D_y^c − W) ⊆ int(C_y ⊖ W)
// ---------------------------------------------------------------------------

/// Closedness of a set expression (finite endpoints only create boundary;
/// an outside-form over an open inner box is closed).
inline bool is_closed_set(const SetExpr& S) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          for (const auto& iv : n.box.iv) {
            if (std::isfinite(iv.lo) && iv.lo_open) return false;
            if (std::isfinite(iv.hi) && iv.hi_open) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<T, PolyhedronSet>) {
          return true;
        } else if constexpr (std::is_same_v<T, OutputFormSet>) {
          for (const auto& iv : n.inner.iv) {
            const bool lo_b = std::isfinite(iv.lo), hi_b = std::isfinite(iv.hi);
            if (!n.outside) {
              if ((lo_b && iv.lo_open) || (hi_b && iv.hi_open)) return false;
            } else {
              if ((lo_b && !iv.lo_open) || (hi_b && !iv.hi_open)) return false;
            }
          }
          return true;
        } else if constexpr (std::is_same_v<T, ProductSet> || std::is_same_v<T, IntersectionSet>) {
          for (const auto& p : n.parts)
            if (!is_closed_set(p)) return false;
          return true;
        } else {
          return false;  // open complement
        }
      },
      S.node());
}

/// The three intermediate sets are part of the certificate; every step is
/// exact interval arithmetic with openness tracked per endpoint.
struct SetConditionResult {
  bool holds = false;
  Box dyc_minus_w;    // int(D_y_box) − W
  Box cy_minus_w;     // C_y − W
  Box int_cy_pont_w;  // int(C_y ⊖ W)
  Box lhs;            // range(h) ∩ (C_y − W) ∩ (D_y^c − W)
};

/// D_y_box is the closed box whose exterior closure is the jump output set,
/// so D_y^c = int(D_y_box).
inline SetConditionResult output_set_condition(const Box& range_h, const Box& C_y,
                                               const Box& D_y_box, const Box& W) {
  SetConditionResult r;
  r.dyc_minus_w = minkowski_sub(D_y_box.interior(), W);
  r.cy_minus_w = minkowski_sub(C_y, W);
  r.int_cy_pont_w = pontryagin_sub(C_y, W).interior();
  r.lhs = intersect(range_h, intersect(r.cy_minus_w, r.dyc_minus_w));
  r.holds = subset_of(r.lhs, r.int_cy_pont_w);
  return r;
}

}  // namespace hysim
