// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/interval.hpp"
#include "hysim/linalg.hpp"

namespace hysim {

/// Regularity classes ordered by strength:
/// AbsContinuous < Continuous < Cadlag < Measurable (subset direction).
enum class Regularity { Measurable = 0, Cadlag = 1, Continuous = 2, AbsContinuous = 3 };

inline const char* regularity_name(Regularity r) {
  switch (r) {
    case Regularity::Measurable: return "Measurable";
    case Regularity::Cadlag: return "Cadlag";
    case Regularity::Continuous: return "Continuous";
    case Regularity::AbsContinuous: return "AbsContinuous";
  }
  return "?";
}

inline bool at_least(Regularity r, Regularity want) {
  return static_cast<int>(r) >= static_cast<int>(want);
}

namespace piecefn {

struct Constant {
  Vec v;
};

/// a + b*t
struct Affine {
  Vec a;
  Vec b;
};

/// sum_k c[k] * t^k (c[k] is the vector coefficient of t^k)
struct Polynomial {
  std::vector<Vec> c;
};

/// Tabulated samples with monotone-cubic (Fritsch–Carlson) interpolation.
/// No-overshoot: between knots the interpolant stays inside the knot-value
/// hull, which keeps W-membership checks at knots sound. Clamped outside
/// the knot range.
struct Tabulated {
  std::vector<double> ts;
  std::vector<Vec> vals;
  std::vector<Vec> slopes;  // filled by prepare()

  void prepare() {
    const size_t n = ts.size();
    const size_t d = vals.front().size();
    slopes.assign(n, Vec(d, 0.0));
    if (n == 1) return;
    for (size_t k = 0; k < d; ++k) {
      std::vector<double> delta(n - 1);
      for (size_t i = 0; i + 1 < n; ++i) delta[i] = (vals[i + 1][k] - vals[i][k]) / (ts[i + 1] - ts[i]);
      std::vector<double> m(n);
      m[0] = delta[0];
      m[n - 1] = delta[n - 2];
      for (size_t i = 1; i + 1 < n; ++i)
        m[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
      // Fritsch–Carlson limiting
      for (size_t i = 0; i + 1 < n; ++i) {
        if (delta[i] == 0.0) {
          m[i] = 0.0;
          m[i + 1] = 0.0;
          continue;
        }
        const double alpha = m[i] / delta[i];
        const double beta = m[i + 1] / delta[i];
        const double s = alpha * alpha + beta * beta;
        if (s > 9.0) {
          const double tau = 3.0 / std::sqrt(s);
          m[i] = tau * alpha * delta[i];
          m[i + 1] = tau * beta * delta[i];
        }
      }
      for (size_t i = 0; i < n; ++i) slopes[i][k] = m[i];
    }
  }
};

using Fn = std::variant<Constant, Affine, Polynomial, Tabulated>;

inline int fn_dim(const Fn& f) {
  return static_cast<int>(std::visit(
      [](const auto& g) -> size_t {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Constant>) return g.v.size();
        if constexpr (std::is_same_v<T, Affine>) return g.a.size();
        if constexpr (std::is_same_v<T, Polynomial>) return g.c.front().size();
        if constexpr (std::is_same_v<T, Tabulated>) return g.vals.front().size();
      },
      f));
}

inline Vec fn_eval(const Fn& f, double tau) {
  if (std::holds_alternative<Constant>(f)) return std::get<Constant>(f).v;
  if (std::holds_alternative<Affine>(f)) {
    const auto& g = std::get<Affine>(f);
    return axpy(g.a, tau, g.b);
  }
  if (std::holds_alternative<Polynomial>(f)) {
    const auto& g = std::get<Polynomial>(f);
    Vec r(g.c.front().size(), 0.0);
    for (size_t k = g.c.size(); k-- > 0;) {
      for (size_t i = 0; i < r.size(); ++i) r[i] = r[i] * tau + g.c[k][i];
    }
    return r;
  }
  const auto& g = std::get<Tabulated>(f);
  const auto& ts = g.ts;
  if (tau <= ts.front()) return g.vals.front();
  if (tau >= ts.back()) return g.vals.back();
  const size_t i =
      static_cast<size_t>(std::upper_bound(ts.begin(), ts.end(), tau) - ts.begin()) - 1;
  const double h = ts[i + 1] - ts[i];
  const double s = (tau - ts[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  Vec r(g.vals[i].size());
  for (size_t k = 0; k < r.size(); ++k)
    r[k] = (2 * s3 - 3 * s2 + 1) * g.vals[i][k] + (s3 - 2 * s2 + s) * h * g.slopes[i][k] +
           (-2 * s3 + 3 * s2) * g.vals[i + 1][k] + (s3 - s2) * h * g.slopes[i + 1][k];
  return r;
}

inline Vec fn_derivative(const Fn& f, double tau) {
  if (std::holds_alternative<Constant>(f)) return Vec(std::get<Constant>(f).v.size(), 0.0);
  if (std::holds_alternative<Affine>(f)) return std::get<Affine>(f).b;
  if (std::holds_alternative<Polynomial>(f)) {
    const auto& g = std::get<Polynomial>(f);
    Vec r(g.c.front().size(), 0.0);
    for (size_t k = g.c.size(); k-- > 1;) {
      for (size_t i = 0; i < r.size(); ++i) r[i] = r[i] * tau + static_cast<double>(k) * g.c[k][i];
    }
    return r;
  }
  const auto& g = std::get<Tabulated>(f);
  const auto& ts = g.ts;
  if (tau <= ts.front() || tau >= ts.back()) return Vec(g.vals.front().size(), 0.0);
  const size_t i =
      static_cast<size_t>(std::upper_bound(ts.begin(), ts.end(), tau) - ts.begin()) - 1;
  const double h = ts[i + 1] - ts[i];
  const double s = (tau - ts[i]) / h;
  Vec r(g.vals[i].size());
  for (size_t k = 0; k < r.size(); ++k)
    r[k] = ((6 * s * s - 6 * s) * (g.vals[i][k] - g.vals[i + 1][k]) / h) +
           (3 * s * s - 4 * s + 1) * g.slopes[i][k] + (3 * s * s - 2 * s) * g.slopes[i + 1][k];
  return r;
}

}  // namespace piecefn

/// One piece of a signal on [t0, t1) (the final piece may be unbounded or
/// close the horizon). The function is evaluated at t + offset, so left
/// shifts stay exact for every piece kind.
struct SignalPiece {
  double t0 = 0.0;
  double t1 = 0.0;
  bool unbounded = false;
  double offset = 0.0;
  piecefn::Fn fn;

  Vec value(double t) const { return piecefn::fn_eval(fn, t + offset); }
  Vec derivative(double t) const { return piecefn::fn_derivative(fn, t + offset); }
};

/// Exogenous input w : R>=0 -> W as finitely many continuous pieces plus
/// finitely many point overrides. Overrides model the measure-zero
/// deviations that separate e- from ae-solutions; they are invisible to
/// one-sided limits. Immutable after construction.
class Signal {
 public:
  static Signal make(std::vector<SignalPiece> pieces, std::vector<std::pair<double, Vec>> overrides,
                     Box value_set, std::optional<Regularity> declared = std::nullopt);

  int dim() const { return dim_; }
  const Box& value_set() const { return value_set_; }
  Regularity tag() const { return tag_; }
  double horizon() const { return horizon_; }
  const std::vector<SignalPiece>& pieces() const { return pieces_; }
  const std::vector<std::pair<double, Vec>>& overrides() const { return overrides_; }

  /// Point value (override wins over the piece formula).
  Vec eval(double t) const {
    check_time(t);
    auto it = std::lower_bound(overrides_.begin(), overrides_.end(), t,
                               [](const auto& p, double tt) { return p.first < tt; });
    if (it != overrides_.end() && it->first == t) return it->second;
    return pieces_[piece_right(t)].value(t);
  }

  /// Piece value ignoring overrides; this is the a.e. representative the
  /// integrator sees.
  Vec eval_piece(double t) const {
    check_time(t);
    return pieces_[piece_right(t)].value(t);
  }

  /// One-sided limits from the piece formulas (overrides are measure-zero
  /// and never affect limits). Left limit is nullopt at t=0.
  std::pair<std::optional<Vec>, Vec> limits(double t) const {
    check_time(t);
    std::optional<Vec> left;
    if (t > 0.0) left = pieces_[piece_left(t)].value(t);
    return {left, pieces_[piece_right(t)].value(t)};
  }

  Vec right_limit(double t) const { return limits(t).second; }

  /// Left shift S_a: returns w~ with w~(t) = w(t+a), overrides carried to
  /// their shifted positions, regularity tag preserved.
  Signal shift(double a) const {
    if (a < 0.0) fail(errc::bad_signal_config, "shift requires a >= 0");
    if (a == 0.0) return *this;
    std::vector<SignalPiece> ps;
    for (const auto& p : pieces_) {
      if (!p.unbounded && p.t1 <= a) continue;
      SignalPiece q = p;
      q.t0 = std::max(p.t0, a) - a;
      q.t1 = p.unbounded ? 0.0 : p.t1 - a;
      q.unbounded = p.unbounded;
      q.offset = p.offset + a;
      ps.push_back(std::move(q));
    }
    std::vector<std::pair<double, Vec>> ovs;
    for (const auto& [t, v] : overrides_)
      if (t >= a) ovs.emplace_back(t - a, v);
    return Signal::make(std::move(ps), std::move(ovs), value_set_, tag_);
  }

  /// Strongest regularity tag the representation verifiably satisfies.
  Regularity classify() const {
    constexpr double tol = 1e-9;
    bool cadlag = true, cont = true;
    for (size_t k = 1; k < pieces_.size(); ++k) {
      const double tb = pieces_[k].t0;
      const Vec L = pieces_[k - 1].value(tb);
      const Vec R = pieces_[k].value(tb);
      bool lr_eq = true;
      for (size_t i = 0; i < L.size(); ++i)
        if (!approx_eq(L[i], R[i], tol)) lr_eq = false;
      if (!lr_eq) cont = false;
      const Vec val = eval(tb);
      for (size_t i = 0; i < val.size(); ++i)
        if (!approx_eq(val[i], R[i], tol)) cadlag = false;
    }
    for (const auto& [t, v] : overrides_) {
      const Vec fnv = pieces_[piece_right(t)].value(t);
      for (size_t i = 0; i < v.size(); ++i)
        if (!approx_eq(v[i], fnv[i], tol)) {
          cadlag = false;
          cont = false;
        }
    }
    if (!cadlag) return Regularity::Measurable;
    if (!cont) return Regularity::Cadlag;
    // every representable continuous piece is piecewise-C1, hence locally AC
    return Regularity::AbsContinuous;
  }

  /// Derivative of an absolutely continuous signal at a non-breakpoint time.
  Vec derivative(double t) const {
    if (!at_least(tag_, Regularity::AbsContinuous))
      fail(errc::not_absolutely_continuous, "signal tag is " + std::string(regularity_name(tag_)));
    check_time(t);
    const size_t k = piece_right(t);
    if (t == pieces_[k].t0 && k > 0)
      fail(errc::breakpoint_nondifferentiable, "t=" + fmt17(t) + " is a piece breakpoint");
    return pieces_[k].derivative(t);
  }

  /// Formula derivative of the covering piece at t (valid a.e. regardless of
  /// the signal's tag; breakpoints give the right piece's derivative).
  Vec piece_derivative(double t) const {
    check_time(t);
    return pieces_[piece_right(t)].derivative(t);
  }

  /// The piece whose [t0, t1) window covers t.
  const SignalPiece& piece_at(double t) const {
    check_time(t);
    return pieces_[piece_right(t)];
  }

  /// Piece boundaries and tabulated knots in (0, horizon): the times where
  /// the formula may switch or kink. The integrator clamps steps here.
  std::vector<double> breakpoints() const {
    std::vector<double> bp;
    for (size_t k = 1; k < pieces_.size(); ++k) bp.push_back(pieces_[k].t0);
    for (const auto& p : pieces_) {
      if (!std::holds_alternative<piecefn::Tabulated>(p.fn)) continue;
      for (double knot : std::get<piecefn::Tabulated>(p.fn).ts) {
        const double t = knot - p.offset;
        if (t > p.t0 && (p.unbounded || t < p.t1)) bp.push_back(t);
      }
    }
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
    return bp;
  }

  /// Conservative bound on max |w_i| over [a,b] from endpoints, knots,
  /// overrides and a coarse interior sample.
  double sup_norm_on(double a, double b) const {
    double m = 0.0;
    auto take = [&](double t) {
      if (t < a || t > b) return;
      m = std::max(m, norm_inf(eval_piece(t)));
    };
    take(a);
    take(std::min(b, horizon_));
    for (double t : breakpoints()) take(t);
    for (int i = 1; i < 32; ++i) take(a + (b - a) * i / 32.0);
    for (const auto& [t, v] : overrides_)
      if (t >= a && t <= b) m = std::max(m, norm_inf(v));
    return m;
  }

 private:
  void check_time(double t) const {
    if (t < 0.0) fail(errc::beyond_horizon, "negative time " + fmt17(t));
    if (!std::isinf(horizon_) && t > horizon_)
      fail(errc::beyond_horizon, "t=" + fmt17(t) + " beyond horizon " + fmt17(horizon_));
  }

  // piece whose right-neighborhood covers t ([t0, t1) convention)
  size_t piece_right(double t) const {
    size_t lo = 0, hi = pieces_.size() - 1;
    while (lo < hi) {
      const size_t mid = (lo + hi + 1) / 2;
      if (pieces_[mid].t0 <= t)
        lo = mid;
      else
        hi = mid - 1;
    }
    return lo;
  }

  // piece covering times immediately below t (t > 0)
  size_t piece_left(double t) const {
    const size_t k = piece_right(t);
    if (k > 0 && pieces_[k].t0 == t) return k - 1;
    return k;
  }

  std::vector<SignalPiece> pieces_;
  std::vector<std::pair<double, Vec>> overrides_;
  Box value_set_;
  int dim_ = 0;
  Regularity tag_ = Regularity::Measurable;
  double horizon_ = kInf;
};

inline Signal Signal::make(std::vector<SignalPiece> pieces,
                           std::vector<std::pair<double, Vec>> overrides, Box value_set,
                           std::optional<Regularity> declared) {
  if (pieces.empty()) fail(errc::bad_signal_config, "signal needs at least one piece");
  std::sort(pieces.begin(), pieces.end(),
            [](const SignalPiece& a, const SignalPiece& b) { return a.t0 < b.t0; });
  if (pieces.front().t0 != 0.0) fail(errc::bad_signal_config, "pieces must start at t=0");
  const int dim = piecefn::fn_dim(pieces.front().fn);
  if (value_set.dim() != dim) fail(errc::dimension_mismatch, "W dim vs signal dim");
  for (size_t k = 0; k < pieces.size(); ++k) {
    auto& p = pieces[k];
    if (piecefn::fn_dim(p.fn) != dim) fail(errc::dimension_mismatch, "piece value dim");
    if (auto* tab = std::get_if<piecefn::Tabulated>(&p.fn)) {
      if (tab->ts.size() != tab->vals.size() || tab->ts.empty())
        fail(errc::bad_signal_config, "tabulated piece needs matching knots/values");
      if (!std::is_sorted(tab->ts.begin(), tab->ts.end()))
        fail(errc::bad_signal_config, "tabulated knots must be increasing");
      if (tab->slopes.size() != tab->ts.size()) tab->prepare();
    }
    const bool last = k + 1 == pieces.size();
    if (p.unbounded && !last) fail(errc::bad_signal_config, "only last piece may be unbounded");
    if (!p.unbounded && p.t1 <= p.t0) fail(errc::bad_signal_config, "piece with empty interval");
    if (!last && pieces[k + 1].t0 != p.t1)
      fail(errc::bad_signal_config, "pieces must tile without gaps at t=" + fmt17(p.t1));
    if (p.unbounded) {
      // bounded W cannot hold an unbounded trend
      const bool growing =
          (std::holds_alternative<piecefn::Affine>(p.fn) &&
           norm_inf(std::get<piecefn::Affine>(p.fn).b) > 0.0) ||
          (std::holds_alternative<piecefn::Polynomial>(p.fn) &&
           std::get<piecefn::Polynomial>(p.fn).c.size() > 1);
      if (growing && value_set.bounded())
        fail(errc::value_outside_input_set, "unbounded trend leaves W (piece at t0=" + fmt17(p.t0) + ")");
    }
  }

  Signal s;
  s.pieces_ = std::move(pieces);
  s.value_set_ = std::move(value_set);
  s.dim_ = dim;
  s.horizon_ = s.pieces_.back().unbounded ? kInf : s.pieces_.back().t1;

  std::sort(overrides.begin(), overrides.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (size_t i = 0; i + 1 < overrides.size(); ++i)
    if (overrides[i].first == overrides[i + 1].first)
      fail(errc::bad_signal_config, "duplicate override at t=" + fmt17(overrides[i].first));
  for (const auto& [t, v] : overrides) {
    if (t < 0.0 || (!std::isinf(s.horizon_) && t > s.horizon_))
      fail(errc::bad_signal_config, "override outside [0, horizon] at t=" + fmt17(t));
    if (static_cast<int>(v.size()) != dim) fail(errc::dimension_mismatch, "override dim");
    if (!s.value_set_.contains(v))
      fail(errc::value_outside_input_set, "override value outside W at t=" + fmt17(t));
  }
  s.overrides_ = std::move(overrides);

  // W-membership: piece endpoints, tabulated knots, dense samples for
  // non-monotone kinds.
  auto check_in_w = [&](double t, const Vec& v) {
    if (!s.value_set_.contains(v, 1e-12))
      fail(errc::value_outside_input_set, "signal value outside W at t=" + fmt17(t));
  };
  for (const auto& p : s.pieces_) {
    check_in_w(p.t0, p.value(p.t0));
    const double t_hi = p.unbounded ? p.t0 + 100.0 : p.t1;
    check_in_w(t_hi, p.value(t_hi));
    if (auto* tab = std::get_if<piecefn::Tabulated>(&p.fn)) {
      for (size_t i = 0; i < tab->ts.size(); ++i) check_in_w(tab->ts[i] - p.offset, tab->vals[i]);
    } else if (std::holds_alternative<piecefn::Polynomial>(p.fn)) {
      for (int i = 1; i < 33; ++i) {
        const double t = p.t0 + (t_hi - p.t0) * i / 33.0;
        check_in_w(t, p.value(t));
      }
    }
  }

  const Regularity computed = s.classify();
  if (declared) {
    if (static_cast<int>(*declared) > static_cast<int>(computed))
      fail(errc::bad_signal_config,
           std::string("declared tag ") + regularity_name(*declared) +
               " not satisfied; representation verifies only " + regularity_name(computed));
    s.tag_ = *declared;
  } else {
    s.tag_ = computed;
  }
  return s;
}

inline Vec signal_eval(const Signal& w, double t) { return w.eval(t); }
inline std::pair<std::optional<Vec>, Vec> signal_limits(const Signal& w, double t) {
  return w.limits(t);
}
inline Signal signal_shift(const Signal& w, double a) { return w.shift(a); }
inline Regularity signal_classify(const Signal& w) { return w.classify(); }
inline Vec signal_derivative(const Signal& w, double t) { return w.derivative(t); }

// ---- convenience builders ----

inline Signal make_constant_signal(const Vec& v, Box W) {
  SignalPiece p;
  p.unbounded = true;
  p.fn = piecefn::Constant{v};
  return Signal::make({p}, {}, std::move(W));
}

/// Right-continuous step function: value vals[k] on [ts[k], ts[k+1]).
inline Signal make_step_signal(const std::vector<double>& ts, const std::vector<Vec>& vals, Box W) {
  if (ts.empty() || ts.size() != vals.size() || ts.front() != 0.0)
    fail(errc::bad_signal_config, "steps need t0=0 and matching values");
  std::vector<SignalPiece> ps;
  for (size_t k = 0; k < ts.size(); ++k) {
    SignalPiece p;
    p.t0 = ts[k];
    p.unbounded = (k + 1 == ts.size());
    p.t1 = p.unbounded ? 0.0 : ts[k + 1];
    p.fn = piecefn::Constant{vals[k]};
    ps.push_back(std::move(p));
  }
  return Signal::make(std::move(ps), {}, std::move(W));
}

inline Signal make_affine_signal(const Vec& a, const Vec& b, Box W, double t_end) {
  SignalPiece p;
  p.t1 = t_end;
  p.fn = piecefn::Affine{a, b};
  std::vector<SignalPiece> ps{p};
  // hold the final value afterwards so the signal stays in W
  SignalPiece hold;
  hold.t0 = t_end;
  hold.unbounded = true;
  hold.fn = piecefn::Constant{axpy(a, t_end, b)};
  ps.push_back(std::move(hold));
  return Signal::make(std::move(ps), {}, std::move(W));
}

inline Signal with_override(const Signal& w, double t, const Vec& v) {
  auto ovs = w.overrides();
  ovs.emplace_back(t, v);
  return Signal::make(w.pieces(), std::move(ovs), w.value_set());
}

}  // namespace hysim
