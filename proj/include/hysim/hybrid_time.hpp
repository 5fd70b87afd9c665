// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hysim/errors.hpp"
#include "hysim/linalg.hpp"

namespace hysim {

/// A point (t, j) of a hybrid time domain: t seconds of flow time, j jumps.
struct HybridTimePoint {
  double t = 0.0;
  int j = 0;
};

/// One interval [t_start, t_end] x {j}. The final interval of a domain may be
/// unbounded (t_end = +inf) or right-open; everywhere else intervals are
/// compact and chain exactly: t_end(j) == t_start(j+1).
struct HtdInterval {
  int j = 0;
  double t_start = 0.0;
  double t_end = 0.0;  // kInf when unbounded

  bool unbounded() const { return std::isinf(t_end); }
};

struct DomainSup {
  double sup_t = 0.0;  // kInf when t-unbounded
  int sup_j = 0;
};

class HybridTimeDomain {
 public:
  HybridTimeDomain() = default;

  const std::vector<HtdInterval>& intervals() const { return intervals_; }
  bool last_right_open() const { return last_right_open_; }

  /// Compact domains are bounded and closed on the right.
  bool compact() const {
    return !intervals_.empty() && !last_right_open_ && !intervals_.back().unbounded();
  }

  DomainSup sup() const {
    DomainSup s;
    s.sup_t = intervals_.back().t_end;
    s.sup_j = intervals_.back().j;
    return s;
  }

  bool contains(const HybridTimePoint& p, double tol = 0.0) const {
    for (const auto& iv : intervals_) {
      if (iv.j != p.j) continue;
      if (p.t < iv.t_start - tol) return false;
      const bool open_here = last_right_open_ && iv.j == intervals_.back().j;
      if (iv.unbounded()) return true;
      if (open_here ? (p.t < iv.t_end - tol) : (p.t <= iv.t_end + tol)) return true;
      return false;
    }
    return false;
  }

  /// Prefix E cap ([0,T] x {0..J}); valid whenever (T,J) lies in the domain.
  HybridTimeDomain restrict_to(double T, int J) const {
    if (!contains({T, J})) fail(errc::point_outside_domain, "restrict_to: point not in domain");
    HybridTimeDomain out;
    for (const auto& iv : intervals_) {
      if (iv.j > J) break;
      HtdInterval cut = iv;
      if (iv.j == J) cut.t_end = std::min(cut.t_end, T);
      out.intervals_.push_back(cut);
    }
    out.last_right_open_ = false;
    return out;
  }

  friend HybridTimeDomain htd_validate(std::vector<HtdInterval> raw, bool last_right_open);

 private:
  std::vector<HtdInterval> intervals_;
  bool last_right_open_ = false;
};

/// Validates the interval chain and returns the domain; throws a typed error
/// naming the violated invariant otherwise.
inline HybridTimeDomain htd_validate(std::vector<HtdInterval> raw, bool last_right_open = false) {
  if (raw.empty()) fail(errc::empty_domain, "domain needs at least one interval");
  for (size_t i = 0; i < raw.size(); ++i) {
    const auto& iv = raw[i];
    if (iv.j != static_cast<int>(i))
      fail(errc::non_consecutive_j, "j values must be 0,1,... got j=" + std::to_string(iv.j) +
                                        " at position " + std::to_string(i));
    if (iv.t_start < 0.0)
      fail(errc::non_monotone_times, "t_start must be nonnegative at j=" + std::to_string(iv.j));
    if (iv.t_end < iv.t_start)
      fail(errc::non_monotone_times, "t_end < t_start at j=" + std::to_string(iv.j));
    if (iv.unbounded() && i + 1 != raw.size())
      fail(errc::open_non_final, "only the last interval may be unbounded");
    if (i + 1 < raw.size() && raw[i + 1].t_start != iv.t_end)
      fail(errc::gap_between_jumps, "t_end(" + std::to_string(iv.j) + ")=" + fmt17(iv.t_end) +
                                        " != t_start(" + std::to_string(iv.j + 1) + ")=" +
                                        fmt17(raw[i + 1].t_start));
  }
  if (last_right_open && raw.back().t_end == raw.back().t_start && !raw.back().unbounded())
    fail(errc::open_non_final, "right-open final interval must have positive length");
  HybridTimeDomain d;
  d.intervals_ = std::move(raw);
  d.last_right_open_ = last_right_open;
  return d;
}

inline DomainSup htd_sup(const HybridTimeDomain& d) { return d.sup(); }

/// Dense-output node of a flow segment: state and its derivative at time t.
/// Between nodes the trajectory is reconstructed by cubic Hermite
/// interpolation, so margins can be checked anywhere in the interval.
struct ArcNode {
  double t = 0.0;
  Vec x;
  Vec f;  // dx/dt at t (zero for jump-only records)
};

struct ArcSegment {
  int j = 0;
  double t0 = 0.0;
  double t1 = 0.0;
  bool unbounded = false;
  std::vector<ArcNode> nodes;  // ordered by t; covers [t0, t1] endpoints when closed
};

namespace detail {

inline Vec hermite_eval(const ArcNode& a, const ArcNode& b, double t) {
  const double h = b.t - a.t;
  if (h <= 0.0) return a.x;
  const double s = (t - a.t) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  Vec out(a.x.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = h00 * a.x[i] + h10 * h * a.f[i] + h01 * b.x[i] + h11 * h * b.f[i];
  return out;
}

}  // namespace detail

/// State trajectory on a hybrid time domain. Immutable after construction;
/// value-semantic and safe to share read-only.
class HybridArc {
 public:
  HybridArc() = default;

  HybridArc(HybridTimeDomain domain, std::vector<ArcSegment> segments, int state_dim)
      : domain_(std::move(domain)), segments_(std::move(segments)), state_dim_(state_dim) {
    if (segments_.size() != domain_.intervals().size())
      fail(errc::internal, "arc segments and domain intervals disagree");
    for (size_t i = 0; i < segments_.size(); ++i) {
      const auto& seg = segments_[i];
      const auto& iv = domain_.intervals()[i];
      if (seg.j != iv.j || seg.t0 != iv.t_start ||
          (!seg.unbounded && !iv.unbounded() && seg.t1 != iv.t_end) ||
          seg.unbounded != iv.unbounded())
        fail(errc::internal, "arc segment does not match its domain interval");
      if (seg.nodes.empty()) fail(errc::internal, "arc segment without nodes");
      for (const auto& n : seg.nodes)
        if (static_cast<int>(n.x.size()) != state_dim_)
          fail(errc::dimension_mismatch, "arc node state dim");
    }
  }

  const HybridTimeDomain& domain() const { return domain_; }
  const std::vector<ArcSegment>& segments() const { return segments_; }
  int state_dim() const { return state_dim_; }

  /// Interpolated state at (t, j); exact at stored sample times.
  Vec eval(const HybridTimePoint& p) const {
    const ArcSegment* seg = nullptr;
    for (const auto& s : segments_)
      if (s.j == p.j) {
        seg = &s;
        break;
      }
    if (seg == nullptr || !domain_.contains(p))
      fail(errc::point_outside_domain,
           "(" + fmt17(p.t) + "," + std::to_string(p.j) + ") not in dom");
    const auto& nodes = seg->nodes;
    // exact hits first
    auto it = std::lower_bound(nodes.begin(), nodes.end(), p.t,
                               [](const ArcNode& n, double t) { return n.t < t; });
    if (it != nodes.end() && it->t == p.t) return it->x;
    if (it == nodes.begin()) return nodes.front().x;
    if (it == nodes.end()) return nodes.back().x;
    return detail::hermite_eval(*(it - 1), *it, p.t);
  }

  /// Terminal point of the arc (largest (t,j) stored).
  HybridTimePoint end_point() const {
    const auto& seg = segments_.back();
    return {seg.nodes.back().t, seg.j};
  }

  Vec end_state() const { return segments_.back().nodes.back().x; }

 private:
  HybridTimeDomain domain_;
  std::vector<ArcSegment> segments_;
  int state_dim_ = 0;
};

inline Vec arc_eval(const HybridArc& arc, const HybridTimePoint& p) { return arc.eval(p); }

/// A solution is nontrivial when its domain has at least two points.
inline bool arc_is_nontrivial(const HybridArc& arc) {
  const auto& ivs = arc.domain().intervals();
  if (ivs.size() > 1) return true;
  return ivs.front().t_end > ivs.front().t_start;
}

}  // namespace hysim
