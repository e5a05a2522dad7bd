#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "raycal/errors.hpp"

namespace raycal::ad {

// Reverse-mode differentiation tape. Nodes store local partial derivatives
// with respect to their parents; a backward sweep from a scalar output
// accumulates adjoints for every node created before it. Parent indices are
// always smaller than the child index, so a single reverse pass suffices.
class Tape {
 public:
  int32_t leaf() {
    meta_.push_back({static_cast<uint32_t>(edge_parent_.size()), 0});
    return static_cast<int32_t>(meta_.size()) - 1;
  }

  int32_t node1(int32_t p0, double w0) {
    const auto begin = static_cast<uint32_t>(edge_parent_.size());
    edge_parent_.push_back(p0);
    edge_weight_.push_back(w0);
    meta_.push_back({begin, 1});
    return static_cast<int32_t>(meta_.size()) - 1;
  }

  int32_t node2(int32_t p0, double w0, int32_t p1, double w1) {
    const auto begin = static_cast<uint32_t>(edge_parent_.size());
    edge_parent_.push_back(p0);
    edge_parent_.push_back(p1);
    edge_weight_.push_back(w0);
    edge_weight_.push_back(w1);
    meta_.push_back({begin, 2});
    return static_cast<int32_t>(meta_.size()) - 1;
  }

  int32_t node(std::span<const int32_t> parents, std::span<const double> weights) {
    assert(parents.size() == weights.size());
    const auto begin = static_cast<uint32_t>(edge_parent_.size());
    edge_parent_.insert(edge_parent_.end(), parents.begin(), parents.end());
    edge_weight_.insert(edge_weight_.end(), weights.begin(), weights.end());
    meta_.push_back({begin, static_cast<uint32_t>(parents.size())});
    return static_cast<int32_t>(meta_.size()) - 1;
  }

  std::size_t size() const { return meta_.size(); }

  void clear() {
    meta_.clear();
    edge_parent_.clear();
    edge_weight_.clear();
  }

  // Fills adj[i] = d(node seed)/d(node i). adj is resized to size().
  void backward(int32_t seed, std::vector<double>& adj) const {
    adj.assign(meta_.size(), 0.0);
    if (seed < 0 || seed >= static_cast<int32_t>(meta_.size())) return;
    adj[seed] = 1.0;
    for (int32_t i = seed; i >= 0; --i) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Meta& m = meta_[i];
      for (uint32_t e = m.begin; e < m.begin + m.count; ++e) {
        adj[edge_parent_[e]] += a * edge_weight_[e];
      }
    }
  }

 private:
  struct Meta {
    uint32_t begin;
    uint32_t count;
  };
  std::vector<Meta> meta_;
  std::vector<int32_t> edge_parent_;
  std::vector<double> edge_weight_;
};

inline Tape*& active_tape_slot() {
  thread_local Tape* tape = nullptr;
  return tape;
}

inline Tape& active_tape() {
  Tape* t = active_tape_slot();
  assert(t != nullptr && "no active Tape; create a TapeScope first");
  return *t;
}

// Clears the given tape and makes it the active one for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : prev_(active_tape_slot()) {
    tape.clear();
    active_tape_slot() = &tape;
  }
  ~TapeScope() { active_tape_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Scalar carrying a value and, when tracked (idx >= 0), a node on the active
// tape. Untracked Vars behave as plain constants and never touch the tape.
struct Var {
  double v = 0.0;
  int32_t idx = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constants are intended
  Var(double value, int32_t index) : v(value), idx(index) {}

  bool tracked() const { return idx >= 0; }
};

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.v; }

// Registers a new learnable scalar on the active tape.
inline Var leaf(double v) { return Var(v, active_tape().leaf()); }

// --- arithmetic -------------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  const double v = a.v + b.v;
  if (a.idx < 0 && b.idx < 0) return Var(v);
  if (b.idx < 0) return Var(v, active_tape().node1(a.idx, 1.0));
  if (a.idx < 0) return Var(v, active_tape().node1(b.idx, 1.0));
  return Var(v, active_tape().node2(a.idx, 1.0, b.idx, 1.0));
}

inline Var operator-(const Var& a, const Var& b) {
  const double v = a.v - b.v;
  if (a.idx < 0 && b.idx < 0) return Var(v);
  if (b.idx < 0) return Var(v, active_tape().node1(a.idx, 1.0));
  if (a.idx < 0) return Var(v, active_tape().node1(b.idx, -1.0));
  return Var(v, active_tape().node2(a.idx, 1.0, b.idx, -1.0));
}

inline Var operator*(const Var& a, const Var& b) {
  const double v = a.v * b.v;
  if (a.idx < 0 && b.idx < 0) return Var(v);
  if (b.idx < 0) return Var(v, active_tape().node1(a.idx, b.v));
  if (a.idx < 0) return Var(v, active_tape().node1(b.idx, a.v));
  return Var(v, active_tape().node2(a.idx, b.v, b.idx, a.v));
}

inline Var operator/(const Var& a, const Var& b) {
  // The value must be the plain quotient (not a * (1/b)) so that recorded and
  // unrecorded evaluations agree bit for bit.
  const double v = a.v / b.v;
  if (a.idx < 0 && b.idx < 0) return Var(v);
  const double inv = 1.0 / b.v;
  if (b.idx < 0) return Var(v, active_tape().node1(a.idx, inv));
  if (a.idx < 0) return Var(v, active_tape().node1(b.idx, -v * inv));
  return Var(v, active_tape().node2(a.idx, inv, b.idx, -v * inv));
}

inline Var operator-(const Var& a) {
  if (a.idx < 0) return Var(-a.v);
  return Var(-a.v, active_tape().node1(a.idx, -1.0));
}
inline const Var& operator+(const Var& a) { return a; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }
inline bool operator==(const Var& a, const Var& b) { return a.v == b.v; }
inline bool operator!=(const Var& a, const Var& b) { return a.v != b.v; }

// --- math functions ----------------------------------------------------------

inline Var sqrt(const Var& a) {
  const double r = std::sqrt(a.v);
  if (a.idx < 0) return Var(r);
  return Var(r, active_tape().node1(a.idx, 0.5 / r));
}

inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  if (a.idx < 0) return Var(e);
  return Var(e, active_tape().node1(a.idx, e));
}

inline Var log(const Var& a) {
  const double l = std::log(a.v);
  if (a.idx < 0) return Var(l);
  return Var(l, active_tape().node1(a.idx, 1.0 / a.v));
}

inline Var abs(const Var& a) {
  if (a.idx < 0) return Var(std::abs(a.v));
  const double s = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
  return Var(std::abs(a.v), active_tape().node1(a.idx, s));
}

inline double softplus_value(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var softplus(const Var& a) {
  const double v = softplus_value(a.v);
  if (a.idx < 0) return Var(v);
  return Var(v, active_tape().node1(a.idx, sigmoid_value(a.v)));
}

inline Var sigmoid(const Var& a) {
  const double s = sigmoid_value(a.v);
  if (a.idx < 0) return Var(s);
  return Var(s, active_tape().node1(a.idx, s * (1.0 - s)));
}

// a*b + c in a single node.
inline Var madd(const Var& a, const Var& b, const Var& c) {
  const double v = a.v * b.v + c.v;
  int32_t pid[3];
  double pw[3];
  int n = 0;
  if (a.idx >= 0) { pid[n] = a.idx; pw[n++] = b.v; }
  if (b.idx >= 0) { pid[n] = b.idx; pw[n++] = a.v; }
  if (c.idx >= 0) { pid[n] = c.idx; pw[n++] = 1.0; }
  if (n == 0) return Var(v);
  return Var(v, active_tape().node({pid, static_cast<std::size_t>(n)},
                                   {pw, static_cast<std::size_t>(n)}));
}

// Records `value` with explicit partials w.r.t. the given operands. Untracked
// operands are dropped. Used for hand-fused inner loops.
inline Var fused(double value, std::span<const Var> operands,
                 std::span<const double> partials) {
  assert(operands.size() == partials.size());
  constexpr std::size_t kMax = 16;
  assert(operands.size() <= kMax);
  int32_t pid[kMax];
  double pw[kMax];
  std::size_t n = 0;
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (operands[i].idx >= 0) {
      pid[n] = operands[i].idx;
      pw[n++] = partials[i];
    }
  }
  if (n == 0) return Var(value);
  return Var(value, active_tape().node({pid, n}, {pw, n}));
}

inline bool isfinite(const Var& a) { return std::isfinite(a.v); }

// Required by Eigen for real scalar types.
inline const Var& conj(const Var& a) { return a; }
inline const Var& real(const Var& a) { return a; }
inline Var imag(const Var&) { return Var(0.0); }
inline Var abs2(const Var& a) { return a * a; }

}  // namespace raycal::ad

namespace Eigen {

template <>
struct NumTraits<raycal::ad::Var> : NumTraits<double> {
  using Real = raycal::ad::Var;
  using NonInteger = raycal::ad::Var;
  using Nested = raycal::ad::Var;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3,
  };
  static inline Real epsilon() { return Real(NumTraits<double>::epsilon()); }
  static inline Real dummy_precision() {
    return Real(NumTraits<double>::dummy_precision());
  }
  static inline Real highest() { return Real(NumTraits<double>::highest()); }
  static inline Real lowest() { return Real(NumTraits<double>::lowest()); }
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<raycal::ad::Var, double, BinaryOp> {
  using ReturnType = raycal::ad::Var;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, raycal::ad::Var, BinaryOp> {
  using ReturnType = raycal::ad::Var;
};

}  // namespace Eigen
