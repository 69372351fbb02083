// Truncated multivariate power-series arithmetic (jets). Provides the Taylor
// truncation T^k f of an AnalyticMap by propagating series through the
// expression tree, and the conversion of a jet back into a polynomial map.
#pragma once

#include "tapprox/expr.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

namespace tapprox {

using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& m) {
  return std::accumulate(m.begin(), m.end(), 0);
}

// Graded lexicographic order: lower total degree first, then lex.
struct GradedLexLess {
  bool operator()(const MultiIndex& a, const MultiIndex& b) const {
    const int da = total_degree(a), db = total_degree(b);
    if (da != db) return da < db;
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }
};

class TruncatedSeries {
 public:
  using TermMap = std::map<MultiIndex, double, GradedLexLess>;

  TruncatedSeries(int arity, int order) : arity_(arity), order_(order) {
    if (arity <= 0) throw DimensionError("series arity must be positive");
    if (order < 0) throw DimensionError("series order must be non-negative");
  }

  static TruncatedSeries constant(int arity, int order, double c) {
    TruncatedSeries s(arity, order);
    if (c != 0.0) s.terms_[MultiIndex(arity, 0)] = c;
    return s;
  }

  static TruncatedSeries variable(int arity, int order, int index0) {
    TruncatedSeries s(arity, order);
    if (index0 < 0 || index0 >= arity) throw DimensionError("variable index out of range");
    if (order >= 1) {
      MultiIndex m(arity, 0);
      m[index0] = 1;
      s.terms_[m] = 1.0;
    }
    return s;
  }

  int arity() const { return arity_; }
  int order() const { return order_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  double coefficient(const MultiIndex& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  double constant_term() const { return coefficient(MultiIndex(arity_, 0)); }

  // Lowest total degree with a nonzero coefficient; order+1 for the zero series.
  int valuation() const {
    return terms_.empty() ? order_ + 1 : total_degree(terms_.begin()->first);
  }

  TruncatedSeries truncated(int new_order) const {
    if (new_order >= order_) {
      TruncatedSeries s = *this;
      s.order_ = new_order > order_ ? order_ : new_order;
      return s;
    }
    TruncatedSeries s(arity_, new_order);
    for (const auto& [m, c] : terms_)
      if (total_degree(m) <= new_order) s.terms_[m] = c;
    return s;
  }

  double evaluate(const Eigen::VectorXd& x) const {
    if (x.size() != arity_) throw DimensionError("series evaluation dimension mismatch");
    double acc = 0.0;
    for (const auto& [m, c] : terms_) {
      double t = c;
      for (int i = 0; i < arity_; ++i)
        for (int e = 0; e < m[i]; ++e) t *= x[i];
      acc += t;
    }
    return acc;
  }

  friend TruncatedSeries operator+(const TruncatedSeries& a, const TruncatedSeries& b) {
    TruncatedSeries out = combine_shell(a, b);
    for (const auto& [m, c] : a.terms_)
      if (total_degree(m) <= out.order_) out.accumulate(m, c);
    for (const auto& [m, c] : b.terms_)
      if (total_degree(m) <= out.order_) out.accumulate(m, c);
    return out;
  }

  friend TruncatedSeries operator-(const TruncatedSeries& a, const TruncatedSeries& b) {
    TruncatedSeries out = combine_shell(a, b);
    for (const auto& [m, c] : a.terms_)
      if (total_degree(m) <= out.order_) out.accumulate(m, c);
    for (const auto& [m, c] : b.terms_)
      if (total_degree(m) <= out.order_) out.accumulate(m, -c);
    return out;
  }

  friend TruncatedSeries operator*(const TruncatedSeries& a, const TruncatedSeries& b) {
    TruncatedSeries out = combine_shell(a, b);
    for (const auto& [ma, ca] : a.terms_) {
      const int da = total_degree(ma);
      if (da > out.order_) continue;
      for (const auto& [mb, cb] : b.terms_) {
        if (da + total_degree(mb) > out.order_) continue;
        MultiIndex m(out.arity_);
        for (int i = 0; i < out.arity_; ++i) m[i] = ma[i] + mb[i];
        out.accumulate(m, ca * cb);
      }
    }
    return out;
  }

  friend TruncatedSeries operator*(const TruncatedSeries& a, double s) {
    TruncatedSeries out(a.arity_, a.order_);
    for (const auto& [m, c] : a.terms_) out.accumulate(m, c * s);
    return out;
  }
  friend TruncatedSeries operator*(double s, const TruncatedSeries& a) { return a * s; }

  friend TruncatedSeries operator-(const TruncatedSeries& a) { return a * -1.0; }

  friend TruncatedSeries operator/(const TruncatedSeries& a, const TruncatedSeries& b) {
    return a * reciprocal(b);
  }

  // 1/g via the geometric series in w = g/c - 1; needs a nonzero constant term.
  friend TruncatedSeries reciprocal(const TruncatedSeries& g) {
    const double c = g.constant_term();
    if (c == 0.0) throw DomainError("reciprocal of series with zero constant term");
    TruncatedSeries w = g * (1.0 / c) - constant(g.arity_, g.order_, 1.0);
    TruncatedSeries acc = constant(g.arity_, g.order_, 1.0);
    TruncatedSeries wp = constant(g.arity_, g.order_, 1.0);
    for (int m = 1; m <= g.order_; ++m) {
      wp = wp * w;
      if (wp.is_zero()) break;
      acc = (m % 2 == 1) ? acc - wp : acc + wp;
    }
    return acc * (1.0 / c);
  }

 private:
  static TruncatedSeries combine_shell(const TruncatedSeries& a, const TruncatedSeries& b) {
    if (a.arity_ != b.arity_) throw DimensionError("series arity mismatch");
    return TruncatedSeries(a.arity_, std::min(a.order_, b.order_));
  }

  void accumulate(const MultiIndex& m, double c) {
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);  // keep the sparse form canonical
    }
  }

  int arity_;
  int order_;
  TermMap terms_;
};

inline double domain_scalar(const TruncatedSeries& s) { return s.constant_term(); }

namespace detail {

// Composes a univariate Maclaurin series (coefficient callback) with a series
// u of valuation >= 1, by Horner evaluation over truncated series.
template <class CoefFn>
TruncatedSeries compose_maclaurin(const TruncatedSeries& u, const CoefFn& coef) {
  const int k = u.order();
  TruncatedSeries acc = TruncatedSeries::constant(u.arity(), k, coef(k));
  for (int m = k - 1; m >= 0; --m)
    acc = acc * u + TruncatedSeries::constant(u.arity(), k, coef(m));
  return acc;
}

inline TruncatedSeries sin_zero(const TruncatedSeries& u) {
  std::vector<double> c(u.order() + 1, 0.0);
  double f = 1.0;
  for (int m = 1; m <= u.order(); ++m) {
    f /= m;
    if (m % 2 == 1) c[m] = ((m / 2) % 2 == 0) ? f : -f;
  }
  return compose_maclaurin(u, [&](int m) { return c[m]; });
}

inline TruncatedSeries cos_zero(const TruncatedSeries& u) {
  std::vector<double> c(u.order() + 1, 0.0);
  c[0] = 1.0;
  double f = 1.0;
  for (int m = 1; m <= u.order(); ++m) {
    f /= m;
    if (m % 2 == 0) c[m] = ((m / 2) % 2 == 0) ? f : -f;
  }
  return compose_maclaurin(u, [&](int m) { return c[m]; });
}

inline TruncatedSeries exp_zero(const TruncatedSeries& u) {
  std::vector<double> c(u.order() + 1, 0.0);
  c[0] = 1.0;
  for (int m = 1; m <= u.order(); ++m) c[m] = c[m - 1] / m;
  return compose_maclaurin(u, [&](int m) { return c[m]; });
}

inline TruncatedSeries sinh_zero(const TruncatedSeries& u) {
  std::vector<double> c(u.order() + 1, 0.0);
  double f = 1.0;
  for (int m = 1; m <= u.order(); ++m) {
    f /= m;
    if (m % 2 == 1) c[m] = f;
  }
  return compose_maclaurin(u, [&](int m) { return c[m]; });
}

inline TruncatedSeries cosh_zero(const TruncatedSeries& u) {
  std::vector<double> c(u.order() + 1, 0.0);
  c[0] = 1.0;
  double f = 1.0;
  for (int m = 1; m <= u.order(); ++m) {
    f /= m;
    if (m % 2 == 0) c[m] = f;
  }
  return compose_maclaurin(u, [&](int m) { return c[m]; });
}

// log(1+w), |w(O)| = 0
inline TruncatedSeries log1p_zero(const TruncatedSeries& w) {
  return compose_maclaurin(
      w, [](int m) { return m == 0 ? 0.0 : (m % 2 == 1 ? 1.0 : -1.0) / m; });
}

// sqrt(1+w) via the binomial series
inline TruncatedSeries sqrt1p_zero(const TruncatedSeries& w) {
  std::vector<double> c(w.order() + 1, 0.0);
  c[0] = 1.0;
  for (int m = 0; m < w.order(); ++m) c[m + 1] = c[m] * (0.5 - m) / (m + 1);
  return compose_maclaurin(w, [&](int m) { return c[m]; });
}

inline TruncatedSeries atan_zero(const TruncatedSeries& w) {
  return compose_maclaurin(
      w, [](int m) { return m % 2 == 1 ? ((m / 2) % 2 == 0 ? 1.0 : -1.0) / m : 0.0; });
}

}  // namespace detail

// Elementary functions on series use the constant-term split g = a + u with
// exact addition formulas, so only Maclaurin tables at zero are needed.
inline TruncatedSeries sin(const TruncatedSeries& g) {
  const double a = g.constant_term();
  TruncatedSeries u = g - TruncatedSeries::constant(g.arity(), g.order(), a);
  return std::sin(a) * detail::cos_zero(u) + std::cos(a) * detail::sin_zero(u);
}

inline TruncatedSeries cos(const TruncatedSeries& g) {
  const double a = g.constant_term();
  TruncatedSeries u = g - TruncatedSeries::constant(g.arity(), g.order(), a);
  return std::cos(a) * detail::cos_zero(u) - std::sin(a) * detail::sin_zero(u);
}

inline TruncatedSeries tan(const TruncatedSeries& g) {
  TruncatedSeries c = cos(g);
  if (c.constant_term() == 0.0) throw DomainError("tan of series at a pole");
  return sin(g) / c;
}

inline TruncatedSeries exp(const TruncatedSeries& g) {
  const double a = g.constant_term();
  TruncatedSeries u = g - TruncatedSeries::constant(g.arity(), g.order(), a);
  return std::exp(a) * detail::exp_zero(u);
}

inline TruncatedSeries log(const TruncatedSeries& g) {
  const double a = g.constant_term();
  if (a <= 0.0) throw DomainError("log of series with non-positive constant term");
  TruncatedSeries w = g * (1.0 / a) - TruncatedSeries::constant(g.arity(), g.order(), 1.0);
  return TruncatedSeries::constant(g.arity(), g.order(), std::log(a)) + detail::log1p_zero(w);
}

inline TruncatedSeries sqrt(const TruncatedSeries& g) {
  const double a = g.constant_term();
  if (a <= 0.0) throw DomainError("sqrt of series with non-positive constant term");
  TruncatedSeries w = g * (1.0 / a) - TruncatedSeries::constant(g.arity(), g.order(), 1.0);
  return std::sqrt(a) * detail::sqrt1p_zero(w);
}

inline TruncatedSeries sinh(const TruncatedSeries& g) {
  const double a = g.constant_term();
  TruncatedSeries u = g - TruncatedSeries::constant(g.arity(), g.order(), a);
  return std::sinh(a) * detail::cosh_zero(u) + std::cosh(a) * detail::sinh_zero(u);
}

inline TruncatedSeries cosh(const TruncatedSeries& g) {
  const double a = g.constant_term();
  TruncatedSeries u = g - TruncatedSeries::constant(g.arity(), g.order(), a);
  return std::cosh(a) * detail::cosh_zero(u) + std::sinh(a) * detail::sinh_zero(u);
}

// atan(a+u) = atan(a) + atan(u / (1 + a*g)); the shifted argument always has
// constant term 1 + a^2 > 0.
inline TruncatedSeries atan(const TruncatedSeries& g) {
  const double a = g.constant_term();
  TruncatedSeries u = g - TruncatedSeries::constant(g.arity(), g.order(), a);
  TruncatedSeries den = TruncatedSeries::constant(g.arity(), g.order(), 1.0) + a * g;
  TruncatedSeries w = u / den;
  return TruncatedSeries::constant(g.arity(), g.order(), std::atan(a)) + detail::atan_zero(w);
}

// ---------------------------------------------------------------------------
// taylor / series_mul / to_map
// ---------------------------------------------------------------------------

inline TruncatedSeries taylor_component(const AnalyticMap& f, int component, int order) {
  const int n = f.arity();
  return eval_expr<TruncatedSeries>(
      *f.components()[component],
      [&](int v) { return TruncatedSeries::variable(n, order, v); },
      [&](double c) { return TruncatedSeries::constant(n, order, c); });
}

// T^k f: the map whose components are the order-k Taylor polynomials of the
// components of f at the origin.
inline std::vector<TruncatedSeries> taylor(const AnalyticMap& f, int order) {
  if (order < 0) throw DimensionError("taylor order must be non-negative");
  std::vector<TruncatedSeries> out;
  out.reserve(f.codomain());
  for (int i = 0; i < f.codomain(); ++i) out.push_back(taylor_component(f, i, order));
  return out;
}

inline TruncatedSeries series_mul(const TruncatedSeries& a, const TruncatedSeries& b) {
  return a * b;
}

namespace detail {

inline ExprPtr monomial_expr(const MultiIndex& m) {
  ExprPtr acc;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    ExprPtr v = ast::variable(static_cast<int>(i));
    ExprPtr p = m[i] == 1 ? v : ast::pow(v, m[i]);
    acc = acc ? ast::binary(ExprKind::Mul, acc, p) : p;
  }
  return acc;  // null for the constant term
}

inline ExprPtr series_expr(const TruncatedSeries& s) {
  ExprPtr acc;
  for (const auto& [m, c] : s.terms()) {
    ExprPtr mono = monomial_expr(m);
    ExprPtr term;
    if (!mono) {
      term = ast::number(c);
    } else if (c == 1.0) {
      term = mono;
    } else if (c == -1.0) {
      term = ast::neg(mono);
    } else {
      term = ast::binary(ExprKind::Mul, ast::number(c), mono);
    }
    acc = acc ? ast::binary(ExprKind::Add, acc, term) : term;
  }
  return acc ? acc : ast::number(0.0);
}

}  // namespace detail

// Converts jets back into a polynomial AnalyticMap so that V(T^k f) can flow
// through the sampler and metrics unchanged. A zero component yields the zero
// polynomial; IS validation downstream rejects such degenerate maps.
inline AnalyticMap to_map(const std::vector<TruncatedSeries>& series) {
  if (series.empty()) throw DimensionError("to_map needs at least one series");
  const int n = series.front().arity();
  std::vector<ExprPtr> comps;
  comps.reserve(series.size());
  for (const auto& s : series) {
    if (s.arity() != n) throw DimensionError("to_map arity mismatch");
    comps.push_back(detail::series_expr(s));
  }
  return AnalyticMap(n, comps);
}

inline AnalyticMap truncate_map(const AnalyticMap& f, int order) {
  return to_map(taylor(f, order));
}

// JSON schema: {"arity": n, "order": k, "terms": [{"exp": [...], "coef": c}]}
// with terms in graded-lex order.
inline nlohmann::ordered_json series_to_json(const TruncatedSeries& s) {
  nlohmann::ordered_json j;
  j["arity"] = s.arity();
  j["order"] = s.order();
  j["terms"] = nlohmann::ordered_json::array();
  for (const auto& [m, c] : s.terms()) {
    nlohmann::ordered_json t;
    t["exp"] = m;
    t["coef"] = c;
    j["terms"].push_back(std::move(t));
  }
  return j;
}

inline TruncatedSeries series_from_json(const nlohmann::json& j) {
  TruncatedSeries s(j.at("arity").get<int>(), j.at("order").get<int>());
  TruncatedSeries acc = s;
  for (const auto& t : j.at("terms")) {
    MultiIndex m = t.at("exp").get<MultiIndex>();
    if (static_cast<int>(m.size()) != s.arity())
      throw DimensionError("series term exponent length mismatch");
    if (total_degree(m) > s.order())
      throw DimensionError("series term degree exceeds order");
    TruncatedSeries mono(s.arity(), s.order());
    TruncatedSeries term = TruncatedSeries::constant(s.arity(), s.order(), t.at("coef").get<double>());
    for (std::size_t i = 0; i < m.size(); ++i)
      for (int e = 0; e < m[i]; ++e)
        term = term * TruncatedSeries::variable(s.arity(), s.order(), static_cast<int>(i));
    acc = acc + term;
  }
  return acc;
}

}  // namespace tapprox
