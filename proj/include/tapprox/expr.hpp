// Expression front end: a small analytic-map language with exact forward
// differentiation. Maps f: R^n -> R^p are parsed into immutable expression
// trees that can be evaluated over any scalar-like type (double, dual
// numbers, truncated series).
#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tapprox {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t position)
      : Error(msg + " (at offset " + std::to_string(position) + ")"),
        position(position) {}
  std::size_t position;
};

struct DomainError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct RankDeficientError : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Sinh, Cosh, Atan };

inline std::string_view func_name(Func f) {
  switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Tan: return "tan";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Sqrt: return "sqrt";
    case Func::Sinh: return "sinh";
    case Func::Cosh: return "cosh";
    case Func::Atan: return "atan";
  }
  return "?";
}

enum class ExprKind { Number, Variable, Add, Sub, Mul, Div, Neg, Pow, Call };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprKind kind;
  double number = 0.0;  // Number
  int var = -1;         // Variable, 0-based
  int exponent = 0;     // Pow
  Func func = Func::Sin;
  ExprPtr a, b;
};

namespace ast {

inline ExprPtr number(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Number;
  n->number = v;
  return n;
}

inline ExprPtr variable(int index0) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Variable;
  n->var = index0;
  return n;
}

inline ExprPtr binary(ExprKind k, ExprPtr a, ExprPtr b) {
  auto n = std::make_shared<ExprNode>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline ExprPtr neg(ExprPtr a) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Neg;
  n->a = std::move(a);
  return n;
}

inline ExprPtr pow(ExprPtr a, int e) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Pow;
  n->a = std::move(a);
  n->exponent = e;
  return n;
}

inline ExprPtr call(Func f, ExprPtr a) {
  auto n = std::make_shared<ExprNode>();
  n->kind = ExprKind::Call;
  n->func = f;
  n->a = std::move(a);
  return n;
}

}  // namespace ast

// ---------------------------------------------------------------------------
// Generic evaluation.
//
// T must support +,-,*,/ and the elementary functions below, found by ADL
// (or std:: for double). domain_scalar(T) yields the double used for the
// analyticity / domain checks: the plain value for double, the value part of
// a dual, the constant term of a truncated series.
// ---------------------------------------------------------------------------

inline double domain_scalar(double v) { return v; }

// Repeated multiplication; callers handle non-positive exponents.
template <class T>
T pow_int(const T& base, int e) {
  assert(e >= 1);
  T acc = base;
  for (int i = 1; i < e; ++i) acc = acc * base;
  return acc;
}

inline double pow_int(double base, int e) {
  if (e < 0) return 1.0 / pow_int(base, -e);
  double acc = 1.0;
  for (int i = 0; i < e; ++i) acc *= base;
  return acc;
}

template <class T, class VarFn, class ConstFn>
T eval_expr(const ExprNode& e, const VarFn& var, const ConstFn& lift) {
  using std::sin;
  using std::cos;
  using std::tan;
  using std::exp;
  using std::log;
  using std::sqrt;
  using std::sinh;
  using std::cosh;
  using std::atan;
  switch (e.kind) {
    case ExprKind::Number:
      return lift(e.number);
    case ExprKind::Variable:
      return var(e.var);
    case ExprKind::Add:
      return eval_expr<T>(*e.a, var, lift) + eval_expr<T>(*e.b, var, lift);
    case ExprKind::Sub:
      return eval_expr<T>(*e.a, var, lift) - eval_expr<T>(*e.b, var, lift);
    case ExprKind::Mul:
      return eval_expr<T>(*e.a, var, lift) * eval_expr<T>(*e.b, var, lift);
    case ExprKind::Div: {
      T den = eval_expr<T>(*e.b, var, lift);
      if (domain_scalar(den) == 0.0)
        throw DomainError("division by expression vanishing at evaluation point");
      return eval_expr<T>(*e.a, var, lift) / den;
    }
    case ExprKind::Neg:
      return lift(0.0) - eval_expr<T>(*e.a, var, lift);
    case ExprKind::Pow: {
      if (e.exponent == 0) return lift(1.0);
      T base = eval_expr<T>(*e.a, var, lift);
      if (e.exponent < 0 && domain_scalar(base) == 0.0)
        throw DomainError("negative power of expression vanishing at evaluation point");
      if (e.exponent < 0) return lift(1.0) / pow_int(base, -e.exponent);
      return pow_int(base, e.exponent);
    }
    case ExprKind::Call: {
      T u = eval_expr<T>(*e.a, var, lift);
      const double c = domain_scalar(u);
      switch (e.func) {
        case Func::Sin: return sin(u);
        case Func::Cos: return cos(u);
        case Func::Tan: return tan(u);
        case Func::Exp: return exp(u);
        case Func::Log:
          if (c <= 0.0) throw DomainError("log of non-positive argument");
          return log(u);
        case Func::Sqrt:
          if (c < 0.0) throw DomainError("sqrt of negative argument");
          return sqrt(u);
        case Func::Sinh: return sinh(u);
        case Func::Cosh: return cosh(u);
        case Func::Atan: return atan(u);
      }
      throw Error("unreachable function kind");
    }
  }
  throw Error("unreachable expression kind");
}

// ---------------------------------------------------------------------------
// Forward-mode dual numbers carrying a full gradient.
// ---------------------------------------------------------------------------

struct Dual {
  double val = 0.0;
  Eigen::VectorXd grad;

  Dual() = default;
  Dual(double v, Eigen::VectorXd g) : val(v), grad(std::move(g)) {}
  static Dual constant(double v, Eigen::Index n) {
    return Dual(v, Eigen::VectorXd::Zero(n));
  }
};

inline double domain_scalar(const Dual& d) { return d.val; }

inline Dual operator+(const Dual& a, const Dual& b) {
  return Dual(a.val + b.val, a.grad + b.grad);
}
inline Dual operator-(const Dual& a, const Dual& b) {
  return Dual(a.val - b.val, a.grad - b.grad);
}
inline Dual operator*(const Dual& a, const Dual& b) {
  return Dual(a.val * b.val, a.grad * b.val + b.grad * a.val);
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double inv = 1.0 / b.val;
  return Dual(a.val * inv, (a.grad - b.grad * (a.val * inv)) * inv);
}

inline Dual sin(const Dual& a) { return Dual(std::sin(a.val), a.grad * std::cos(a.val)); }
inline Dual cos(const Dual& a) { return Dual(std::cos(a.val), a.grad * -std::sin(a.val)); }
inline Dual tan(const Dual& a) {
  const double t = std::tan(a.val);
  return Dual(t, a.grad * (1.0 + t * t));
}
inline Dual exp(const Dual& a) {
  const double v = std::exp(a.val);
  return Dual(v, a.grad * v);
}
inline Dual log(const Dual& a) { return Dual(std::log(a.val), a.grad / a.val); }
inline Dual sqrt(const Dual& a) {
  if (a.val <= 0.0) throw DomainError("sqrt differential undefined at non-positive argument");
  const double v = std::sqrt(a.val);
  return Dual(v, a.grad * (0.5 / v));
}
inline Dual sinh(const Dual& a) { return Dual(std::sinh(a.val), a.grad * std::cosh(a.val)); }
inline Dual cosh(const Dual& a) { return Dual(std::cosh(a.val), a.grad * std::sinh(a.val)); }
inline Dual atan(const Dual& a) {
  return Dual(std::atan(a.val), a.grad / (1.0 + a.val * a.val));
}

namespace detail {

// Shortest round-tripping decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AnalyticMap
// ---------------------------------------------------------------------------

class AnalyticMap {
 public:
  AnalyticMap() = default;
  AnalyticMap(int arity, std::vector<ExprPtr> components)
      : arity_(arity), components_(std::move(components)) {
    if (arity_ <= 0) throw DimensionError("arity must be positive");
    if (components_.empty()) throw DimensionError("map needs at least one component");
    if (static_cast<int>(components_.size()) > arity_)
      throw DimensionError("codomain dimension exceeds arity");
  }

  int arity() const { return arity_; }
  int codomain() const { return static_cast<int>(components_.size()); }
  const std::vector<ExprPtr>& components() const { return components_; }

  double evaluate_component(int i, const Eigen::VectorXd& x) const {
    check_point(x);
    return eval_expr<double>(
        *components_[i], [&](int v) { return x[v]; }, [](double c) { return c; });
  }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const {
    check_point(x);
    Eigen::VectorXd out(codomain());
    for (int i = 0; i < codomain(); ++i)
      out[i] = eval_expr<double>(
          *components_[i], [&](int v) { return x[v]; }, [](double c) { return c; });
    return out;
  }

  // Row i is the gradient of component i; exact forward differentiation of
  // the expression tree, not numeric differencing.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    check_point(x);
    Eigen::MatrixXd J(codomain(), arity_);
    for (int i = 0; i < codomain(); ++i) J.row(i) = gradient(i, x);
    return J;
  }

  Eigen::VectorXd gradient(int i, const Eigen::VectorXd& x) const {
    check_point(x);
    const Eigen::Index n = arity_;
    Dual d = eval_expr<Dual>(
        *components_[i],
        [&](int v) {
          Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
          g[v] = 1.0;
          return Dual(x[v], std::move(g));
        },
        [&](double c) { return Dual::constant(c, n); });
    return d.grad;
  }

  bool vanishes_at_origin() const {
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(arity_);
    return evaluate(origin).lpNorm<Eigen::Infinity>() <= 1e-14;
  }

  std::string unparse() const;

  // FNV-1a over the unparsed source; used as provenance in slice families.
  std::uint64_t digest() const {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : unparse()) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  void check_point(const Eigen::VectorXd& x) const {
    if (x.size() != arity_)
      throw DimensionError("point dimension " + std::to_string(x.size()) +
                           " does not match arity " + std::to_string(arity_));
  }

  int arity_ = 0;
  std::vector<ExprPtr> components_;
};

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace detail {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Semi, End };

struct Token {
  Tok kind;
  double number = 0.0;
  std::string ident;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
    tok_ = Token{Tok::End, 0.0, {}, i_};
    if (i_ >= src_.size()) return;
    const char c = src_[i_];
    switch (c) {
      case '+': tok_.kind = Tok::Plus; ++i_; return;
      case '-': tok_.kind = Tok::Minus; ++i_; return;
      case '*': tok_.kind = Tok::Star; ++i_; return;
      case '/': tok_.kind = Tok::Slash; ++i_; return;
      case '^': tok_.kind = Tok::Caret; ++i_; return;
      case '(': tok_.kind = Tok::LParen; ++i_; return;
      case ')': tok_.kind = Tok::RParen; ++i_; return;
      case ';': tok_.kind = Tok::Semi; ++i_; return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i_;
      while (j < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_'))
        ++j;
      tok_.kind = Tok::Ident;
      tok_.ident = std::string(src_.substr(i_, j - i_));
      i_ = j;
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", i_);
  }

  void lex_number() {
    std::size_t j = i_;
    while (j < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[j])) || src_[j] == '.'))
      ++j;
    if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
      std::size_t k = j + 1;
      if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
      if (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) {
        ++k;
        while (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) ++k;
        j = k;
      }
    }
    const std::string text(src_.substr(i_, j - i_));
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size())
      throw ParseError("malformed numeric literal '" + text + "'", i_);
    tok_.kind = Tok::Number;
    tok_.number = v;
    i_ = j;
  }

  std::string_view src_;
  std::size_t i_ = 0;
  Token tok_;
};

class Parser {
 public:
  Parser(std::string_view src, int arity) : lex_(src), arity_(arity) {
    if (arity <= 0) throw DimensionError("arity must be positive");
  }

  std::vector<ExprPtr> parse_map() {
    std::vector<ExprPtr> comps;
    comps.push_back(parse_expr());
    while (lex_.peek().kind == Tok::Semi) {
      lex_.take();
      comps.push_back(parse_expr());
    }
    expect(Tok::End, "end of input");
    return comps;
  }

 private:
  ExprPtr parse_expr() {
    ExprPtr e = parse_term();
    while (lex_.peek().kind == Tok::Plus || lex_.peek().kind == Tok::Minus) {
      const Tok op = lex_.take().kind;
      ExprPtr rhs = parse_term();
      e = ast::binary(op == Tok::Plus ? ExprKind::Add : ExprKind::Sub, e, rhs);
    }
    return e;
  }

  ExprPtr parse_term() {
    ExprPtr e = parse_factor();
    while (lex_.peek().kind == Tok::Star || lex_.peek().kind == Tok::Slash) {
      const Token t = lex_.take();
      ExprPtr rhs = parse_factor();
      if (t.kind == Tok::Slash) check_analytic_division(rhs, t.pos);
      e = ast::binary(t.kind == Tok::Star ? ExprKind::Mul : ExprKind::Div, e, rhs);
    }
    return e;
  }

  ExprPtr parse_factor() {
    if (lex_.peek().kind == Tok::Minus) {
      lex_.take();
      return ast::neg(parse_power());
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (lex_.peek().kind != Tok::Caret) return base;
    const Token caret = lex_.take();
    int sign = 1;
    if (lex_.peek().kind == Tok::Minus) {
      lex_.take();
      sign = -1;
    }
    const Token t = lex_.peek();
    if (t.kind != Tok::Number)
      throw ParseError("exponent must be an integer literal", t.pos);
    lex_.take();
    const double v = t.number;
    if (v != std::floor(v) || std::abs(v) > 1e9)
      throw ParseError("exponent must be an integer literal", t.pos);
    const int e = sign * static_cast<int>(v);
    if (e < 0 && origin_value(base) == 0.0)
      throw ParseError("negative power of expression vanishing at origin", caret.pos);
    return ast::pow(base, e);
  }

  ExprPtr parse_atom() {
    const Token t = lex_.peek();
    switch (t.kind) {
      case Tok::Number:
        lex_.take();
        return ast::number(t.number);
      case Tok::LParen: {
        lex_.take();
        ExprPtr e = parse_expr();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::Ident:
        lex_.take();
        return parse_ident(t);
      default:
        throw ParseError("expected a number, variable, function or '('", t.pos);
    }
  }

  ExprPtr parse_ident(const Token& t) {
    const std::string& name = t.ident;
    if (name == "pi") return ast::number(M_PI);
    if (name == "e") return ast::number(M_E);
    if (auto f = lookup_func(name)) {
      expect(Tok::LParen, "'(' after function name");
      ExprPtr arg = parse_expr();
      expect(Tok::RParen, "')'");
      check_analytic_call(*f, arg, t.pos);
      return ast::call(*f, arg);
    }
    if (int idx = variable_index(name); idx != 0) {
      if (idx > arity_)
        throw ParseError("variable '" + name + "' exceeds arity " + std::to_string(arity_), t.pos);
      return ast::variable(idx - 1);
    }
    throw ParseError("unknown identifier '" + name + "'", t.pos);
  }

  // x1..xn always; x,y,z,w alias x1..x4 when the arity allows it.
  int variable_index(const std::string& name) const {
    if (name.size() >= 2 && name[0] == 'x') {
      int idx = 0;
      auto res = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (res.ec == std::errc() && res.ptr == name.data() + name.size() && idx >= 1)
        return idx;
      return 0;
    }
    if (name.size() == 1 && arity_ <= 4) {
      switch (name[0]) {
        case 'x': return 1;
        case 'y': return 2;
        case 'z': return 3;
        case 'w': return 4;
      }
    }
    return 0;
  }

  static std::optional<Func> lookup_func(const std::string& name) {
    if (name == "sin") return Func::Sin;
    if (name == "cos") return Func::Cos;
    if (name == "tan") return Func::Tan;
    if (name == "exp") return Func::Exp;
    if (name == "log") return Func::Log;
    if (name == "sqrt") return Func::Sqrt;
    if (name == "sinh") return Func::Sinh;
    if (name == "cosh") return Func::Cosh;
    if (name == "atan") return Func::Atan;
    return std::nullopt;
  }

  double origin_value(const ExprPtr& e) const {
    return eval_expr<double>(*e, [](int) { return 0.0; }, [](double c) { return c; });
  }

  void check_analytic_division(const ExprPtr& den, std::size_t pos) const {
    double v = 0.0;
    try {
      v = origin_value(den);
    } catch (const DomainError& err) {
      throw ParseError(err.what(), pos);
    }
    if (v == 0.0)
      throw ParseError("denominator vanishes at the origin; map would not be analytic at O", pos);
  }

  void check_analytic_call(Func f, const ExprPtr& arg, std::size_t pos) const {
    double v = 0.0;
    try {
      v = origin_value(arg);
    } catch (const DomainError& err) {
      throw ParseError(err.what(), pos);
    }
    if ((f == Func::Log || f == Func::Sqrt) && v <= 0.0)
      throw ParseError(std::string(func_name(f)) +
                           " of expression that is zero or negative at the origin",
                       pos);
    if (f == Func::Tan && std::cos(v) == 0.0)
      throw ParseError("tan of expression at a pole", pos);
  }

  void expect(Tok k, const char* what) {
    const Token t = lex_.peek();
    if (t.kind != k) throw ParseError(std::string("expected ") + what, t.pos);
    lex_.take();
  }

  Lexer lex_;
  int arity_;
};

inline int precedence(ExprKind k) {
  switch (k) {
    case ExprKind::Add:
    case ExprKind::Sub: return 1;
    case ExprKind::Mul:
    case ExprKind::Div: return 2;
    case ExprKind::Neg: return 3;
    case ExprKind::Pow: return 4;
    default: return 5;
  }
}

inline void unparse_node(const ExprNode& e, std::string& out) {
  auto child = [&](const ExprNode& c, int parent_prec, bool strict) {
    const bool parens =
        precedence(c.kind) < parent_prec || (strict && precedence(c.kind) == parent_prec);
    if (parens) out += '(';
    unparse_node(c, out);
    if (parens) out += ')';
  };
  switch (e.kind) {
    case ExprKind::Number:
      if (e.number < 0) {
        out += '(';
        out += format_double(e.number);
        out += ')';
      } else {
        out += format_double(e.number);
      }
      return;
    case ExprKind::Variable:
      out += 'x';
      out += std::to_string(e.var + 1);
      return;
    case ExprKind::Add:
      child(*e.a, 1, false);
      out += " + ";
      child(*e.b, 1, true);
      return;
    case ExprKind::Sub:
      child(*e.a, 1, false);
      out += " - ";
      child(*e.b, 1, true);
      return;
    case ExprKind::Mul:
      child(*e.a, 2, false);
      out += "*";
      child(*e.b, 2, true);
      return;
    case ExprKind::Div:
      child(*e.a, 2, false);
      out += "/";
      child(*e.b, 2, true);
      return;
    case ExprKind::Neg:
      out += '-';
      child(*e.a, 3, false);
      return;
    case ExprKind::Pow:
      child(*e.a, 5, false);
      out += '^';
      out += std::to_string(e.exponent);
      return;
    case ExprKind::Call:
      out += func_name(e.func);
      out += '(';
      unparse_node(*e.a, out);
      out += ')';
      return;
  }
}

}  // namespace detail

inline std::string AnalyticMap::unparse() const {
  std::string out;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (i) out += "; ";
    detail::unparse_node(*components_[i], out);
  }
  return out;
}

inline AnalyticMap parse_map(std::string_view source, int arity) {
  detail::Parser p(source, arity);
  return AnalyticMap(arity, p.parse_map());
}

}  // namespace tapprox
