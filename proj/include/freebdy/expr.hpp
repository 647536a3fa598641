#pragma once

// Scalar expressions of coordinates x1..x16 as they appear in scenario files:
// metric entries, graph functions, densities.
//
// Grammar (precedence high to low, left-associative within a level):
//   primary  := number | xN | fn '(' expr ')' | '(' expr ')'
//   power    := primary ('^' exponent)*        exponent := '-' exponent | primary
//   unary    := '-' unary | power
//   term     := unary (('*' | '/') unary)*
//   expr     := term (('+' | '-') term)*
// with fn one of sin cos exp sqrt log abs.

#include "freebdy/errors.hpp"
#include "freebdy/linalg.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace freebdy {

inline constexpr int kMaxVariables = 16;

enum class ExprOp : std::uint8_t { constant, variable, negate, add, sub, mul, div, pow, call };
enum class ExprFunc : std::uint8_t { sin, cos, exp, sqrt, log, abs };

struct ExprNode {
  ExprOp op = ExprOp::constant;
  double value = 0.0;       // constant
  int index = 0;            // variable, 0-based
  ExprFunc func = ExprFunc::sin;
  std::shared_ptr<const ExprNode> lhs;  // unary operand / left operand / call argument
  std::shared_ptr<const ExprNode> rhs;
};

namespace detail {

inline std::string_view func_name(ExprFunc f) {
  switch (f) {
    case ExprFunc::sin: return "sin";
    case ExprFunc::cos: return "cos";
    case ExprFunc::exp: return "exp";
    case ExprFunc::sqrt: return "sqrt";
    case ExprFunc::log: return "log";
    case ExprFunc::abs: return "abs";
  }
  return "?";
}

inline void serialize_into(const ExprNode& n, std::string& out) {
  switch (n.op) {
    case ExprOp::constant: {
      std::array<char, 64> buf{};
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), n.value);
      out.append(buf.data(), end);
      return;
    }
    case ExprOp::variable:
      out += 'x';
      out += std::to_string(n.index + 1);
      return;
    case ExprOp::negate:
      out += "(-";
      serialize_into(*n.lhs, out);
      out += ')';
      return;
    case ExprOp::call:
      out += func_name(n.func);
      out += '(';
      serialize_into(*n.lhs, out);
      out += ')';
      return;
    default: break;
  }
  static constexpr std::string_view symbols = "+-*/^";
  const char symbol = symbols[static_cast<int>(n.op) - static_cast<int>(ExprOp::add)];
  out += '(';
  serialize_into(*n.lhs, out);
  out += symbol;
  serialize_into(*n.rhs, out);
  out += ')';
}

inline bool structurally_equal(const ExprNode* a, const ExprNode* b) {
  if (a == b) return true;
  if (!a || !b || a->op != b->op) return false;
  switch (a->op) {
    case ExprOp::constant: return std::bit_cast<std::uint64_t>(a->value) == std::bit_cast<std::uint64_t>(b->value);
    case ExprOp::variable: return a->index == b->index;
    case ExprOp::call: return a->func == b->func && structurally_equal(a->lhs.get(), b->lhs.get());
    case ExprOp::negate: return structurally_equal(a->lhs.get(), b->lhs.get());
    default:
      return structurally_equal(a->lhs.get(), b->lhs.get()) && structurally_equal(a->rhs.get(), b->rhs.get());
  }
}

class Parser {
 public:
  Parser(std::string_view src, int max_var) : src_(src), max_var_(max_var) {}

  std::shared_ptr<const ExprNode> parse() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("empty expression", pos_);
    auto node = parse_expr();
    skip_ws();
    if (pos_ < src_.size()) throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_);
    return node;
  }

  int highest_variable() const { return highest_; }

 private:
  using NodePtr = std::shared_ptr<const ExprNode>;

  static NodePtr binary(ExprOp op, NodePtr l, NodePtr r) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->lhs = std::move(l);
    n->rhs = std::move(r);
    return n;
  }

  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError(std::string("expected '") + c + "' but input ended", pos_);
    if (src_[pos_] != c) throw ParseError(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  NodePtr parse_expr() {
    auto node = parse_term();
    for (;;) {
      if (accept('+')) node = binary(ExprOp::add, node, parse_term());
      else if (accept('-')) node = binary(ExprOp::sub, node, parse_term());
      else return node;
    }
  }

  NodePtr parse_term() {
    auto node = parse_unary();
    for (;;) {
      if (accept('*')) node = binary(ExprOp::mul, node, parse_unary());
      else if (accept('/')) node = binary(ExprOp::div, node, parse_unary());
      else return node;
    }
  }

  NodePtr negate(NodePtr operand) {
    auto n = std::make_shared<ExprNode>();
    n->op = ExprOp::negate;
    n->lhs = std::move(operand);
    return n;
  }

  NodePtr parse_unary() {
    if (accept('-')) return negate(parse_unary());
    return parse_power();
  }

  NodePtr parse_exponent() {
    if (accept('-')) return negate(parse_exponent());
    return parse_primary();
  }

  NodePtr parse_power() {
    auto node = parse_primary();
    while (accept('^')) node = binary(ExprOp::pow, node, parse_exponent());
    return node;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      auto inner = parse_expr();
      expect(')');
      return inner;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') return parse_identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    std::size_t end = pos_;
    auto digits = [&] {
      while (end < src_.size() && src_[end] >= '0' && src_[end] <= '9') ++end;
    };
    digits();
    if (end < src_.size() && src_[end] == '.') {
      ++end;
      digits();
    }
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) ++e;
      if (e < src_.size() && src_[e] >= '0' && src_[e] <= '9') {
        end = e;
        digits();
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + end, value);
    if (ec != std::errc() || ptr != src_.data() + end) throw ParseError("malformed number", start);
    pos_ = end;
    auto n = std::make_shared<ExprNode>();
    n->op = ExprOp::constant;
    n->value = value;
    return n;
  }

  NodePtr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && ((src_[pos_] >= 'a' && src_[pos_] <= 'z') || (src_[pos_] >= 'A' && src_[pos_] <= 'Z') ||
                                  (src_[pos_] >= '0' && src_[pos_] <= '9') || src_[pos_] == '_'))
      ++pos_;
    const std::string_view name = src_.substr(start, pos_ - start);
    if (name.size() >= 2 && name[0] == 'x' && name.find_first_not_of("0123456789", 1) == std::string_view::npos &&
        name[1] != '0') {
      int index = 0;
      std::from_chars(name.data() + 1, name.data() + name.size(), index);
      if (index > kMaxVariables || name.size() > 3) throw ParseError("variable index exceeds 16: " + std::string(name), start);
      if (index > max_var_)
        throw ParseError("variable " + std::string(name) + " exceeds dimension " + std::to_string(max_var_), start);
      highest_ = std::max(highest_, index);
      auto n = std::make_shared<ExprNode>();
      n->op = ExprOp::variable;
      n->index = index - 1;
      return n;
    }
    static constexpr std::array<std::pair<std::string_view, ExprFunc>, 6> funcs{{{"sin", ExprFunc::sin},
                                                                                  {"cos", ExprFunc::cos},
                                                                                  {"exp", ExprFunc::exp},
                                                                                  {"sqrt", ExprFunc::sqrt},
                                                                                  {"log", ExprFunc::log},
                                                                                  {"abs", ExprFunc::abs}}};
    for (const auto& [fname, f] : funcs) {
      if (name == fname) {
        expect('(');
        auto arg = parse_expr();
        expect(')');
        auto n = std::make_shared<ExprNode>();
        n->op = ExprOp::call;
        n->func = f;
        n->lhs = std::move(arg);
        return n;
      }
    }
    throw ParseError("unknown identifier '" + std::string(name) + "'", start);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int max_var_;
  int highest_ = 0;
};

}  // namespace detail

/// `a^b`: integer exponents (|b| <= 64) by repeated multiplication, otherwise
/// exp(b log a) for a > 0. Shared by every evaluator so results agree bitwise.
inline double integer_or_real_power(double a, double b, bool& domain_ok, bool& div_zero) {
  domain_ok = true;
  div_zero = false;
  if (b == std::trunc(b) && std::fabs(b) <= 64.0) {
    const int n = static_cast<int>(std::fabs(b));
    double r = 1.0;
    for (int k = 0; k < n; ++k) r *= a;
    if (b < 0) {
      if (r == 0.0) {
        div_zero = true;
        return 0.0;
      }
      r = 1.0 / r;
    }
    return r;
  }
  if (a > 0.0) return std::exp(b * std::log(a));
  if (b == std::trunc(b)) return std::pow(a, b);
  domain_ok = false;
  return 0.0;
}

/// An immutable parsed expression. Copies share the tree.
class Expression {
 public:
  Expression() = default;

  static Expression parse(std::string_view source, int max_var) {
    detail::Parser parser(source, max_var);
    Expression e;
    e.source_ = std::string(source);
    e.root_ = parser.parse();
    e.highest_ = parser.highest_variable();
    e.compile(*e.root_);
    return e;
  }

  static Expression constant(double value) { return parse(serialize_constant(value), 0); }

  const std::string& source() const noexcept { return source_; }
  const ExprNode& root() const noexcept { return *root_; }
  /// Highest variable index referenced (1-based; 0 when constant).
  int highest_variable() const noexcept { return highest_; }
  bool is_constant() const noexcept { return highest_ == 0; }

  std::string serialize() const {
    std::string out;
    detail::serialize_into(*root_, out);
    return out;
  }

  bool structurally_equal(const Expression& other) const {
    return detail::structurally_equal(root_.get(), other.root_.get());
  }

  double eval(std::span<const double> coords) const {
    if (static_cast<int>(coords.size()) < highest_)
      throw PreconditionError("expression uses x" + std::to_string(highest_) + " but only " +
                              std::to_string(coords.size()) + " coordinates were given");
    thread_local std::vector<double> stack;
    stack.clear();
    for (const auto& ins : program_) {
      switch (ins.op) {
        case ExprOp::constant: stack.push_back(ins.value); break;
        case ExprOp::variable: stack.push_back(coords[static_cast<std::size_t>(ins.index)]); break;
        case ExprOp::negate: stack.back() = -stack.back(); break;
        case ExprOp::call: stack.back() = apply(ins, stack.back()); break;
        default: {
          const double b = stack.back();
          stack.pop_back();
          double& a = stack.back();
          a = combine(ins, a, b);
        }
      }
    }
    return stack.back();
  }

  double eval(const Vec& coords) const { return eval(std::span<const double>(coords.data(), static_cast<std::size_t>(coords.size()))); }

  /// Central differences (e(x+h e_i) - e(x-h e_i)) / 2h for every coordinate.
  Vec gradient(const Vec& coords, double h) const {
    if (!(h > 0.0)) throw PreconditionError("gradient step must be positive");
    Vec grad(coords.size());
    Vec probe = coords;
    for (Eigen::Index i = 0; i < coords.size(); ++i) {
      probe[i] = coords[i] + h;
      const double up = eval(probe);
      probe[i] = coords[i] - h;
      const double down = eval(probe);
      probe[i] = coords[i];
      grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
  }

 private:
  struct Instruction {
    ExprOp op;
    ExprFunc func;
    int index;
    double value;
    const ExprNode* node;
  };

  static std::string serialize_constant(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), std::fabs(v));
    std::string s(buf.data(), end);
    return v < 0 ? "-" + s : s;
  }

  void compile(const ExprNode& n) {
    if (n.lhs) compile(*n.lhs);
    if (n.rhs) compile(*n.rhs);
    program_.push_back({n.op, n.func, n.index, n.value, &n});
  }

  static std::string text(const ExprNode* n) {
    std::string s;
    detail::serialize_into(*n, s);
    return s;
  }

  static double apply(const Instruction& ins, double a) {
    switch (ins.func) {
      case ExprFunc::sin: return std::sin(a);
      case ExprFunc::cos: return std::cos(a);
      case ExprFunc::exp: return std::exp(a);
      case ExprFunc::sqrt:
        if (a < 0.0) throw DomainError("sqrt of negative value " + std::to_string(a), text(ins.node));
        return std::sqrt(a);
      case ExprFunc::log:
        if (a <= 0.0) throw DomainError("log of non-positive value " + std::to_string(a), text(ins.node));
        return std::log(a);
      case ExprFunc::abs: return std::fabs(a);
    }
    return a;
  }

  static double combine(const Instruction& ins, double a, double b) {
    switch (ins.op) {
      case ExprOp::add: return a + b;
      case ExprOp::sub: return a - b;
      case ExprOp::mul: return a * b;
      case ExprOp::div:
        if (b == 0.0) throw DomainError("division by zero", text(ins.node));
        return a / b;
      case ExprOp::pow: {
        bool ok = true, div_zero = false;
        const double r = integer_or_real_power(a, b, ok, div_zero);
        if (div_zero) throw DomainError("division by zero", text(ins.node));
        if (!ok) throw DomainError("non-integer power of non-positive base", text(ins.node));
        return r;
      }
      default: return 0.0;
    }
  }

  std::string source_;
  std::shared_ptr<const ExprNode> root_;
  int highest_ = 0;
  std::vector<Instruction> program_;
};

}  // namespace freebdy
