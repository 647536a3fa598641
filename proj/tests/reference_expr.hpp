#pragma once

// Independent oracle for the expression evaluator: evaluates while parsing,
// straight from the text, with no tree and no bytecode. Only the power rule
// is shared, since its integer fast path defines the value bitwise.

#include "freebdy/expr.hpp"
#include "freebdy/random.hpp"

#include <cctype>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace reference {

class Evaluator {
 public:
  Evaluator(std::string src, std::vector<double> x) : s_(std::move(src)), x_(std::move(x)) {}

  double run() {
    const double v = expr();
    ws();
    if (i_ != s_.size()) throw std::runtime_error("trailing input");
    return v;
  }

 private:
  void ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool eat(char c) {
    ws();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v = v + term();
      else if (eat('-')) v = v - term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v = v * unary();
      else if (eat('/')) {
        const double d = unary();
        if (d == 0.0) throw std::domain_error("division by zero");
        v = v / d;
      } else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    return power();
  }
  double exponent() {
    if (eat('-')) return -exponent();
    return primary();
  }
  double power() {
    double v = primary();
    while (eat('^')) {
      const double b = exponent();
      bool ok = true, dz = false;
      v = freebdy::integer_or_real_power(v, b, ok, dz);
      if (!ok || dz) throw std::domain_error("power");
    }
    return v;
  }
  double primary() {
    ws();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) throw std::runtime_error("expected )");
      return v;
    }
    if (i_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[i_])) || s_[i_] == '.')) {
      const char* begin = s_.c_str() + i_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      i_ += static_cast<std::size_t>(end - begin);
      return v;
    }
    std::string name;
    while (i_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[i_]))) name += s_[i_++];
    if (name.size() > 1 && name[0] == 'x' && std::isdigit(static_cast<unsigned char>(name[1])))
      return x_.at(static_cast<std::size_t>(std::stoi(name.substr(1)) - 1));
    if (!eat('(')) throw std::runtime_error("expected ( after " + name);
    const double a = expr();
    if (!eat(')')) throw std::runtime_error("expected )");
    if (name == "sin") return std::sin(a);
    if (name == "cos") return std::cos(a);
    if (name == "exp") return std::exp(a);
    if (name == "abs") return std::fabs(a);
    if (name == "sqrt") {
      if (a < 0) throw std::domain_error("sqrt");
      return std::sqrt(a);
    }
    if (name == "log") {
      if (a <= 0) throw std::domain_error("log");
      return std::log(a);
    }
    throw std::runtime_error("unknown function " + name);
  }

  std::string s_;
  std::vector<double> x_;
  std::size_t i_ = 0;
};

inline double eval(const std::string& src, const std::vector<double>& x) { return Evaluator(src, x).run(); }

/// Fixed corpus: smooth on the box [0.1, 0.9]^3.
inline const std::vector<std::string>& corpus() {
  static const std::vector<std::string> c{
      "1+2*3",
      "2*x1^2 + sin(x2)",
      "x1^3 - 3*x1*x2 + x3",
      "-x1^2",
      "2^-1 * x2",
      "exp(-x1*x1 - x2*x2)",
      "sqrt(1 + x1^2 + x2^2)",
      "log(1 + x3) / (1 + x1)",
      "cos(x1/2)^2 - sin(x2/3)^2",
      "abs(x1 - x2) + abs(x2 - x3)",
      "(x1 + x2 + x3)^4 / 24",
      "x1^0.5 + x2^1.5",
      "2 - (cos(x2/2) + sqrt(cos(x2/2)^2 - x1^2))",
      "((2 - x3)/2)^2",
      "1 + 0.2*x1 + 0.1*x1*x2",
      "4/((x1+1)^2 + x2^2 + x3^2)^2",
      "sin(cos(exp(x1 - x2)))",
      "x1 - x2 - x3 - 1.25e-1",
      "x1 / x2 / x3",
      "3.5*x1*x2*x3 - -x1 + (x2)",
  };
  return c;
}

/// Random grammar-generated expression over x1..x3, smooth and finite on (0, 1)^3.
inline std::string random_expression(freebdy::CounterRng& rng, int depth) {
  const auto pick = [&](int n) { return static_cast<int>(rng.uniform() * n) % n; };
  if (depth == 0) {
    switch (pick(3)) {
      case 0: return "x" + std::to_string(1 + pick(3));
      case 1: return std::to_string(pick(9) + 1);
      default: return std::to_string(rng.uniform(0.1, 3.0));
    }
  }
  const std::string a = random_expression(rng, depth - 1), b = random_expression(rng, depth - 1);
  switch (pick(9)) {
    case 0: return a + " + " + b;
    case 1: return a + " - " + b;
    case 2: return a + "*" + b;
    case 3: return "(" + a + ")/(1 + (" + b + ")^2)";
    case 4: return "(" + a + ")^" + std::to_string(pick(4));
    case 5: return "-(" + a + ")";
    case 6: return "sin(" + a + ")";
    case 7: return "exp(-(" + a + ")^2)";
    default: return "sqrt(1 + (" + b + ")^2)";
  }
}

}  // namespace reference
