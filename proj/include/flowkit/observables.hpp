#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"

namespace flowkit {

/// Scalar function on the state space, with an optional analytic gradient.
/// Without one, gradients come from central differences.
struct Observable {
  using Fn = std::function<double(std::span<const double>)>;
  using Grad = std::function<void(std::span<const double>, std::span<double>)>;

  std::string name;
  Fn f;
  Grad grad;
  double fd_step = 1e-6;

  double operator()(std::span<const double> x) const { return f(x); }

  Point gradient(std::span<const double> x) const {
    Point g(x.size(), 0.0);
    if (grad) {
      grad(x, g);
      return g;
    }
    Point y(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = fd_step * std::max(1.0, std::abs(x[i]));
      y[i] = x[i] + h;
      const double up = f(y);
      y[i] = x[i] - h;
      const double down = f(y);
      y[i] = x[i];
      g[i] = (up - down) / (2 * h);
    }
    return g;
  }
};

namespace observables {

inline Observable constant(double c) {
  return {"constant(" + std::to_string(c) + ")", [c](std::span<const double>) { return c; },
          [](std::span<const double>, std::span<double> g) {
            for (auto& v : g) v = 0.0;
          }};
}

inline Observable coordinate(std::size_t i) {
  return {"coordinate(" + std::to_string(i) + ")", [i](std::span<const double> x) { return x[i]; },
          [i](std::span<const double>, std::span<double> g) {
            for (auto& v : g) v = 0.0;
            g[i] = 1.0;
          }};
}

inline Observable coordinate_square(std::size_t i) {
  return {"coordinate_square(" + std::to_string(i) + ")", [i](std::span<const double> x) { return x[i] * x[i]; },
          [i](std::span<const double> x, std::span<double> g) {
            for (auto& v : g) v = 0.0;
            g[i] = 2.0 * x[i];
          }};
}

inline Observable hamiltonian(const FlowSystem& system) {
  require(system.definition() == FlowSystem::Definition::hamiltonian, ErrorCode::invalid_argument,
          "system " + system.name() + " has no hamiltonian");
  return {"hamiltonian", [system](std::span<const double> x) { return system.hamiltonian(x); },
          [system](std::span<const double> x, std::span<double> g) {
            system.hamiltonian_gradient(x, g);
          }};
}

/// (q_k^2 + p_k^2) / 2 for mode k of a state (q_1..q_m, p_1..p_m).
inline Observable mode_energy(std::size_t k, std::size_t m) {
  return {"mode_energy(" + std::to_string(k) + ")",
          [k, m](std::span<const double> x) { return 0.5 * (x[k] * x[k] + x[m + k] * x[m + k]); },
          [k, m](std::span<const double> x, std::span<double> g) {
            for (auto& v : g) v = 0.0;
            g[k] = x[k];
            g[m + k] = x[m + k];
          }};
}

/// Smoothed indicator of the box |x_i - c_i| <= r: a product of tanh steps of
/// width r/20, whose integral over each axis is 2r up to exp(-40). Offsets
/// on periodic axes use the wrapped difference.
inline Observable bump(const StateSpace& space, Point center, double radius) {
  require(center.size() == space.dim() && radius > 0.0, ErrorCode::invalid_argument, "bad bump parameters");
  const double w = radius / 20.0;
  auto factor = [=](std::size_t i, double xi, double* deriv) {
    const double u = space.axis_difference(i, xi, center[i]);
    const double a = std::tanh((radius - u) / w), b = std::tanh((radius + u) / w);
    // 0.5 (1 + tanh((r - |u|)/w)) written symmetrically as a product of two
    // steps, which is smooth through u = 0.
    const double s = 0.25 * (1 + a) * (1 + b);
    if (deriv) *deriv = 0.25 * (-(1 - a * a) / w * (1 + b) + (1 + a) * (1 - b * b) / w);
    return s;
  };
  std::ostringstream name;
  name << "bump(";
  for (std::size_t i = 0; i < center.size(); ++i) name << (i ? "," : "") << center[i];
  name << ";" << radius << ")";
  return {name.str(),
          [=](std::span<const double> x) {
            double p = 1.0;
            for (std::size_t i = 0; i < x.size(); ++i) p *= factor(i, x[i], nullptr);
            return p;
          },
          [=](std::span<const double> x, std::span<double> g) {
            std::vector<double> s(x.size()), d(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) s[i] = factor(i, x[i], &d[i]);
            for (std::size_t i = 0; i < x.size(); ++i) {
              double p = d[i];
              for (std::size_t j = 0; j < x.size(); ++j)
                if (j != i) p *= s[j];
              g[i] = p;
            }
          }};
}

struct Monomial {
  double coefficient = 0.0;
  std::vector<unsigned> exponents;
};

inline Observable polynomial(std::vector<Monomial> terms, std::string label = "polynomial") {
  auto eval = [terms](std::span<const double> x) {
    double s = 0.0;
    for (const auto& t : terms) {
      double p = t.coefficient;
      for (std::size_t i = 0; i < t.exponents.size(); ++i) p *= std::pow(x[i], static_cast<double>(t.exponents[i]));
      s += p;
    }
    return s;
  };
  auto grad = [terms](std::span<const double> x, std::span<double> g) {
    for (auto& v : g) v = 0.0;
    for (const auto& t : terms)
      for (std::size_t i = 0; i < t.exponents.size(); ++i) {
        if (t.exponents[i] == 0) continue;
        double p = t.coefficient * t.exponents[i] * std::pow(x[i], t.exponents[i] - 1.0);
        for (std::size_t j = 0; j < t.exponents.size(); ++j)
          if (j != i) p *= std::pow(x[j], static_cast<double>(t.exponents[j]));
        g[i] += p;
      }
  };
  return {std::move(label), eval, grad};
}

// Linear combination a f + b g (gradients combine when both exist).
inline Observable combine(double a, const Observable& f, double b, const Observable& g) {
  Observable out{"combination", [=](std::span<const double> x) { return a * f(x) + b * g(x); }, nullptr};
  out.grad = [=](std::span<const double> x, std::span<double> gr) {
    Point gf = f.gradient(x), gg = g.gradient(x);
    for (std::size_t i = 0; i < gr.size(); ++i) gr[i] = a * gf[i] + b * gg[i];
  };
  return out;
}

namespace detail {

inline std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c); };
  while (!s.empty() && issp(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(s[i])) ++i;
  return s.substr(i);
}

inline double to_number(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config_error, "bad number '" + s + "' in " + context);
}

inline std::size_t to_index(const std::string& s, std::size_t dim, const std::string& context) {
  const double v = to_number(s, context);
  if (v < 0 || v != std::floor(v) || v >= static_cast<double>(dim))
    throw Error(ErrorCode::config_error, "coordinate index out of range in " + context);
  return static_cast<std::size_t>(v);
}

// "1.5*x0^2*x1 - 2*x1 + 3"
inline std::vector<Monomial> parse_polynomial(const std::string& text, std::size_t dim) {
  std::vector<std::string> pieces;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool sign = (c == '+' || c == '-');
    // the sign in 1e-3 belongs to the number
    const bool exponent_sign = i >= 2 && (text[i - 1] == 'e' || text[i - 1] == 'E') &&
                               (std::isdigit(static_cast<unsigned char>(text[i - 2])) || text[i - 2] == '.');
    if (sign && !exponent_sign && !trim(cur).empty()) {
      pieces.push_back(cur);
      cur.clear();
    }
    cur += c;
  }
  if (!trim(cur).empty()) pieces.push_back(cur);
  require(!pieces.empty(), ErrorCode::config_error, "empty polynomial");

  std::vector<Monomial> terms;
  for (auto piece : pieces) {
    piece = trim(piece);
    double sign = 1.0;
    if (piece[0] == '+' || piece[0] == '-') {
      sign = piece[0] == '-' ? -1.0 : 1.0;
      piece = trim(piece.substr(1));
    }
    Monomial m{sign, std::vector<unsigned>(dim, 0)};
    std::stringstream ss(piece);
    std::string factor;
    while (std::getline(ss, factor, '*')) {
      factor = trim(factor);
      if (!factor.empty() && factor[0] == 'x') {
        const auto caret = factor.find('^');
        const std::size_t i = to_index(factor.substr(1, caret == std::string::npos ? std::string::npos : caret - 1),
                                       dim, "polynomial term '" + piece + "'");
        unsigned e = 1;
        if (caret != std::string::npos) {
          const double ev = to_number(factor.substr(caret + 1), "polynomial term '" + piece + "'");
          require(ev >= 0 && ev == std::floor(ev), ErrorCode::config_error, "exponents must be nonnegative integers");
          e = static_cast<unsigned>(ev);
        }
        m.exponents[i] += e;
      } else {
        m.coefficient *= to_number(factor, "polynomial term '" + piece + "'");
      }
    }
    terms.push_back(std::move(m));
  }
  return terms;
}

inline std::vector<std::string> split_args(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

/// Builds an observable from its textual form:
///   constant(c)  coordinate(i)  coordinate_square(i)  hamiltonian
///   mode_energy(k)  bump(c0,c1,...;r)  polynomial(1.5*x0^2*x1 - x1)
inline Observable parse(const std::string& spec, const FlowSystem& system) {
  const std::string s = detail::trim(spec);
  const auto open = s.find('(');
  const std::string head = detail::trim(s.substr(0, open));
  std::string args;
  if (open != std::string::npos) {
    require(s.back() == ')', ErrorCode::config_error, "unbalanced parentheses in observable '" + s + "'");
    args = s.substr(open + 1, s.size() - open - 2);
  }
  const std::size_t n = system.dim();
  Observable out;
  if (head == "constant") {
    out = constant(detail::to_number(detail::trim(args), s));
  } else if (head == "coordinate") {
    out = coordinate(detail::to_index(detail::trim(args), n, s));
  } else if (head == "coordinate_square") {
    out = coordinate_square(detail::to_index(detail::trim(args), n, s));
  } else if (head == "hamiltonian" && args.empty()) {
    require(system.definition() == FlowSystem::Definition::hamiltonian, ErrorCode::config_error,
            "observable hamiltonian needs a hamiltonian system");
    out = hamiltonian(system);
  } else if (head == "mode_energy") {
    require(n % 2 == 0, ErrorCode::config_error, "mode_energy needs an even dimension");
    const std::size_t k = detail::to_index(detail::trim(args), n / 2, s);
    out = mode_energy(k, n / 2);
  } else if (head == "bump") {
    const auto parts = detail::split_args(args, ';');
    require(parts.size() == 2, ErrorCode::config_error, "bump needs 'center;radius' in '" + s + "'");
    Point c;
    for (const auto& v : detail::split_args(parts[0], ',')) c.push_back(detail::to_number(v, s));
    require(c.size() == n, ErrorCode::config_error, "bump center dimension mismatch in '" + s + "'");
    const double r = detail::to_number(parts[1], s);
    require(r > 0.0, ErrorCode::config_error, "bump radius must be positive");
    out = bump(system.space(), c, r);
  } else if (head == "polynomial") {
    out = polynomial(detail::parse_polynomial(args, n));
  } else {
    throw Error(ErrorCode::config_error,
                "unknown observable '" + s +
                    "'; known: constant, coordinate, coordinate_square, hamiltonian, mode_energy, bump, polynomial");
  }
  out.name = s;
  return out;
}

}  // namespace observables
}  // namespace flowkit
