#pragma once

#include <array>
#include <span>
#include <string>

#include "fgrad/params.hpp"
#include "fgrad/program.hpp"

// Two-dimensional optimization benchmarks with closed-form gradients.
namespace fgrad::testfuncs {

enum class Kind { kBeale, kRosenbrock };

using Point = std::array<double, 2>;

struct TestFunction {
  Kind kind;
  std::string name;
  Point minimum;
  double minimum_value;
  Point start;
  // Constant learning rate used for trajectory comparisons.
  double default_lr;

  double evaluate(Point p) const;
  Point gradient(Point p) const;
};

const TestFunction& beale();
const TestFunction& rosenbrock();
// "beale" or "rosenbrock"; throws ContractError otherwise.
const TestFunction& by_name(const std::string& name);

double beale_value(double x, double y);
Point beale_gradient(double x, double y);
double rosenbrock_value(double x, double y);
Point rosenbrock_gradient(double x, double y);

// (1.5 - x + xy)^2 + (2.25 - x + xy^2)^2 + (2.625 - x + xy^3)^2
template <class V>
V beale(const V& x, const V& y) {
  const V xy = mul(x, y);
  const V y2 = mul(y, y);
  const V r1 = add_scalar(sub(xy, x), 1.5);
  const V r2 = add_scalar(sub(mul(x, y2), x), 2.25);
  const V r3 = add_scalar(sub(mul(x, mul(y2, y)), x), 2.625);
  return add(add(square(r1), square(r2)), square(r3));
}

// (1 - x)^2 + 100 (y - x^2)^2
template <class V>
V rosenbrock(const V& x, const V& y) {
  const V a = add_scalar(scale(x, -1.0), 1.0);
  const V b = sub(y, square(x));
  return add(square(a), scale(square(b), 100.0));
}

// Parameters {x, y}, each a one-element tensor.
ParamSet make_params(Point p);
Point point_of(const ParamSet& params);

inline auto program(Kind kind) {
  return [kind](auto p) {
    using V = typename decltype(p)::value_type;
    return kind == Kind::kBeale ? beale<V>(p[0], p[1]) : rosenbrock<V>(p[0], p[1]);
  };
}

}  // namespace fgrad::testfuncs
