#include "fgrad/testfuncs.hpp"

#include "fgrad/errors.hpp"

namespace fgrad::testfuncs {

double beale_value(double x, double y) {
  const double r1 = 1.5 - x + x * y;
  const double r2 = 2.25 - x + x * y * y;
  const double r3 = 2.625 - x + x * y * y * y;
  return r1 * r1 + r2 * r2 + r3 * r3;
}

Point beale_gradient(double x, double y) {
  const double r1 = 1.5 - x + x * y;
  const double r2 = 2.25 - x + x * y * y;
  const double r3 = 2.625 - x + x * y * y * y;
  return {2.0 * r1 * (y - 1.0) + 2.0 * r2 * (y * y - 1.0) + 2.0 * r3 * (y * y * y - 1.0),
          2.0 * r1 * x + 2.0 * r2 * 2.0 * x * y + 2.0 * r3 * 3.0 * x * y * y};
}

double rosenbrock_value(double x, double y) {
  const double a = 1.0 - x;
  const double b = y - x * x;
  return a * a + 100.0 * b * b;
}

Point rosenbrock_gradient(double x, double y) {
  return {-2.0 * (1.0 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)};
}

double TestFunction::evaluate(Point p) const {
  return kind == Kind::kBeale ? beale_value(p[0], p[1]) : rosenbrock_value(p[0], p[1]);
}

Point TestFunction::gradient(Point p) const {
  return kind == Kind::kBeale ? beale_gradient(p[0], p[1]) : rosenbrock_gradient(p[0], p[1]);
}

const TestFunction& beale() {
  static const TestFunction f{Kind::kBeale, "beale", {3.0, 0.5}, 0.0, {1.5, -0.1}, 0.01};
  return f;
}

const TestFunction& rosenbrock() {
  static const TestFunction f{Kind::kRosenbrock, "rosenbrock", {1.0, 1.0}, 0.0, {-1.0, 1.0}, 5e-4};
  return f;
}

const TestFunction& by_name(const std::string& name) {
  if (name == "beale") return beale();
  if (name == "rosenbrock") return rosenbrock();
  throw ContractError("unknown test function '" + name + "' (expected beale or rosenbrock)");
}

ParamSet make_params(Point p) {
  ParamSet params;
  params.add("x", Tensor::scalar(p[0]));
  params.add("y", Tensor::scalar(p[1]));
  return params;
}

Point point_of(const ParamSet& params) { return {params[0].item(), params[1].item()}; }

}  // namespace fgrad::testfuncs
