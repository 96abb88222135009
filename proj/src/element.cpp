#include "fe2ml/element.hpp"

#include <cmath>

namespace fe2ml {

namespace {
constexpr double kXi[4] = {-1.0, 1.0, 1.0, -1.0};
constexpr double kEta[4] = {-1.0, -1.0, 1.0, 1.0};
}  // namespace

ShapeValues shape_eval(double xi, double eta) {
  ShapeValues s;
  for (int a = 0; a < 4; ++a) {
    s.values[a] = 0.25 * (1.0 + kXi[a] * xi) * (1.0 + kEta[a] * eta);
    s.gradients(a, 0) = 0.25 * kXi[a] * (1.0 + kEta[a] * eta);
    s.gradients(a, 1) = 0.25 * kEta[a] * (1.0 + kXi[a] * xi);
  }
  return s;
}

QuadratureRule QuadratureRule::gauss2x2() {
  const double g = 1.0 / std::sqrt(3.0);
  return {{{-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}}};
}

}  // namespace fe2ml
