#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fe2ml {

/// Bilinear quad4 shape functions on the parent square [-1,1]^2.
/// Local node order is counter-clockwise from (-1,-1).
struct ShapeValues {
  Eigen::Vector4d values;
  Eigen::Matrix<double, 4, 2> gradients;  // dN_a / d(xi, eta)
};

ShapeValues shape_eval(double xi, double eta);

struct QuadraturePoint {
  double xi;
  double eta;
  double weight;
};

struct QuadratureRule {
  std::vector<QuadraturePoint> points;

  static QuadratureRule gauss2x2();
  std::size_t size() const { return points.size(); }
};

}  // namespace fe2ml
