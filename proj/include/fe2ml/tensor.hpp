#pragma once

// Small dense 2D tensor algebra and the compressible neo-Hookean law used at
// both scales. Plane strain: all tensors are 2x2, the out-of-plane stretch is 1.

#include <array>
#include <cstddef>

#include <Eigen/Dense>

namespace fe2ml {

using Tensor2 = Eigen::Matrix2d;

/// Fourth-order 2x2x2x2 tensor, c(a,b,c,d) with zero-based indices.
/// Maps second-order increments as (C : dF)_ab = c(a,b,c,d) dF_cd.
class Tensor4 {
 public:
  Tensor4() { c_.fill(0.0); }

  double& operator()(int a, int b, int c, int d) { return c_[index(a, b, c, d)]; }
  double operator()(int a, int b, int c, int d) const { return c_[index(a, b, c, d)]; }

  /// Contract with a second-order tensor over the trailing index pair.
  Tensor2 contract(const Tensor2& dF) const;

  /// 4x4 matrix view acting on row-major flattened tensors (11,12,21,22).
  Eigen::Matrix4d as_matrix() const;
  static Tensor4 from_matrix(const Eigen::Matrix4d& m);

  double max_abs() const;
  bool all_finite() const;

  Tensor4& operator+=(const Tensor4& o);
  Tensor4& operator*=(double s);
  friend Tensor4 operator-(const Tensor4& a, const Tensor4& b);
  friend Tensor4 operator*(double s, Tensor4 t) { return t *= s; }

  const std::array<double, 16>& data() const { return c_; }

 private:
  static constexpr std::size_t index(int a, int b, int c, int d) {
    return static_cast<std::size_t>(((a * 2 + b) * 2 + c) * 2 + d);
  }
  std::array<double, 16> c_;
};

/// Row-major flattening (F11, F12, F21, F22) used by the dataset and the surrogate.
Eigen::Vector4d flatten(const Tensor2& t);
Tensor2 unflatten(const Eigen::Vector4d& v);

/// Lamé parameters of the plane-strain neo-Hookean law.
struct MaterialParams {
  double lambda = 1.0;
  double mu = 1.0;

  /// Throws ConfigError unless lambda > 0 and mu > 0.
  void validate() const;
  bool operator==(const MaterialParams&) const = default;
};

struct KinematicState {
  Tensor2 F;
  double J;
  Tensor2 b;  // left Cauchy-Green, F F^T
};

/// J = det F and b = F F^T. Throws InvalidDeformation when det F <= 0.
KinematicState kinematics_from_F(const Tensor2& F);

/// sigma = (lambda / 2J)(J^2 - 1) I + (mu / J)(b - I)
Tensor2 cauchy_neo_hookean(const KinematicState& state, const MaterialParams& mat);

/// Nanson map P = J sigma F^{-T}.
Tensor2 first_pk_from_cauchy(const Tensor2& sigma, const Tensor2& F);

/// Composition F -> sigma -> P.
Tensor2 first_pk(const Tensor2& F, const MaterialParams& mat);

/// Consistent tangent dP/dF in closed form:
///   c_abcd = lambda J^2 G_ab G_cd + (mu - lambda (J^2 - 1) / 2) G_ad G_cb + mu d_ac d_bd,
/// with G = F^{-T}.
Tensor4 material_tangent(const Tensor2& F, const MaterialParams& mat);

/// Central-difference dP/dF. The step is h * max(1, |F|_max).
Tensor4 material_tangent_fd(const MaterialParams& mat, const Tensor2& F, double h = 1e-6);

/// Double contraction A : B.
inline double ddot(const Tensor2& a, const Tensor2& b) { return (a.array() * b.array()).sum(); }

}  // namespace fe2ml
