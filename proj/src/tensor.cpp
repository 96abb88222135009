#include "fe2ml/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fe2ml/errors.hpp"

namespace fe2ml {

Tensor2 Tensor4::contract(const Tensor2& dF) const {
  Tensor2 out = Tensor2::Zero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) out(a, b) += (*this)(a, b, c, d) * dF(c, d);
  return out;
}

Eigen::Matrix4d Tensor4::as_matrix() const {
  Eigen::Matrix4d m;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) m(2 * a + b, 2 * c + d) = (*this)(a, b, c, d);
  return m;
}

Tensor4 Tensor4::from_matrix(const Eigen::Matrix4d& m) {
  Tensor4 t;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) t(a, b, c, d) = m(2 * a + b, 2 * c + d);
  return t;
}

double Tensor4::max_abs() const {
  double m = 0.0;
  for (double v : c_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor4::all_finite() const {
  return std::all_of(c_.begin(), c_.end(), [](double v) { return std::isfinite(v); });
}

Tensor4& Tensor4::operator+=(const Tensor4& o) {
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

Tensor4& Tensor4::operator*=(double s) {
  for (double& v : c_) v *= s;
  return *this;
}

Tensor4 operator-(const Tensor4& a, const Tensor4& b) {
  Tensor4 out = a;
  for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] -= b.c_[i];
  return out;
}

Eigen::Vector4d flatten(const Tensor2& t) { return {t(0, 0), t(0, 1), t(1, 0), t(1, 1)}; }

Tensor2 unflatten(const Eigen::Vector4d& v) {
  Tensor2 t;
  t << v[0], v[1], v[2], v[3];
  return t;
}

void MaterialParams::validate() const {
  if (!(lambda > 0.0) || !(mu > 0.0) || !std::isfinite(lambda) || !std::isfinite(mu))
    throw ConfigError("material parameters must satisfy lambda > 0 and mu > 0");
}

KinematicState kinematics_from_F(const Tensor2& F) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw InvalidDeformation(J);
  Tensor2 b = F * F.transpose();
  b(1, 0) = b(0, 1);
  return {F, J, b};
}

Tensor2 cauchy_neo_hookean(const KinematicState& s, const MaterialParams& mat) {
  const Tensor2 I = Tensor2::Identity();
  Tensor2 sigma = (0.5 * mat.lambda / s.J * (s.J * s.J - 1.0)) * I + (mat.mu / s.J) * (s.b - I);
  sigma(1, 0) = sigma(0, 1);
  return sigma;
}

Tensor2 first_pk_from_cauchy(const Tensor2& sigma, const Tensor2& F) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw InvalidDeformation(J);
  return J * sigma * F.inverse().transpose();
}

Tensor2 first_pk(const Tensor2& F, const MaterialParams& mat) {
  return first_pk_from_cauchy(cauchy_neo_hookean(kinematics_from_F(F), mat), F);
}

Tensor4 material_tangent(const Tensor2& F, const MaterialParams& mat) {
  const double J = F.determinant();
  if (!(J > 0.0)) throw InvalidDeformation(J);
  const Tensor2 G = F.inverse().transpose();
  const double volumetric = mat.lambda * J * J;
  const double geometric = mat.mu - 0.5 * mat.lambda * (J * J - 1.0);
  Tensor4 c;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int cc = 0; cc < 2; ++cc)
        for (int d = 0; d < 2; ++d)
          c(a, b, cc, d) = volumetric * G(a, b) * G(cc, d) + geometric * G(a, d) * G(cc, b) +
                           (a == cc && b == d ? mat.mu : 0.0);
  return c;
}

Tensor4 material_tangent_fd(const MaterialParams& mat, const Tensor2& F, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  const double step = h * std::max(1.0, F.cwiseAbs().maxCoeff());
  Tensor4 c;
  for (int cc = 0; cc < 2; ++cc)
    for (int d = 0; d < 2; ++d) {
      Tensor2 Fp = F, Fm = F;
      Fp(cc, d) += step;
      Fm(cc, d) -= step;
      const Tensor2 dP = (first_pk(Fp, mat) - first_pk(Fm, mat)) / (2.0 * step);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) c(a, b, cc, d) = dP(a, b);
    }
  return c;
}

}  // namespace fe2ml
