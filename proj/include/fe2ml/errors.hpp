#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fe2ml {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A deformation gradient with non-positive determinant was supplied.
class InvalidDeformation : public Error {
 public:
  explicit InvalidDeformation(double det);
  double det() const noexcept { return det_; }

 private:
  double det_;
};

/// An element Gauss point was inverted (det F <= 0) during assembly.
class ElementInversion : public Error {
 public:
  ElementInversion(std::size_t element, std::size_t gauss_point, double det);
  std::size_t element() const noexcept { return element_; }
  std::size_t gauss_point() const noexcept { return gauss_point_; }
  double det() const noexcept { return det_; }

 private:
  std::size_t element_;
  std::size_t gauss_point_;
  double det_;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

class MeshNotPeriodic : public MeshError {
 public:
  using MeshError::MeshError;
};

class ConstraintError : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  explicit SingularSystem(std::size_t pivot);
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, std::vector<double> residual_history);
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class SamplingInfeasible : public Error {
 public:
  using Error::Error;
};

class DatasetGenerationFailed : public Error {
 public:
  DatasetGenerationFailed(const std::string& what, std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

class IncompatibleResults : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: configuration documents, CLI values, file schemas.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fe2ml
