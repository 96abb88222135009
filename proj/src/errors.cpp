#include "fe2ml/errors.hpp"

#include <utility>

namespace fe2ml {

InvalidDeformation::InvalidDeformation(double det)
    : Error("invalid deformation: det F = " + std::to_string(det) + " is not positive"), det_(det) {}

ElementInversion::ElementInversion(std::size_t element, std::size_t gauss_point, double det)
    : Error("element " + std::to_string(element) + " inverted at Gauss point " + std::to_string(gauss_point) +
            " (det F = " + std::to_string(det) + ")"),
      element_(element),
      gauss_point_(gauss_point),
      det_(det) {}

SingularSystem::SingularSystem(std::size_t pivot)
    : Error("linear system singular to working precision at pivot " + std::to_string(pivot)), pivot_(pivot) {}

NonConvergence::NonConvergence(const std::string& what, std::vector<double> residual_history)
    : Error(what), history_(std::move(residual_history)) {}

DatasetGenerationFailed::DatasetGenerationFailed(const std::string& what, std::vector<std::string> diagnostics)
    : Error(what), diagnostics_(std::move(diagnostics)) {}

}  // namespace fe2ml
