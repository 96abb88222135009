#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fe2ml/fe.hpp"
#include "fe2ml/mlp.hpp"
#include "fe2ml/rve.hpp"

namespace fe2ml {

/// Paired (F_M, P_M) samples in physical units.
struct Dataset {
  std::vector<Tensor2> F;
  std::vector<Tensor2> P;

  std::size_t size() const { return F.size(); }
  /// Throws ConfigError on a non-positive det F, duplicate F rows or mismatched lengths.
  void validate() const;
  bool operator==(const Dataset& o) const { return F == o.F && P == o.P; }
};

TrainingData to_training_data(const Dataset& data);

/// Header F11,F12,F21,F22,P11,P12,P21,P22; 17 significant digits; LF endings.
std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(const std::string& text);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// 64-bit FNV-1a of a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

struct SamplingSpec {
  std::size_t n_samples = 500;
  double amplitude = 0.15;  // max |F_ij - I_ij|
  double min_det = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// F = I + delta, delta_ij ~ U[-amplitude, amplitude], redrawn while
/// det F < min_det. The first sample is always the identity.
std::vector<Tensor2> sample_deformation_gradients(const SamplingSpec& spec);

struct GenerationReport {
  std::size_t converged = 0;
  std::size_t failed = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> diagnostics;
};

/// One RVE solve per sample; rows keep the input order. Failed solves are
/// skipped and reported, exact duplicate inputs are dropped. Throws
/// DatasetGenerationFailed when more than 10% of the samples fail.
Dataset generate_dataset(const RveProblem& rve, const std::vector<Tensor2>& samples, const NewtonOptions& options,
                         unsigned threads = 0, GenerationReport* report = nullptr);

}  // namespace fe2ml
