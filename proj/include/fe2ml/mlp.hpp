#pragma once

// Feed-forward surrogate for the RVE map F_M -> P_M: tanh-shaped hidden
// layers, linear output layer, per-component affine normalization.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fe2ml/tensor.hpp"

namespace fe2ml {

/// z = (v - shift) / scale per component.
struct Normalization {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  static Normalization identity(std::size_t n);
  /// shift = column mean, scale = max |v - mean| (1 for constant columns).
  static Normalization fit(const Eigen::MatrixXd& samples);

  Eigen::VectorXd normalize(const Eigen::VectorXd& v) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& z) const;
  bool operator==(const Normalization& o) const { return shift == o.shift && scale == o.scale; }
};

struct MlpNetwork {
  std::vector<std::size_t> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;  // weights[l] is layer_sizes[l+1] x layer_sizes[l]
  std::vector<Eigen::VectorXd> biases;
  Normalization input_norm;
  Normalization output_norm;

  struct Meta {
    std::uint64_t seed = 0;
    std::optional<double> final_mse;
    std::string dataset_hash;
  } meta;

  /// Throws ShapeError when shapes do not chain or scales are not positive.
  void validate() const;
  std::size_t num_inputs() const { return layer_sizes.front(); }
  std::size_t num_outputs() const { return layer_sizes.back(); }
  std::size_t num_parameters() const;
  /// Layer by layer: weights row-major, then biases.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);

  bool operator==(const MlpNetwork& o) const;
};

/// 2 / (1 + exp(-2x)) - 1, evaluated as tanh(x) for accuracy near zero.
double activation(double x);

/// Network with every weight and bias zero and identity normalization.
MlpNetwork zero_network(std::vector<std::size_t> layer_sizes);

/// Nguyen-Widrow hidden layers: rows rescaled to norm 0.7 H^(1/n), biases
/// evenly spaced in (-beta, beta). Output layer uniform in [-0.1, 0.1].
MlpNetwork init_nguyen_widrow(std::vector<std::size_t> layer_sizes, std::uint64_t seed);

/// Physical-units forward pass. Throws ShapeError on length mismatch.
Eigen::VectorXd forward(const MlpNetwork& net, const Eigen::VectorXd& input);

/// d forward / d input, exact (forward-mode through the layers).
Eigen::MatrixXd input_jacobian(const MlpNetwork& net, const Eigen::VectorXd& input);

/// Samples as rows.
struct TrainingData {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

/// Fits input and output normalization of `net` to the data.
void fit_normalization(MlpNetwork& net, const TrainingData& data);

struct TrainingConfig {
  int max_iterations = 500;
  double target_mse = 1e-7;  // normalized units
  double lm_lambda0 = 1e-3;
  double lm_lambda_factor = 10.0;
  double lm_lambda_max = 1e10;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

struct TrainingReport {
  double final_mse = 0.0;
  int iterations_used = 0;
  std::vector<double> mse_history;  // initial loss, then each accepted step
  std::string stop_reason;
};

/// Mean squared error in normalized output units.
double normalized_mse(const MlpNetwork& net, const TrainingData& data);

/// Levenberg-Marquardt on the normalized residuals:
///   dtheta = -(J^T J + lambda I)^{-1} J^T r.
/// Uses the normalization already stored in `net`.
std::pair<MlpNetwork, TrainingReport> train_lm(MlpNetwork net, const TrainingData& data, const TrainingConfig& cfg);

/// P_M^NN for a 4-4 network on row-major flattened tensors.
Tensor2 surrogate_pk(const MlpNetwork& net, const Tensor2& F_M);

/// Central differences of surrogate_pk. Without `h` each component uses
/// 1e-5 times its input normalization scale.
Tensor4 surrogate_tangent(const MlpNetwork& net, const Tensor2& F_M, std::optional<double> h = std::nullopt);

nlohmann::json network_to_json(const MlpNetwork& net);
MlpNetwork network_from_json(const nlohmann::json& doc);
void save_network(const std::filesystem::path& path, const MlpNetwork& net);
MlpNetwork load_network(const std::filesystem::path& path);

}  // namespace fe2ml
