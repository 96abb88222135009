#include "fe2ml/mlp.hpp"

#include <cmath>
#include <random>

#include "fe2ml/errors.hpp"
#include "fe2ml/mesh.hpp"
#include "fe2ml/parallel.hpp"

namespace fe2ml {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

Normalization Normalization::identity(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  return {VectorXd::Zero(m), VectorXd::Ones(m)};
}

Normalization Normalization::fit(const MatrixXd& samples) {
  if (samples.rows() == 0) throw EmptyDataset("cannot fit normalization to an empty sample set");
  Normalization n;
  n.shift = samples.colwise().mean().transpose();
  n.scale = (samples.rowwise() - n.shift.transpose()).cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index i = 0; i < n.scale.size(); ++i)
    if (!(n.scale[i] > 0.0)) n.scale[i] = 1.0;
  return n;
}

VectorXd Normalization::normalize(const VectorXd& v) const { return (v - shift).cwiseQuotient(scale); }
VectorXd Normalization::denormalize(const VectorXd& z) const { return z.cwiseProduct(scale) + shift; }

void MlpNetwork::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("network needs at least an input and an output layer");
  for (auto s : layer_sizes)
    if (s == 0) throw ShapeError("layer sizes must be positive");
  if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
    throw ShapeError("weights/biases do not match layer_sizes");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (static_cast<std::size_t>(weights[l].rows()) != layer_sizes[l + 1] ||
        static_cast<std::size_t>(weights[l].cols()) != layer_sizes[l])
      throw ShapeError("weight matrix " + std::to_string(l) + " has the wrong shape");
    if (static_cast<std::size_t>(biases[l].size()) != layer_sizes[l + 1])
      throw ShapeError("bias vector " + std::to_string(l) + " has the wrong length");
  }
  auto check = [](const Normalization& n, std::size_t size, const char* which) {
    if (static_cast<std::size_t>(n.shift.size()) != size || static_cast<std::size_t>(n.scale.size()) != size)
      throw ShapeError(std::string(which) + " normalization has the wrong length");
    for (Eigen::Index i = 0; i < n.scale.size(); ++i)
      if (!(n.scale[i] > 0.0)) throw ShapeError(std::string(which) + " normalization scale must be positive");
  };
  check(input_norm, layer_sizes.front(), "input");
  check(output_norm, layer_sizes.back(), "output");
}

std::size_t MlpNetwork::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return n;
}

VectorXd MlpNetwork::parameters() const {
  VectorXd theta(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j) theta[k++] = weights[l](i, j);
    for (Eigen::Index i = 0; i < biases[l].size(); ++i) theta[k++] = biases[l][i];
  }
  return theta;
}

void MlpNetwork::set_parameters(const VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != num_parameters()) throw ShapeError("parameter vector has wrong length");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j) weights[l](i, j) = theta[k++];
    for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l][i] = theta[k++];
  }
}

bool MlpNetwork::operator==(const MlpNetwork& o) const {
  if (layer_sizes != o.layer_sizes || weights.size() != o.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
  return input_norm == o.input_norm && output_norm == o.output_norm && meta.seed == o.meta.seed &&
         meta.final_mse == o.meta.final_mse && meta.dataset_hash == o.meta.dataset_hash;
}

double activation(double x) { return std::tanh(x); }

MlpNetwork zero_network(std::vector<std::size_t> layer_sizes) {
  MlpNetwork net;
  net.layer_sizes = std::move(layer_sizes);
  if (net.layer_sizes.size() < 2) throw ShapeError("network needs at least an input and an output layer");
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(net.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(net.layer_sizes[l]);
    net.weights.push_back(MatrixXd::Zero(rows, cols));
    net.biases.push_back(VectorXd::Zero(rows));
  }
  net.input_norm = Normalization::identity(net.layer_sizes.front());
  net.output_norm = Normalization::identity(net.layer_sizes.back());
  net.validate();
  return net;
}

MlpNetwork init_nguyen_widrow(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 3) throw ShapeError("Nguyen-Widrow initialization needs at least one hidden layer");
  MlpNetwork net = zero_network(std::move(layer_sizes));
  net.meta.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const std::size_t hidden_layers = net.weights.size() - 1;
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    auto& W = net.weights[l];
    auto& b = net.biases[l];
    const double H = static_cast<double>(W.rows());
    const double n = static_cast<double>(W.cols());
    const double beta = 0.7 * std::pow(H, 1.0 / n);
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = unit(rng);
      double norm = W.row(i).norm();
      if (norm == 0.0) {
        W(i, 0) = 1.0;
        norm = 1.0;
      }
      W.row(i) *= beta / norm;
      const double spaced = (2.0 * static_cast<double>(i) + 1.0 - H) / H;  // in (-1, 1)
      b[i] = beta * spaced * (W(i, 0) >= 0.0 ? 1.0 : -1.0);
    }
  }
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  auto& Wo = net.weights.back();
  for (Eigen::Index i = 0; i < Wo.rows(); ++i)
    for (Eigen::Index j = 0; j < Wo.cols(); ++j) Wo(i, j) = small(rng);
  for (Eigen::Index i = 0; i < net.biases.back().size(); ++i) net.biases.back()[i] = small(rng);
  return net;
}

namespace {

/// Normalized-space pass; layers[0] is the normalized input, the last entry the
/// linear output.
void propagate(const MlpNetwork& net, const VectorXd& z0, std::vector<VectorXd>& layers) {
  layers.resize(net.weights.size() + 1);
  layers[0] = z0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    layers[l + 1] = net.weights[l] * layers[l] + net.biases[l];
    if (l + 1 < net.weights.size()) layers[l + 1] = layers[l + 1].unaryExpr([](double x) { return activation(x); });
  }
}

void check_input(const MlpNetwork& net, const VectorXd& input) {
  if (static_cast<std::size_t>(input.size()) != net.num_inputs())
    throw ShapeError("network expects " + std::to_string(net.num_inputs()) + " inputs, got " +
                     std::to_string(input.size()));
}

/// Rows: outputs of one sample; columns: parameters in MlpNetwork::parameters order.
void parameter_jacobian(const MlpNetwork& net, const std::vector<VectorXd>& layers,
                        Eigen::Ref<MatrixXd> jac) {
  const std::size_t L = net.weights.size();
  const auto nout = static_cast<Eigen::Index>(net.num_outputs());
  std::vector<Eigen::Index> offset(L);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offset[l] = k;
    k += net.weights[l].size() + net.biases[l].size();
  }
  MatrixXd delta = MatrixXd::Identity(nout, nout);  // d output / d pre-activation of layer l+1
  for (std::size_t l = L; l-- > 0;) {
    const auto& z = layers[l];
    const auto rows = net.weights[l].rows(), cols = net.weights[l].cols();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) jac.col(offset[l] + i * cols + j) = delta.row(i).transpose() * z[j];
      jac.col(offset[l] + rows * cols + i) = delta.row(i).transpose();
    }
    if (l > 0) {
      delta = net.weights[l].transpose() * delta;
      const VectorXd slope = (1.0 - z.array().square()).matrix();
      delta = slope.asDiagonal() * delta;
    }
  }
}

}  // namespace

VectorXd forward(const MlpNetwork& net, const VectorXd& input) {
  check_input(net, input);
  std::vector<VectorXd> layers;
  propagate(net, net.input_norm.normalize(input), layers);
  return net.output_norm.denormalize(layers.back());
}

MatrixXd input_jacobian(const MlpNetwork& net, const VectorXd& input) {
  check_input(net, input);
  std::vector<VectorXd> layers;
  propagate(net, net.input_norm.normalize(input), layers);
  MatrixXd jac = net.input_norm.scale.cwiseInverse().asDiagonal();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    jac = net.weights[l] * jac;
    if (l + 1 < net.weights.size()) jac = (1.0 - layers[l + 1].array().square()).matrix().asDiagonal() * jac;
  }
  return net.output_norm.scale.asDiagonal() * jac;
}

void fit_normalization(MlpNetwork& net, const TrainingData& data) {
  if (static_cast<std::size_t>(data.inputs.cols()) != net.num_inputs() ||
      static_cast<std::size_t>(data.targets.cols()) != net.num_outputs())
    throw ShapeError("training data columns do not match the network");
  net.input_norm = Normalization::fit(data.inputs);
  net.output_norm = Normalization::fit(data.targets);
}

void TrainingConfig::validate() const {
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (!(target_mse > 0.0)) throw ConfigError("target_mse must be positive");
  if (!(lm_lambda0 > 0.0)) throw ConfigError("lm_lambda0 must be positive");
  if (!(lm_lambda_factor > 1.0)) throw ConfigError("lm_lambda_factor must exceed 1");
  if (!(lm_lambda_max > lm_lambda0)) throw ConfigError("lm_lambda_max must exceed lm_lambda0");
}

namespace {

struct NormalizedData {
  MatrixXd inputs;   // samples as columns
  MatrixXd targets;
};

NormalizedData normalize_data(const MlpNetwork& net, const TrainingData& data) {
  if (data.inputs.rows() == 0) throw EmptyDataset("training data is empty");
  if (data.inputs.rows() != data.targets.rows()) throw ShapeError("inputs and targets differ in sample count");
  if (static_cast<std::size_t>(data.inputs.cols()) != net.num_inputs() ||
      static_cast<std::size_t>(data.targets.cols()) != net.num_outputs())
    throw ShapeError("training data columns do not match the network");
  NormalizedData n{MatrixXd(data.inputs.cols(), data.inputs.rows()), MatrixXd(data.targets.cols(), data.targets.rows())};
  for (Eigen::Index s = 0; s < data.inputs.rows(); ++s) {
    n.inputs.col(s) = net.input_norm.normalize(data.inputs.row(s).transpose());
    n.targets.col(s) = net.output_norm.normalize(data.targets.row(s).transpose());
  }
  return n;
}

double loss(const MlpNetwork& net, const NormalizedData& data) {
  std::vector<VectorXd> layers;
  double sum = 0.0;
  for (Eigen::Index s = 0; s < data.inputs.cols(); ++s) {
    propagate(net, data.inputs.col(s), layers);
    sum += (layers.back() - data.targets.col(s)).squaredNorm();
  }
  return sum / static_cast<double>(data.targets.size());
}

}  // namespace

double normalized_mse(const MlpNetwork& net, const TrainingData& data) {
  net.validate();
  return loss(net, normalize_data(net, data));
}

std::pair<MlpNetwork, TrainingReport> train_lm(MlpNetwork net, const TrainingData& data, const TrainingConfig& cfg) {
  cfg.validate();
  net.validate();
  const NormalizedData nd = normalize_data(net, data);
  TrainingReport report;
  double mse = loss(net, nd);
  if (!std::isfinite(mse)) throw TrainingDiverged("initial loss is not finite");
  report.mse_history.push_back(mse);
  report.final_mse = mse;

  const auto samples = nd.inputs.cols();
  const auto nout = static_cast<Eigen::Index>(net.num_outputs());
  const auto P = static_cast<Eigen::Index>(net.num_parameters());
  MatrixXd J(samples * nout, P);
  VectorXd r(samples * nout);
  double lambda = cfg.lm_lambda0;
  report.stop_reason = "max_iterations";

  while (report.iterations_used < cfg.max_iterations) {
    if (mse <= cfg.target_mse) {
      report.stop_reason = "target_mse";
      break;
    }
    ++report.iterations_used;
    parallel_for(static_cast<std::size_t>(samples), cfg.threads, [&](std::size_t s) {
      const auto si = static_cast<Eigen::Index>(s);
      std::vector<VectorXd> layers;
      propagate(net, nd.inputs.col(si), layers);
      r.segment(si * nout, nout) = layers.back() - nd.targets.col(si);
      parameter_jacobian(net, layers, J.middleRows(si * nout, nout));
    });
    MatrixXd H = MatrixXd::Zero(P, P);
    H.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
    H = H.selfadjointView<Eigen::Lower>();
    const VectorXd g = J.transpose() * r;
    const VectorXd theta = net.parameters();

    bool accepted = false;
    while (!accepted) {
      MatrixXd A = H;
      A.diagonal().array() += lambda;
      Eigen::LLT<MatrixXd> llt(A);
      if (llt.info() == Eigen::Success) {
        net.set_parameters(theta - llt.solve(g));
        const double trial = loss(net, nd);
        if (std::isfinite(trial) && trial < mse) {
          mse = trial;
          lambda /= cfg.lm_lambda_factor;
          accepted = true;
          report.mse_history.push_back(mse);
          break;
        }
      }
      net.set_parameters(theta);
      lambda *= cfg.lm_lambda_factor;
      if (lambda > cfg.lm_lambda_max) break;
    }
    if (!accepted) {
      report.stop_reason = "lambda_overflow";
      break;
    }
  }
  if (report.stop_reason == "max_iterations" && mse <= cfg.target_mse) report.stop_reason = "target_mse";
  report.final_mse = mse;
  if (!std::isfinite(mse)) throw TrainingDiverged("loss became non-finite");
  if (report.iterations_used > 0) net.meta.final_mse = mse;
  return {std::move(net), std::move(report)};
}

Tensor2 surrogate_pk(const MlpNetwork& net, const Tensor2& F_M) {
  const double det = F_M.determinant();
  if (!(det > 0.0)) throw InvalidDeformation(det);
  if (net.num_inputs() != 4 || net.num_outputs() != 4) throw ShapeError("surrogate network must map 4 -> 4");
  return unflatten(forward(net, flatten(F_M)));
}

Tensor4 surrogate_tangent(const MlpNetwork& net, const Tensor2& F_M, std::optional<double> h) {
  if (h && !(*h > 0.0)) throw ConfigError("finite-difference step must be positive");
  Tensor4 C;
  for (int c = 0; c < 2; ++c)
    for (int d = 0; d < 2; ++d) {
      const double step = h ? *h : 1e-5 * net.input_norm.scale[2 * c + d];
      Tensor2 Fp = F_M, Fm = F_M;
      Fp(c, d) += step;
      Fm(c, d) -= step;
      const Tensor2 dP = (surrogate_pk(net, Fp) - surrogate_pk(net, Fm)) / (2.0 * step);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) C(a, b, c, d) = dP(a, b);
    }
  return C;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd vector_field(const json& doc, const std::string& where) {
  if (!doc.is_array()) throw ConfigError(where + ": expected an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(doc.size()));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!doc[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
    v[static_cast<Eigen::Index>(i)] = doc[i].get<double>();
  }
  return v;
}

Normalization norm_field(const json& doc, const std::string& where) {
  if (!doc.is_object() || !doc.contains("shift") || !doc.contains("scale"))
    throw ConfigError(where + ": expected {\"shift\": [...], \"scale\": [...]}");
  return {vector_field(doc["shift"], where + ".shift"), vector_field(doc["scale"], where + ".scale")};
}

}  // namespace

json network_to_json(const MlpNetwork& net) {
  json doc;
  doc["layer_sizes"] = net.layer_sizes;
  doc["weights"] = json::array();
  doc["biases"] = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    std::vector<double> flat;
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j) flat.push_back(net.weights[l](i, j));
    doc["weights"].push_back(flat);
    doc["biases"].push_back(to_std(net.biases[l]));
  }
  doc["input_norm"] = {{"shift", to_std(net.input_norm.shift)}, {"scale", to_std(net.input_norm.scale)}};
  doc["output_norm"] = {{"shift", to_std(net.output_norm.shift)}, {"scale", to_std(net.output_norm.scale)}};
  doc["meta"] = {{"seed", net.meta.seed},
                 {"final_mse", net.meta.final_mse ? json(*net.meta.final_mse) : json(nullptr)},
                 {"dataset_hash", net.meta.dataset_hash}};
  return doc;
}

MlpNetwork network_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("model: expected a JSON object");
  for (const char* key : {"layer_sizes", "weights", "biases", "input_norm", "output_norm"})
    if (!doc.contains(key)) throw ConfigError(std::string("model.") + key + ": missing");
  MlpNetwork net;
  for (const auto& v : doc["layer_sizes"]) {
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) throw ConfigError("model.layer_sizes: expected positive integers");
    net.layer_sizes.push_back(static_cast<std::size_t>(v.get<std::int64_t>()));
  }
  if (net.layer_sizes.size() < 2) throw ShapeError("model.layer_sizes: need at least two layers");
  const std::size_t L = net.layer_sizes.size() - 1;
  if (doc["weights"].size() != L || doc["biases"].size() != L) throw ShapeError("model: weights/biases per layer mismatch");
  for (std::size_t l = 0; l < L; ++l) {
    const auto rows = static_cast<Eigen::Index>(net.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(net.layer_sizes[l]);
    const VectorXd flat = vector_field(doc["weights"][l], "model.weights[" + std::to_string(l) + "]");
    if (flat.size() != rows * cols) throw ShapeError("model.weights[" + std::to_string(l) + "]: wrong element count");
    MatrixXd W(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) W(i, j) = flat[i * cols + j];
    net.weights.push_back(std::move(W));
    net.biases.push_back(vector_field(doc["biases"][l], "model.biases[" + std::to_string(l) + "]"));
  }
  net.input_norm = norm_field(doc["input_norm"], "model.input_norm");
  net.output_norm = norm_field(doc["output_norm"], "model.output_norm");
  if (doc.contains("meta") && doc["meta"].is_object()) {
    const auto& meta = doc["meta"];
    if (meta.contains("seed") && meta["seed"].is_number_unsigned()) net.meta.seed = meta["seed"].get<std::uint64_t>();
    if (meta.contains("final_mse") && meta["final_mse"].is_number()) net.meta.final_mse = meta["final_mse"].get<double>();
    if (meta.contains("dataset_hash") && meta["dataset_hash"].is_string())
      net.meta.dataset_hash = meta["dataset_hash"].get<std::string>();
  }
  net.validate();
  return net;
}

void save_network(const std::filesystem::path& path, const MlpNetwork& net) {
  write_text_file(path, network_to_json(net).dump(1) + "\n");
}

MlpNetwork load_network(const std::filesystem::path& path) { return network_from_json(read_json_file(path)); }

}  // namespace fe2ml
