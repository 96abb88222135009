#include "fe2ml/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "fe2ml/errors.hpp"
#include "fe2ml/parallel.hpp"

namespace fe2ml {

namespace {

constexpr const char* kHeader = "F11,F12,F21,F22,P11,P12,P21,P22";

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

std::array<double, 4> key_of(const Tensor2& F) { return {F(0, 0), F(0, 1), F(1, 0), F(1, 1)}; }

}  // namespace

void Dataset::validate() const {
  if (F.size() != P.size()) throw ConfigError("dataset: F and P columns differ in length");
  std::set<std::array<double, 4>> seen;
  for (std::size_t i = 0; i < F.size(); ++i) {
    if (!(F[i].determinant() > 0.0)) throw ConfigError("dataset row " + std::to_string(i + 1) + ": det F <= 0");
    if (!seen.insert(key_of(F[i])).second) throw ConfigError("dataset row " + std::to_string(i + 1) + ": duplicate F");
  }
}

TrainingData to_training_data(const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  TrainingData td{Eigen::MatrixXd(n, 4), Eigen::MatrixXd(n, 4)};
  for (Eigen::Index i = 0; i < n; ++i) {
    td.inputs.row(i) = flatten(data.F[i]).transpose();
    td.targets.row(i) = flatten(data.P[i]).transpose();
  }
  return td;
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out = kHeader;
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = flatten(data.F[i]);
    const auto p = flatten(data.P[i]);
    for (int k = 0; k < 8; ++k) {
      if (k > 0) out += ',';
      append_double(out, k < 4 ? f[k] : p[k - 4]);
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw ConfigError(std::string("dataset: header must be exactly ") + kHeader);
  Dataset data;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::array<double, 8> v{};
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int k = 0; k < 8; ++k) {
      const auto res = std::from_chars(p, end, v[k]);
      if (res.ec != std::errc()) throw ConfigError("dataset line " + std::to_string(row) + ": bad number");
      p = res.ptr;
      if (k < 7) {
        if (p == end || *p != ',') throw ConfigError("dataset line " + std::to_string(row) + ": expected 8 columns");
        ++p;
      }
    }
    if (p != end) throw ConfigError("dataset line " + std::to_string(row) + ": trailing characters");
    data.F.push_back(unflatten(Eigen::Vector4d(v[0], v[1], v[2], v[3])));
    data.P.push_back(unflatten(Eigen::Vector4d(v[4], v[5], v[6], v[7])));
  }
  data.validate();
  return data;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  write_text_file(path, dataset_to_csv(data));
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return dataset_from_csv(ss.str());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void SamplingSpec::validate() const {
  if (n_samples < 1) throw ConfigError("sampling: n_samples must be >= 1");
  if (!(amplitude >= 0.0)) throw ConfigError("sampling: amplitude must be >= 0");
  if (!(min_det > 0.0 && min_det < 1.0)) throw ConfigError("sampling: min_det must lie in (0, 1)");
}

std::vector<Tensor2> sample_deformation_gradients(const SamplingSpec& spec) {
  spec.validate();
  std::vector<Tensor2> out{Tensor2::Identity()};
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> dist(-spec.amplitude, spec.amplitude);
  std::size_t attempts = 0, rejected = 0;
  while (out.size() < spec.n_samples) {
    Tensor2 F = Tensor2::Identity();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) F(i, j) += spec.amplitude > 0.0 ? dist(rng) : 0.0;
    ++attempts;
    if (F.determinant() < spec.min_det) {
      ++rejected;
      if (attempts >= 1000 && rejected * 100 > attempts * 99)
        throw SamplingInfeasible("more than 99% of draws rejected; reduce amplitude or min_det");
      continue;
    }
    out.push_back(F);
  }
  return out;
}

Dataset generate_dataset(const RveProblem& rve, const std::vector<Tensor2>& samples, const NewtonOptions& options,
                         unsigned threads, GenerationReport* report) {
  std::vector<std::optional<Tensor2>> P(samples.size());
  std::vector<std::string> errors(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    try {
      P[i] = homogenized_pk(solve_rve(rve, samples[i], options), rve);
    } catch (const Error& e) {
      errors[i] = "sample " + std::to_string(i) + ": " + e.what();
    }
  });

  GenerationReport local;
  GenerationReport& rep = report ? *report : local;
  rep = {};
  Dataset data;
  std::set<std::array<double, 4>> seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!P[i]) {
      ++rep.failed;
      rep.diagnostics.push_back(errors[i]);
      continue;
    }
    ++rep.converged;
    if (!seen.insert(key_of(samples[i])).second) {
      ++rep.duplicates;
      continue;
    }
    data.F.push_back(samples[i]);
    data.P.push_back(*P[i]);
  }
  if (rep.failed * 10 > samples.size())
    throw DatasetGenerationFailed(std::to_string(rep.failed) + " of " + std::to_string(samples.size()) +
                                      " RVE solves failed",
                                  rep.diagnostics);
  return data;
}

}  // namespace fe2ml
