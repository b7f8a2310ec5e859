#pragma once

#include "mmroute/synth/rff.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmroute::synth {

// S1: linear + RFF cross-modal + sinusoidal terms (General is the same recipe).
// S2: no cross-modal β terms. S3: no sinusoidal γ terms.
enum class Scenario { s1, s2, s3, general };

Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario s);

struct ScenarioDims {
  Index d_num = 16;
  Index d_text = 16;
  Index rff_dim = 32;
};

struct ScenarioSpec {
  Scenario scenario = Scenario::s1;
  Index d_num = 16;
  Index d_text = 16;
  Index rff_dim = 32;

  Eigen::VectorXd alpha1;  // d_num
  Eigen::VectorXd alpha2;  // d_text
  Eigen::VectorXd beta1;   // D, weights φ(x_text)
  Eigen::VectorXd beta2;   // D, weights ψ(x_num)
  Eigen::VectorXd omega1;  // d_num
  Eigen::VectorXd omega2;  // d_text
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double noise_sigma = 0.1;

  RffMap phi;  // on x_text
  RffMap psi;  // on x_num
  std::uint64_t seed = 0;

  bool uses_cross_terms() const { return scenario != Scenario::s2; }
  bool uses_sinusoids() const { return scenario != Scenario::s3; }

  static ScenarioSpec sample(Scenario scenario, std::uint64_t seed, const ScenarioDims& dims = {});
  void validate() const;  // throws ShapeError
};

enum class Split { train, test };
std::string to_string(Split s);

struct Dataset {
  Eigen::MatrixXd x_num;   // n × d_num
  Eigen::MatrixXd x_text;  // n × d_text
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  Split split = Split::train;

  Index size() const { return x_num.rows(); }
  Index d_num() const { return x_num.cols(); }
  Index d_text() const { return x_text.cols(); }

  Dataset rows(const std::vector<Index>& indices) const;
  Eigen::MatrixXd targets() const;  // n × 2
  void validate() const;            // shapes agree, values finite
};

// Targets without noise for one sample.
Eigen::Vector2d noiseless_targets(const ScenarioSpec& spec, const Eigen::VectorXd& x_num,
                                  const Eigen::VectorXd& x_text);

// Sample i draws from its own substream of `seed`, so the result is
// independent of evaluation order.
Dataset generate(const ScenarioSpec& spec, Index n, std::uint64_t seed, Split split = Split::train);

// FNV-1a over the raw bits of every stored value.
std::uint64_t dataset_hash(const Dataset& d);

struct Benchmark {
  ScenarioSpec spec;
  Dataset train;
  Dataset test;
  std::uint64_t train_seed = 0;
  std::uint64_t test_seed = 0;
};

Benchmark make_benchmark(Scenario scenario, Index n_train, Index n_test, std::uint64_t seed,
                         const ScenarioDims& dims = {});

nlohmann::json spec_to_json(const ScenarioSpec& spec);
ScenarioSpec spec_from_json(const nlohmann::json& j);

// Header: x_num_0.., x_text_0.., y1, y2.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset_csv(const std::filesystem::path& path, Split split = Split::train);

// Writes train.csv, test.csv and spec.json (with the generation seeds) into dir.
void split_and_serialize(const Benchmark& b, const std::filesystem::path& dir);
Benchmark load_benchmark(const std::filesystem::path& dir);
// Regenerates both splits from spec.json alone.
Benchmark replay(const std::filesystem::path& spec_json);

}  // namespace mmroute::synth
