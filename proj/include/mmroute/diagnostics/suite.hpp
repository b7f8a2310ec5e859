#pragma once

#include "mmroute/synth/scenario.hpp"
#include "mmroute/train/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mmroute::diagnostics {

struct SuiteOptions {
  std::uint64_t seed = 0;
  int trials = 3;  // seeds seed, seed + 1, ...
  ad::Index n_train = 1000;
  ad::Index n_test = 1000;
  ad::Index min_route_samples = 20;
  int threads = 1;  // independent trainings run concurrently
  train::TrainConfig config;
  std::optional<std::filesystem::path> out_dir;
};

struct TrialResult {
  synth::Scenario scenario = synth::Scenario::s1;
  std::uint64_t seed = 0;
  Eigen::Matrix<double, 8, 1> joint_pmf;
  Eigen::Vector4d path_marginals;
  double stl_mass = 0.0;
  double mtl_mass = 0.0;
  double rmse_task1 = 0.0;
  double rmse_task2 = 0.0;
  double spearman = 0.0;  // NaN when fewer than two routes qualify
  int qualifying_routes = 0;
  bool claim = false;      // the scenario's routing claim for this trial
  bool alignment = false;  // probability-error rank correlation ≤ 0
};

struct ClaimResult {
  std::string name;
  std::string description;
  int passed_trials = 0;
  int trials = 0;
  bool passed = false;
};

struct SuiteReport {
  std::vector<TrialResult> trials;
  std::vector<ClaimResult> claims;
  bool passed() const;
  nlohmann::json to_json() const;
};

// Routing claim of a scenario evaluated on one trial's joint PMF.
bool scenario_claim(synth::Scenario scenario, const Eigen::Matrix<double, 8, 1>& joint_pmf);

// Spearman correlation between slot probability mass and hard-routed slot mean
// absolute error, over slots with at least `min_samples` assigned samples.
struct Alignment {
  double spearman = 0.0;
  int qualifying = 0;
  bool passed = false;  // vacuously true with fewer than two qualifying slots
};
Alignment probability_error_alignment(const Eigen::Matrix<double, 8, 1>& joint_pmf,
                                      const std::vector<int>& selected,
                                      const std::vector<double>& abs_errors, ad::Index min_samples);

SuiteReport scenario_suite(const SuiteOptions& options);

}  // namespace mmroute::diagnostics
