#pragma once

#include "mmroute/ad/checkpoint.hpp"
#include "mmroute/synth/scenario.hpp"
#include "mmroute/train/config.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace mmroute::train {

using ad::Matrix;
using experts::kNumSlots;

struct Model {
  experts::ModalityTransforms transforms;
  experts::ExpertBank bank;
  router::Router router;
  // Experts predict (y − shift) / scale; evaluation maps back to target units.
  Eigen::RowVector2d target_shift = Eigen::RowVector2d::Zero();
  Eigen::RowVector2d target_scale = Eigen::RowVector2d::Ones();

  static Model make(const TrainConfig& config, Index d_num, Index d_text);

  // Tensors the optimizer updates under the config's variant.
  std::vector<ad::Tensor*> trainable(const TrainConfig& config);
  // Checkpoint sections for the parts the variant uses.
  std::vector<ad::Section> sections(const TrainConfig& config);
};

// Dataset with every modality path precomputed.
struct Inputs {
  std::array<Matrix, experts::kNumPaths> paths;
  Matrix router_in;
  Matrix targets;  // n × 2

  static Inputs make(const Model& model, const synth::Dataset& data);
  Index size() const { return targets.rows(); }
};

struct Evaluation {
  Matrix joint;   // n × 8
  Matrix pi_mod;  // n × 4
  std::vector<int> selected;
  std::array<Matrix, kNumSlots> slot_outputs;  // n × 4 (mean1, logvar1, mean2, logvar2); empty if unused
  Matrix soft_pred;  // n × 2
  Matrix hard_pred;  // n × 2
  Matrix targets;    // n × 2
  Eigen::Vector2d rmse_soft = Eigen::Vector2d::Zero();
  Eigen::Vector2d rmse_hard = Eigen::Vector2d::Zero();
  double loss = 0.0;  // mean expected loss under `mode` weights, in standardized units
  double mse = 0.0;   // squared error of the `mode` predictions, averaged over both tasks

  Eigen::Matrix<double, 8, 1> joint_pmf() const;
  // Hard: |error| per sample, averaged over the two tasks, grouped by selected slot.
  std::array<std::vector<double>, kNumSlots> hard_errors() const;
  // Soft: (joint weight, |error| of that slot) for every sample.
  std::array<std::vector<std::pair<double, double>>, kNumSlots> soft_errors() const;
};

// Per-column root mean squared error.
Eigen::VectorXd rmse(const Matrix& pred, const Matrix& target);

Evaluation evaluate(const Model& model, const TrainConfig& config, const synth::Dataset& data,
                    router::RoutingMode mode);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_mse = 0.0;
  double tau = 1.0;
  double entropy_coef = 0.0;
};

struct Metrics {
  double rmse_task1 = 0.0;  // under the config's routing mode
  double rmse_task2 = 0.0;
  Evaluation test;
  std::vector<EpochLog> loss_curve;
  std::vector<double> step_losses;
  int best_epoch = 0;
  int epochs_run = 0;
  std::uint64_t train_hash = 0;
  std::uint64_t test_hash = 0;
};

struct TrainResult {
  Model model;
  Metrics metrics;
};

// Throws TrainError (with the epoch) when the loss stops being finite.
TrainResult train(const TrainConfig& config, const synth::Dataset& train_set,
                  const synth::Dataset& test_set);

// Forces config.variant = baseline on `slot`.
TrainResult train_fixed_baseline(experts::Slot slot, TrainConfig config,
                                 const synth::Dataset& train_set, const synth::Dataset& test_set);

// metrics.json, checkpoint.json, loss_curve.csv, routing.csv, predictions.csv.
void write_run(const std::filesystem::path& dir, const TrainConfig& config, TrainResult& result);
nlohmann::json metrics_json(const TrainConfig& config, const Metrics& metrics);

}  // namespace mmroute::train
