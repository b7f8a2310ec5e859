#pragma once

#include "mmroute/experts/experts.hpp"
#include "mmroute/router/router.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace mmroute::train {

using ad::Index;

// routed: router + all eight experts.
// baseline: one slot's expert alone, router bypassed.
// frozen: the full routed model with the joint pinned to one slot.
enum class Variant { routed, baseline, frozen };
Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

// Validation quantity watched by early stopping.
enum class StopMetric { loss, mse };
StopMetric parse_stop_metric(const std::string& s);
std::string to_string(StopMetric m);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p ← p − lr·wd·p each step
};

struct TrainConfig {
  int epochs = 200;
  Index batch_size = 64;
  AdamConfig adam;
  double clip_norm = 5.0;  // 0 disables
  int patience = 20;       // 0 disables early stopping
  double val_fraction = 0.1;
  StopMetric stop_metric = StopMetric::mse;
  bool standardize_targets = true;  // z-score targets with training-set statistics
  std::uint64_t seed = 0;
  int threads = 1;  // > 1 splits each batch across threads

  experts::ModelConfig model;
  router::RouterConfig router;

  Variant variant = Variant::routed;
  experts::Slot slot;  // baseline / frozen only
  std::string name;    // empty: derived from the variant

  void validate() const;  // throws ConfigError

  // Table row label and block ("T1".."N2", "STL", "MTL", "HetMTL", "Routing").
  std::string display_name() const;
  std::string block() const;
};

// Keys: {"model": {...}, "router": {...}, "train": {...}}; unknown keys are
// rejected so typos do not silently fall back to defaults.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

}  // namespace mmroute::train
