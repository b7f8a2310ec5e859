#include "mmroute/train/config.hpp"

#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"

#include <set>

namespace mmroute::train {

using nlohmann::json;

Variant parse_variant(const std::string& s) {
  if (s == "routed") return Variant::routed;
  if (s == "baseline") return Variant::baseline;
  if (s == "frozen") return Variant::frozen;
  throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::routed: return "routed";
    case Variant::baseline: return "baseline";
    case Variant::frozen: return "frozen";
  }
  return "routed";
}

StopMetric parse_stop_metric(const std::string& s) {
  if (s == "loss") return StopMetric::loss;
  if (s == "mse") return StopMetric::mse;
  throw ConfigError("unknown stop metric '" + s + "'");
}

std::string to_string(StopMetric m) { return m == StopMetric::loss ? "loss" : "mse"; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train.beta1/beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
  if (patience < 0) throw ConfigError("train.patience must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("train.val_fraction must lie in [0, 1)");
  if (threads < 1) throw ConfigError("train.threads must be >= 1");
  model.validate();
  router.validate();
}

std::string TrainConfig::display_name() const {
  if (!name.empty()) return name;
  const std::string path = experts::to_string(slot.path);
  switch (variant) {
    case Variant::routed: return "Routing (" + router::to_string(router.mode) + ")";
    case Variant::frozen: return "Frozen " + slot.name();
    case Variant::baseline:
      if (slot.paradigm == experts::Paradigm::stl && model.heteroscedastic) return path;
      return block() + " (" + path + ")";
  }
  return path;
}

std::string TrainConfig::block() const {
  switch (variant) {
    case Variant::routed: return "Routing";
    case Variant::frozen: return "Frozen";
    case Variant::baseline:
      if (slot.paradigm == experts::Paradigm::stl)
        return model.heteroscedastic ? experts::to_string(slot.path) : "STL";
      return model.heteroscedastic ? "HetMTL" : "MTL";
  }
  return "Routing";
}

namespace {

void check_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

TrainConfig config_from_json(const json& j, TrainConfig c) {
  check_keys(j, "config", {"model", "router", "train"});
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model",
               {"hidden_dims", "head_dims", "activation", "logvar_clamp", "heteroscedastic"});
    read(m, "hidden_dims", c.model.hidden_dims, "model");
    read(m, "head_dims", c.model.head_dims, "model");
    read(m, "logvar_clamp", c.model.logvar_clamp, "model");
    read(m, "heteroscedastic", c.model.heteroscedastic, "model");
    if (m.contains("activation")) c.model.activation = ad::parse_activation(m["activation"].get<std::string>());
  }
  if (j.contains("router")) {
    const json& r = j["router"];
    check_keys(r, "router",
               {"hidden_dims", "mode", "tau_start", "tau_end", "entropy_coef", "straight_through"});
    read(r, "hidden_dims", c.router.hidden_dims, "router");
    read(r, "tau_start", c.router.tau_start, "router");
    read(r, "tau_end", c.router.tau_end, "router");
    read(r, "entropy_coef", c.router.entropy_coef, "router");
    read(r, "straight_through", c.router.straight_through, "router");
    if (r.contains("mode")) c.router.mode = router::parse_mode(r["mode"].get<std::string>());
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "weight_decay", "clip_norm", "patience",
                "val_fraction", "stop_metric", "standardize_targets", "seed", "threads", "variant", "path", "paradigm", "name"});
    read(t, "epochs", c.epochs, "train");
    read(t, "batch_size", c.batch_size, "train");
    read(t, "lr", c.adam.lr, "train");
    read(t, "beta1", c.adam.beta1, "train");
    read(t, "beta2", c.adam.beta2, "train");
    read(t, "eps", c.adam.eps, "train");
    read(t, "weight_decay", c.adam.weight_decay, "train");
    read(t, "clip_norm", c.clip_norm, "train");
    read(t, "patience", c.patience, "train");
    read(t, "val_fraction", c.val_fraction, "train");
    read(t, "seed", c.seed, "train");
    read(t, "standardize_targets", c.standardize_targets, "train");
    if (t.contains("stop_metric"))
      c.stop_metric = parse_stop_metric(t["stop_metric"].get<std::string>());
    read(t, "threads", c.threads, "train");
    read(t, "name", c.name, "train");
    if (t.contains("variant")) c.variant = parse_variant(t["variant"].get<std::string>());
    if (t.contains("path")) c.slot.path = experts::parse_path(t["path"].get<std::string>());
    if (t.contains("paradigm"))
      c.slot.paradigm = experts::parse_paradigm(t["paradigm"].get<std::string>());
  }
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  return {
      {"model",
       {{"hidden_dims", c.model.hidden_dims},
        {"head_dims", c.model.head_dims},
        {"activation", ad::to_string(c.model.activation)},
        {"logvar_clamp", c.model.logvar_clamp},
        {"heteroscedastic", c.model.heteroscedastic}}},
      {"router",
       {{"hidden_dims", c.router.hidden_dims},
        {"mode", router::to_string(c.router.mode)},
        {"tau_start", c.router.tau_start},
        {"tau_end", c.router.tau_end},
        {"entropy_coef", c.router.entropy_coef},
        {"straight_through", c.router.straight_through}}},
      {"train",
       {{"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"lr", c.adam.lr},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"eps", c.adam.eps},
        {"weight_decay", c.adam.weight_decay},
        {"clip_norm", c.clip_norm},
        {"patience", c.patience},
        {"val_fraction", c.val_fraction},
        {"stop_metric", to_string(c.stop_metric)},
        {"standardize_targets", c.standardize_targets},
        {"seed", c.seed},
        {"threads", c.threads},
        {"variant", to_string(c.variant)},
        {"path", experts::to_string(c.slot.path)},
        {"paradigm", experts::to_string(c.slot.paradigm)},
        {"name", c.name}}},
  };
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

}  // namespace mmroute::train
