#include "mmroute/train/trainer.hpp"

#include "mmroute/ad/checkpoint.hpp"
#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/rng.hpp"
#include "mmroute/train/adam.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <span>
#include <thread>

namespace mmroute::train {

using experts::kNumPaths;
using experts::Slot;
using router::RoutingMode;

Model Model::make(const TrainConfig& config, Index d_num, Index d_text) {
  config.validate();
  Model m;
  Rng rng(derive_seed(config.seed, "transforms"));
  m.transforms = experts::ModalityTransforms::sample(d_num, d_text, rng);
  m.bank = experts::ExpertBank::make(m.transforms, config.model, derive_seed(config.seed, "experts"));
  m.router = router::Router::make(m.transforms, config.router, derive_seed(config.seed, "router"));
  return m;
}

std::vector<ad::Tensor*> Model::trainable(const TrainConfig& config) {
  std::vector<ad::Tensor*> out;
  if (config.variant == Variant::baseline) return bank.at(config.slot).parameters();
  for (int s = 0; s < kNumSlots; ++s) {
    auto p = bank[s].parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (config.variant == Variant::routed) {
    auto p = router.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<ad::Section> Model::sections(const TrainConfig& config) {
  std::vector<ad::Section> out;
  for (int s = 0; s < kNumSlots; ++s) {
    const Slot slot = Slot::from_index(s);
    if (config.variant == Variant::baseline && !(slot == config.slot)) continue;
    out.push_back({"expert/" + experts::to_string(slot.path) + "/" +
                       experts::to_string(slot.paradigm),
                   bank[s].parameters()});
  }
  if (config.variant != Variant::baseline) {
    out.push_back({"router/modality", router.modality().parameters()});
    for (int i = 0; i < kNumPaths; ++i)
      out.push_back({"router/task/" + experts::to_string(experts::kPaths[static_cast<std::size_t>(i)]),
                     router.task(i).parameters()});
  }
  return out;
}

Inputs Inputs::make(const Model& model, const synth::Dataset& data) {
  const experts::ModalityTransforms& transforms = model.transforms;
  data.validate();
  if (data.d_num() != transforms.d_num() || data.d_text() != transforms.d_text())
    throw ShapeError("dataset dims (" + std::to_string(data.d_num()) + ", " +
                     std::to_string(data.d_text()) + ") do not match the model (" +
                     std::to_string(transforms.d_num()) + ", " +
                     std::to_string(transforms.d_text()) + ")");
  Inputs in;
  for (int p = 0; p < kNumPaths; ++p)
    in.paths[static_cast<std::size_t>(p)] =
        transforms.apply(experts::kPaths[static_cast<std::size_t>(p)], data.x_num, data.x_text);
  in.router_in = router::router_input(data.x_num, data.x_text);
  in.targets = (data.targets().rowwise() - model.target_shift).array().rowwise() /
               model.target_scale.array();
  return in;
}

Eigen::VectorXd rmse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("rmse: prediction " + ad::to_string(ad::shape_of(pred)) + " vs target " +
                     ad::to_string(ad::shape_of(target)));
  if (pred.rows() == 0) throw ContractError("rmse of an empty set");
  return ((pred - target).colwise().squaredNorm() / static_cast<double>(pred.rows()))
      .cwiseSqrt()
      .transpose();
}

Eigen::Matrix<double, 8, 1> Evaluation::joint_pmf() const {
  return joint.colwise().mean().transpose();
}

std::array<std::vector<double>, kNumSlots> Evaluation::hard_errors() const {
  std::array<std::vector<double>, kNumSlots> out;
  for (Index i = 0; i < targets.rows(); ++i) {
    const int s = selected[static_cast<std::size_t>(i)];
    const double err = 0.5 * (std::abs(hard_pred(i, 0) - targets(i, 0)) +
                              std::abs(hard_pred(i, 1) - targets(i, 1)));
    out[static_cast<std::size_t>(s)].push_back(err);
  }
  return out;
}

std::array<std::vector<std::pair<double, double>>, kNumSlots> Evaluation::soft_errors() const {
  std::array<std::vector<std::pair<double, double>>, kNumSlots> out;
  for (int s = 0; s < kNumSlots; ++s) {
    const Matrix& o = slot_outputs[static_cast<std::size_t>(s)];
    if (o.size() == 0) continue;
    for (Index i = 0; i < targets.rows(); ++i) {
      const double err =
          0.5 * (std::abs(o(i, 0) - targets(i, 0)) + std::abs(o(i, 2) - targets(i, 1)));
      out[static_cast<std::size_t>(s)].emplace_back(joint(i, s), err);
    }
  }
  return out;
}

namespace {

Matrix take(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

bool uses_slot(const TrainConfig& config, int s) {
  return config.variant != Variant::baseline || s == config.slot.index();
}

bool uses_path(const TrainConfig& config, int p) {
  return config.variant != Variant::baseline || p == static_cast<int>(config.slot.path);
}

struct Forward {
  router::RoutingVars routing;
  std::array<ad::Var, kNumSlots> outputs;
  ad::Var y;
};

Forward forward(ad::Tape& tape, const Model& model, const TrainConfig& config,
                const Inputs& inputs, std::span<const Index> rows) {
  Forward f;
  std::array<ad::Var, kNumPaths> xp;
  for (int p = 0; p < kNumPaths; ++p)
    if (uses_path(config, p))
      xp[static_cast<std::size_t>(p)] = tape.constant(take(inputs.paths[static_cast<std::size_t>(p)], rows));
  if (config.variant == Variant::routed)
    f.routing = router::route(tape, model.router, tape.constant(take(inputs.router_in, rows)), xp);
  else
    f.routing = router::fixed_route(tape, static_cast<Index>(rows.size()), config.slot.index());
  for (int s = 0; s < kNumSlots; ++s)
    if (uses_slot(config, s))
      f.outputs[static_cast<std::size_t>(s)] =
          model.bank[s].forward(tape, xp[static_cast<std::size_t>(s / 2)]);
  f.y = tape.constant(take(inputs.targets, rows));
  return f;
}

struct StepContext {
  double tau = 1.0;
  double lambda = 0.0;
  std::uint64_t noise_seed = 0;
  Index batch = 1;
};

// Loss contribution of `rows` to a batch of ctx.batch samples.
ad::Var chunk_loss(ad::Tape& tape, const Model& model, const TrainConfig& config,
                   const Inputs& inputs, std::span<const Index> rows, const StepContext& ctx) {
  const Forward f = forward(tape, model, config, inputs, rows);
  ad::Var weights = f.routing.joint;
  const bool routed = config.variant == Variant::routed;
  if (routed && config.router.mode == RoutingMode::hard)
    weights = router::gumbel_weights(f.routing.log_joint, router::gumbel_noise(rows, ctx.noise_seed),
                                     ctx.tau, config.router.straight_through);
  const double share = 1.0 / static_cast<double>(ctx.batch);
  ad::Var loss = ad::sum(router::expected_loss(weights, f.outputs, f.y)) * share;
  if (routed && ctx.lambda > 0.0)
    loss = loss + router::entropy_penalty(f.routing, ctx.lambda) *
                      (static_cast<double>(rows.size()) * share);
  return loss;
}

// One batch: forward/backward, split across threads when configured; chunk
// gradients are reduced in chunk order so results do not depend on timing.
std::pair<double, ad::GradientMap> batch_gradient(const Model& model, const TrainConfig& config,
                                                  const Inputs& inputs,
                                                  std::span<const Index> rows,
                                                  const StepContext& ctx) {
  const auto chunks = static_cast<std::size_t>(
      std::min<Index>(config.threads, static_cast<Index>(rows.size())));
  if (chunks <= 1) {
    ad::Tape tape;
    ad::Var loss = chunk_loss(tape, model, config, inputs, rows, ctx);
    return {loss.item(), ad::backward(tape, loss)};
  }
  std::vector<double> losses(chunks);
  std::vector<ad::GradientMap> grads(chunks);
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  const std::size_t per = (rows.size() + chunks - 1) / chunks;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * per;
    const std::size_t end = std::min(rows.size(), begin + per);
    pool.emplace_back([&, c, begin, end] {
      try {
        ad::Tape tape;
        ad::Var loss = chunk_loss(tape, model, config, inputs, rows.subspan(begin, end - begin), ctx);
        losses[c] = loss.item();
        grads[c] = ad::backward(tape, loss);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  double total = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    total += losses[c];
    if (c > 0) grads[0] += grads[c];
  }
  return {total, std::move(grads[0])};
}

Evaluation evaluate_inputs(const Model& model, const TrainConfig& config, const Inputs& inputs,
                           RoutingMode mode) {
  const Index n = inputs.size();
  if (n == 0) throw ContractError("evaluate on an empty dataset");
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});

  ad::Tape tape;
  const Forward f = forward(tape, model, config, inputs, rows);
  const Eigen::RowVector2d& shift = model.target_shift;
  const Eigen::RowVector2d& scale = model.target_scale;
  auto unscale = [&](const Matrix& m) -> Matrix {
    return (m.array().rowwise() * scale.array()).rowwise() + shift.array();
  };
  Evaluation ev;
  ev.joint = f.routing.joint.value();
  ev.pi_mod = f.routing.pi_mod.value();
  ev.targets = unscale(inputs.targets);
  ev.hard_pred = Matrix::Zero(n, 2);
  for (int s = 0; s < kNumSlots; ++s) {
    const ad::Var& o = f.outputs[static_cast<std::size_t>(s)];
    if (!o.valid()) continue;
    Matrix out = o.value();
    for (int t = 0; t < 2; ++t) {
      out.col(2 * t) = (out.col(2 * t).array() * scale(t) + shift(t)).matrix();
      out.col(2 * t + 1).array() += 2.0 * std::log(scale(t));
    }
    ev.slot_outputs[static_cast<std::size_t>(s)] = std::move(out);
  }
  Matrix weights = Matrix::Zero(n, kNumSlots);
  for (Index i = 0; i < n; ++i) {
    const int sel = router::argmax_slot(ev.joint.row(i).transpose());
    ev.selected.push_back(sel);
    weights(i, sel) = 1.0;
    const Matrix& out = ev.slot_outputs[static_cast<std::size_t>(sel)];
    ev.hard_pred(i, 0) = out(i, 0);
    ev.hard_pred(i, 1) = out(i, 2);
  }
  ev.soft_pred = unscale(router::soft_predict(f.routing.joint, f.outputs).value());
  ev.rmse_soft = rmse(ev.soft_pred, ev.targets);
  ev.rmse_hard = rmse(ev.hard_pred, ev.targets);
  ad::Var w = mode == RoutingMode::soft ? f.routing.joint : tape.constant(weights);
  ev.loss = ad::mean(router::expected_loss(w, f.outputs, f.y)).item();
  const Matrix& pred = mode == RoutingMode::soft ? ev.soft_pred : ev.hard_pred;
  ev.mse = (pred - ev.targets).squaredNorm() / static_cast<double>(2 * n);
  return ev;
}

Inputs subset(const Inputs& in, std::span<const Index> rows) {
  Inputs out;
  for (int p = 0; p < kNumPaths; ++p)
    out.paths[static_cast<std::size_t>(p)] = take(in.paths[static_cast<std::size_t>(p)], rows);
  out.router_in = take(in.router_in, rows);
  out.targets = take(in.targets, rows);
  return out;
}

}  // namespace

Evaluation evaluate(const Model& model, const TrainConfig& config, const synth::Dataset& data,
                    RoutingMode mode) {
  return evaluate_inputs(model, config, Inputs::make(model, data), mode);
}

TrainResult train(const TrainConfig& config, const synth::Dataset& train_set,
                  const synth::Dataset& test_set) {
  config.validate();
  if (train_set.d_num() != test_set.d_num() || train_set.d_text() != test_set.d_text())
    throw ShapeError("train and test sets have different modality dims");
  TrainResult result{Model::make(config, train_set.d_num(), train_set.d_text()), {}};
  Model& model = result.model;
  Metrics& metrics = result.metrics;
  metrics.train_hash = synth::dataset_hash(train_set);
  metrics.test_hash = synth::dataset_hash(test_set);

  if (config.standardize_targets) {
    const Matrix y = train_set.targets();
    model.target_shift = y.colwise().mean();
    for (int t = 0; t < 2; ++t) {
      const double sd = std::sqrt((y.col(t).array() - model.target_shift(t)).square().mean());
      model.target_scale(t) = sd > 0.0 ? sd : 1.0;
    }
  }
  const Inputs all = Inputs::make(model, train_set);
  const Index n = all.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Index n_val = 0;
  if (config.val_fraction > 0.0 && n >= 2) {
    Rng rng(derive_seed(config.seed, "validation"));
    std::shuffle(order.begin(), order.end(), rng);
    n_val = std::clamp<Index>(static_cast<Index>(std::llround(config.val_fraction * static_cast<double>(n))),
                              1, n - 1);
  }
  std::vector<Index> val_rows(order.begin(), order.begin() + n_val);
  std::vector<Index> train_rows(order.begin() + n_val, order.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  const Inputs val = n_val > 0 ? subset(all, val_rows) : Inputs{};

  std::vector<ad::Tensor*> params = model.trainable(config);
  Adam adam(params, config.adam);
  const RoutingMode mode =
      config.variant == Variant::routed ? config.router.mode : RoutingMode::soft;

  double best = std::numeric_limits<double>::infinity();
  std::vector<Matrix> snapshot;
  auto save = [&] {
    snapshot.clear();
    for (const ad::Tensor* p : params) snapshot.push_back(p->values());
  };
  save();

  const std::uint64_t noise_root = derive_seed(config.seed, "gumbel");
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    StepContext ctx;
    ctx.tau = router::tau_at(config.router.tau_start, config.router.tau_end, epoch, config.epochs);
    ctx.lambda = router::entropy_coef_at(config.router.entropy_coef, epoch, config.epochs);

    std::vector<Index> shuffled = train_rows;
    Rng rng(derive_seed(config.seed, hash_tag("batches"), static_cast<std::uint64_t>(epoch)));
    std::shuffle(shuffled.begin(), shuffled.end(), rng);

    double epoch_loss = 0.0;
    Index batches = 0;
    try {
      for (std::size_t begin = 0; begin < shuffled.size();
           begin += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end =
            std::min(shuffled.size(), begin + static_cast<std::size_t>(config.batch_size));
        const std::span<const Index> rows(shuffled.data() + begin, end - begin);
        ctx.batch = static_cast<Index>(rows.size());
        ctx.noise_seed = derive_seed(noise_root, static_cast<std::uint64_t>(step));
        auto [loss, grads] = batch_gradient(model, config, all, rows, ctx);
        if (!std::isfinite(loss))
          throw TrainError("training loss became non-finite", epoch);
        clip_global_norm(grads, config.clip_norm);
        adam.step(grads);
        metrics.step_losses.push_back(loss);
        epoch_loss += loss;
        ++batches;
        ++step;
      }
    } catch (const NumericError& e) {
      throw TrainError(std::string("numeric failure: ") + e.what(), epoch);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
    log.tau = ctx.tau;
    log.entropy_coef = ctx.lambda;
    if (n_val > 0) {
      const Evaluation ev = evaluate_inputs(model, config, val, mode);
      log.val_loss = ev.loss;
      log.val_mse = ev.mse;
    } else {
      log.val_loss = log.train_loss;
    }
    if (!std::isfinite(log.val_loss)) throw TrainError("validation loss became non-finite", epoch);
    metrics.loss_curve.push_back(log);
    metrics.epochs_run = epoch + 1;

    const double watched =
        config.stop_metric == StopMetric::mse && n_val > 0 ? log.val_mse : log.val_loss;
    if (watched < best) {
      best = watched;
      metrics.best_epoch = epoch;
      save();
    } else if (config.patience > 0 && epoch - metrics.best_epoch >= config.patience) {
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->values() = snapshot[k];

  metrics.test = evaluate_inputs(model, config, Inputs::make(model, test_set), mode);
  const Eigen::Vector2d& r =
      mode == RoutingMode::soft ? metrics.test.rmse_soft : metrics.test.rmse_hard;
  metrics.rmse_task1 = r(0);
  metrics.rmse_task2 = r(1);
  return result;
}

TrainResult train_fixed_baseline(Slot slot, TrainConfig config, const synth::Dataset& train_set,
                                 const synth::Dataset& test_set) {
  config.variant = Variant::baseline;
  config.slot = slot;
  return train(config, train_set, test_set);
}

namespace {

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace

nlohmann::json metrics_json(const TrainConfig& config, const Metrics& m) {
  using nlohmann::json;
  const Eigen::Matrix<double, 8, 1> pmf = m.test.joint_pmf();
  json joint = json::array();
  json paths = json::object();
  double stl = 0.0;
  double mtl = 0.0;
  for (int s = 0; s < kNumSlots; ++s) {
    const Slot slot = Slot::from_index(s);
    joint.push_back({{"slot", slot.name()},
                     {"path", experts::to_string(slot.path)},
                     {"paradigm", experts::to_string(slot.paradigm)},
                     {"probability", pmf(s)}});
    (slot.paradigm == experts::Paradigm::stl ? stl : mtl) += pmf(s);
  }
  for (int p = 0; p < kNumPaths; ++p)
    paths[experts::to_string(experts::kPaths[static_cast<std::size_t>(p)])] = pmf(2 * p) + pmf(2 * p + 1);

  json j = {
      {"format", "mmroute-metrics"},
      {"version", 1},
      {"name", config.display_name()},
      {"block", config.block()},
      {"variant", to_string(config.variant)},
      {"mode", router::to_string(config.variant == Variant::routed ? config.router.mode
                                                                   : RoutingMode::soft)},
      {"dataset",
       {{"train_hash", hex64(m.train_hash)},
        {"test_hash", hex64(m.test_hash)},
        {"n_test", m.test.targets.rows()}}},
      {"rmse_task1", m.rmse_task1},
      {"rmse_task2", m.rmse_task2},
      {"rmse_soft", {m.test.rmse_soft(0), m.test.rmse_soft(1)}},
      {"rmse_hard", {m.test.rmse_hard(0), m.test.rmse_hard(1)}},
      {"test_loss", m.test.loss},
      {"joint_pmf", joint},
      {"path_marginals", paths},
      {"paradigm_mass", {{"STL", stl}, {"MTL", mtl}}},
      {"best_epoch", m.best_epoch},
      {"epochs_run", m.epochs_run},
      {"final_train_loss", m.loss_curve.empty() ? 0.0 : m.loss_curve.back().train_loss},
      {"config", config_to_json(config)},
  };
  if (config.variant != Variant::routed) j["slot"] = config.slot.name();
  return j;
}

void write_run(const std::filesystem::path& dir, const TrainConfig& config, TrainResult& result) {
  const Metrics& m = result.metrics;
  const Evaluation& ev = m.test;
  io::write_text(dir / "metrics.json", metrics_json(config, m).dump(2) + "\n");

  std::vector<ad::ConstSection> sections;
  ad::Tensor n2t(result.model.transforms.num_to_text, "num_to_text");
  ad::Tensor t2n(result.model.transforms.text_to_num, "text_to_num");
  ad::Tensor shift(result.model.target_shift, "shift");
  ad::Tensor scale(result.model.target_scale, "scale");
  sections.push_back({"transforms", {&n2t, &t2n}});
  sections.push_back({"targets", {&shift, &scale}});
  for (const auto& s : result.model.sections(config))
    sections.push_back({s.key, std::vector<const ad::Tensor*>(s.tensors.begin(), s.tensors.end())});
  ad::save_checkpoint(dir / "checkpoint.json", sections);

  io::CsvTable curve{{"epoch", "train_loss", "val_loss", "val_mse", "tau", "entropy_coef"}, {}};
  for (const auto& e : m.loss_curve)
    curve.rows.push_back({std::to_string(e.epoch), io::format_double(e.train_loss),
                          io::format_double(e.val_loss), io::format_double(e.val_mse),
                          io::format_double(e.tau),
                          io::format_double(e.entropy_coef)});
  io::write_csv(dir / "loss_curve.csv", curve);

  io::CsvTable routing{{"sample"}, {}};
  for (int s = 0; s < kNumSlots; ++s) {
    const Slot slot = Slot::from_index(s);
    routing.header.push_back("joint_" + experts::to_string(slot.path) + "_" +
                             experts::to_string(slot.paradigm));
  }
  for (auto p : experts::kPaths) routing.header.push_back("pi_" + experts::to_string(p));
  routing.header.push_back("selected");
  for (Index i = 0; i < ev.joint.rows(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int s = 0; s < kNumSlots; ++s) row.push_back(io::format_double(ev.joint(i, s)));
    for (int p = 0; p < kNumPaths; ++p) row.push_back(io::format_double(ev.pi_mod(i, p)));
    row.push_back(std::to_string(ev.selected[static_cast<std::size_t>(i)]));
    routing.rows.push_back(std::move(row));
  }
  io::write_csv(dir / "routing.csv", routing);

  io::CsvTable preds{{"sample", "y1", "y2", "soft1", "soft2", "hard1", "hard2"}, {}};
  std::vector<int> present;
  for (int s = 0; s < kNumSlots; ++s) {
    if (ev.slot_outputs[static_cast<std::size_t>(s)].size() == 0) continue;
    present.push_back(s);
    const Slot slot = Slot::from_index(s);
    const std::string key = experts::to_string(slot.path) + "_" + experts::to_string(slot.paradigm);
    preds.header.push_back(key + "_mean1");
    preds.header.push_back(key + "_mean2");
  }
  for (Index i = 0; i < ev.targets.rows(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (double v : {ev.targets(i, 0), ev.targets(i, 1), ev.soft_pred(i, 0), ev.soft_pred(i, 1),
                     ev.hard_pred(i, 0), ev.hard_pred(i, 1)})
      row.push_back(io::format_double(v));
    for (int s : present) {
      const Matrix& o = ev.slot_outputs[static_cast<std::size_t>(s)];
      row.push_back(io::format_double(o(i, 0)));
      row.push_back(io::format_double(o(i, 2)));
    }
    preds.rows.push_back(std::move(row));
  }
  io::write_csv(dir / "predictions.csv", preds);
}

}  // namespace mmroute::train
