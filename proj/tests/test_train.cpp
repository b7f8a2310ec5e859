#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/train/adam.hpp"
#include "mmroute/train/trainer.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mmroute;
using namespace mmroute::train;
using experts::ModalityPath;
using experts::Paradigm;
using experts::Slot;

namespace {

TrainConfig small_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.model.hidden_dims = {16};
  c.model.head_dims = {8};
  c.router.hidden_dims = {8};
  c.patience = 0;
  return c;
}

synth::Dataset constant_targets(Index n, double c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  synth::Dataset d{Eigen::MatrixXd(n, 4), Eigen::MatrixXd(n, 3), Eigen::VectorXd::Constant(n, c),
                   Eigen::VectorXd::Constant(n, -c), synth::Split::train};
  for (Index i = 0; i < d.x_num.size(); ++i) d.x_num.data()[i] = g(rng);
  for (Index i = 0; i < d.x_text.size(); ++i) d.x_text.data()[i] = g(rng);
  return d;
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t count) {
  return std::accumulate(v.begin() + static_cast<long>(from), v.begin() + static_cast<long>(from + count), 0.0) /
         static_cast<double>(count);
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  c.model.hidden_dims = {0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto b = synth::make_benchmark(synth::Scenario::s1, 20, 10, 0);
  TrainConfig bad = small_config(1);
  bad.model.hidden_dims = {0};
  CHECK_THROWS_AS(train::train(bad, b.train, b.test), ConfigError);
}

TEST_CASE("config json round trip and strict keys") {
  TrainConfig c = small_config(17);
  c.router.mode = router::RoutingMode::hard;
  c.variant = Variant::baseline;
  c.slot = {ModalityPath::n2, Paradigm::mtl};
  c.adam.weight_decay = 0.25;
  const TrainConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.slot == c.slot);
  CHECK(back.router.mode == router::RoutingMode::hard);

  const auto j = nlohmann::json::parse(R"({"train": {"epochs": 3, "lr": 0.01}, "model": {"hidden_dims": [8]}})");
  const TrainConfig p = config_from_json(j);
  CHECK(p.epochs == 3);
  CHECK(p.adam.lr == 0.01);
  CHECK(p.model.hidden_dims == std::vector<Index>{8});
  CHECK(p.batch_size == 64);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"train": {"epoch": 3}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"optim": {}})")), ConfigError);
}

TEST_CASE("display names and blocks") {
  TrainConfig c;
  CHECK(c.display_name() == "Routing (soft)");
  CHECK(c.block() == "Routing");
  c.variant = Variant::baseline;
  c.slot = {ModalityPath::t2, Paradigm::stl};
  CHECK(c.display_name() == "T2");
  CHECK(c.block() == "T2");
  c.slot.paradigm = Paradigm::mtl;
  CHECK(c.block() == "HetMTL");
  c.model.heteroscedastic = false;
  CHECK(c.block() == "MTL");
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  ad::Tensor w(Matrix::Constant(1, 3, 1.0), "w");
  Adam adam({&w}, AdamConfig{});
  ad::Tape tape;
  ad::Var v = tape.parameter(w);
  const ad::GradientMap g = ad::backward(tape, ad::sum(v * tape.constant(Matrix{{2.0, -0.5, 1e-3}})));
  adam.step(g);
  CHECK(std::abs(w.values()(0, 0) - (1.0 - 1e-3 * 2.0 / (2.0 + 1e-8))) < 1e-15);
  CHECK(std::abs(w.values()(0, 1) - (1.0 + 1e-3 * 0.5 / (0.5 + 1e-8))) < 1e-15);
  CHECK(std::abs(w.values()(0, 2) - (1.0 - 1e-3 * 1e-3 / (1e-3 + 1e-8))) < 1e-15);
}

TEST_CASE("global norm clipping") {
  ad::Tensor a(Matrix::Zero(1, 2), "a");
  ad::Tensor b(Matrix::Zero(1, 1), "b");
  ad::GradientMap g;
  g.slot(a) = Matrix{{3.0, 0.0}};
  g.slot(b) = Matrix{{4.0}};
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(std::abs(std::sqrt(g.squared_norm()) - 1.0) < 1e-15);
  CHECK(std::abs(g.at(a)(0, 0) - 0.6) < 1e-15);
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(1.0));
}

TEST_CASE("rmse of perfect and shifted predictors") {
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix y(50, 2);
  for (Index i = 0; i < y.size(); ++i) y.data()[i] = n(rng);
  CHECK(rmse(y, y).isZero(0.0));
  const Eigen::VectorXd r = rmse(y.array() + 1.0, y);
  CHECK(std::abs(r(0) - 1.0) < 1e-12);
  CHECK(std::abs(r(1) - 1.0) < 1e-12);
}

TEST_CASE("constant targets are learned") {
  const synth::Dataset tr = constant_targets(1000, 2.0, 1);
  const synth::Dataset te = constant_targets(100, 2.0, 2);
  for (bool standardize : {true, false}) {
    TrainConfig c = small_config(50);
    c.standardize_targets = standardize;
    const TrainResult r = train::train(c, tr, te);
    CHECK(r.metrics.rmse_task1 < 0.05);
    CHECK(r.metrics.rmse_task2 < 0.05);
  }
}

TEST_CASE("logged RMSE matches recomputation from dumped predictions") {
  testing::TempDir dir("rmse");
  const auto b = synth::make_benchmark(synth::Scenario::s1, 200, 150, 3);
  TrainConfig c = small_config(5);
  TrainResult r = train::train(c, b.train, b.test);
  write_run(dir.path(), c, r);
  for (const char* f : {"metrics.json", "checkpoint.json", "loss_curve.csv", "routing.csv", "predictions.csv"})
    CHECK(std::filesystem::exists(dir / f));

  const io::CsvTable p = io::read_csv(dir / "predictions.csv");
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& row : p.rows) {
    const double e1 = io::parse_double(row[p.column("soft1")]) - io::parse_double(row[p.column("y1")]);
    const double e2 = io::parse_double(row[p.column("soft2")]) - io::parse_double(row[p.column("y2")]);
    s1 += e1 * e1;
    s2 += e2 * e2;
  }
  const double n = static_cast<double>(p.rows.size());
  const auto m = nlohmann::json::parse(io::read_text(dir / "metrics.json"));
  CHECK(std::abs(std::sqrt(s1 / n) - m.at("rmse_task1").get<double>()) < 1e-10);
  CHECK(std::abs(std::sqrt(s2 / n) - m.at("rmse_task2").get<double>()) < 1e-10);
  CHECK(p.rows.size() == 150);
}

TEST_CASE("soft and hard evaluations are consistent") {
  const auto b = synth::make_benchmark(synth::Scenario::s2, 200, 100, 4);
  TrainConfig c = small_config(3);
  const TrainResult r = train::train(c, b.train, b.test);
  const Evaluation ev = evaluate(r.model, c, b.test, router::RoutingMode::hard);
  for (Index i = 0; i < ev.joint.rows(); ++i) {
    CHECK(std::abs(ev.joint.row(i).sum() - 1.0) < 1e-9);
    const int s = ev.selected[static_cast<std::size_t>(i)];
    CHECK(ev.joint(i, s) == ev.joint.row(i).maxCoeff());
    CHECK(ev.hard_pred(i, 0) == ev.slot_outputs[static_cast<std::size_t>(s)](i, 0));
    double soft = 0.0;
    for (int k = 0; k < kNumSlots; ++k) soft += ev.joint(i, k) * ev.slot_outputs[static_cast<std::size_t>(k)](i, 2);
    CHECK(std::abs(soft - ev.soft_pred(i, 1)) < 1e-9);
  }
  std::size_t grouped = 0;
  for (const auto& g : ev.hard_errors()) grouped += g.size();
  CHECK(grouped == ev.selected.size());
  double weight = 0.0;
  for (const auto& g : ev.soft_errors())
    for (const auto& [w, e] : g) weight += w;
  CHECK(std::abs(weight - static_cast<double>(ev.selected.size())) < 1e-8);
}

TEST_CASE("homoscedastic loss is half the squared error") {
  const auto b = synth::make_benchmark(synth::Scenario::s1, 200, 100, 5);
  TrainConfig c = small_config(3);
  c.variant = Variant::baseline;
  c.slot = {ModalityPath::n1, Paradigm::mtl};
  c.model.heteroscedastic = false;
  c.standardize_targets = false;
  const TrainResult r = train::train(c, b.train, b.test);
  const Evaluation& ev = r.metrics.test;
  const Matrix& out = ev.slot_outputs[static_cast<std::size_t>(c.slot.index())];
  CHECK(out.col(1).isZero(0.0));
  CHECK(out.col(3).isZero(0.0));
  double half_sq = 0.0;
  for (Index i = 0; i < ev.targets.rows(); ++i)
    half_sq += 0.5 * (std::pow(ev.targets(i, 0) - out(i, 0), 2) + std::pow(ev.targets(i, 1) - out(i, 2), 2));
  CHECK(std::abs(ev.loss - half_sq / static_cast<double>(ev.targets.rows())) < 1e-9);
}

TEST_CASE("training is bit-for-bit deterministic") {
  const auto b = synth::make_benchmark(synth::Scenario::s3, 200, 100, 6);
  TrainConfig c = small_config(4);
  c.router.mode = router::RoutingMode::hard;
  const TrainResult a = train::train(c, b.train, b.test);
  const TrainResult d = train::train(c, b.train, b.test);
  CHECK(metrics_json(c, a.metrics).dump() == metrics_json(c, d.metrics).dump());
  CHECK(a.metrics.step_losses == d.metrics.step_losses);
}

TEST_CASE("frozen one-hot routing reproduces the fixed baseline") {
  const auto b = synth::make_benchmark(synth::Scenario::s1, 200, 100, 7);
  for (int s : {0, 3, 6}) {
    TrainConfig base = small_config(6);
    base.patience = 2;
    base.variant = Variant::baseline;
    base.slot = Slot::from_index(s);
    TrainConfig frozen = base;
    frozen.variant = Variant::frozen;
    const TrainResult rb = train::train(base, b.train, b.test);
    const TrainResult rf = train::train(frozen, b.train, b.test);
    const auto lb = testing::numeric_leaves(metrics_json(base, rb.metrics));
    const auto lf = testing::numeric_leaves(metrics_json(frozen, rf.metrics));
    CHECK(lb.size() == lf.size());
    for (const auto& [k, v] : lb) {
      REQUIRE(lf.count(k) == 1);
      CHECK(std::abs(v - lf.at(k)) <= 1e-9);
    }
    REQUIRE(rb.metrics.loss_curve.size() == rf.metrics.loss_curve.size());
    for (std::size_t e = 0; e < rb.metrics.loss_curve.size(); ++e) {
      CHECK(std::abs(rb.metrics.loss_curve[e].train_loss - rf.metrics.loss_curve[e].train_loss) <= 1e-9);
      CHECK(std::abs(rb.metrics.loss_curve[e].val_mse - rf.metrics.loss_curve[e].val_mse) <= 1e-9);
    }
    CHECK((rb.metrics.test.soft_pred - rf.metrics.test.soft_pred).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("numeric-only path wins task 1 on the text-independent scenario") {
  const auto b = synth::make_benchmark(synth::Scenario::s2, 1000, 1000, 8);
  TrainConfig c = small_config(40);
  c.model = experts::ModelConfig{};
  const TrainResult n1 = train_fixed_baseline({ModalityPath::n1, Paradigm::stl}, c, b.train, b.test);
  const TrainResult t1 = train_fixed_baseline({ModalityPath::t1, Paradigm::stl}, c, b.train, b.test);
  CHECK(n1.metrics.rmse_task1 < t1.metrics.rmse_task1);
}

TEST_CASE("trailing loss falls on a learnable scenario") {
  const auto b = synth::make_benchmark(synth::Scenario::s1, 1000, 100, 9);
  TrainConfig c = small_config(20);
  const TrainResult r = train::train(c, b.train, b.test);
  const auto& steps = r.metrics.step_losses;
  REQUIRE(steps.size() >= 200);
  CHECK(mean_of(steps, steps.size() - 100, 100) < mean_of(steps, 0, 100));
  CHECK(r.metrics.epochs_run == 20);
  CHECK(r.metrics.loss_curve.size() == 20);
}

TEST_CASE("divergence surfaces as a training error with its epoch") {
  synth::Dataset tr = constant_targets(64, 1e200, 10);
  tr.y1(3) = -1e200;
  TrainConfig c = small_config(3);
  c.standardize_targets = false;
  try {
    train::train(c, tr, tr);
    FAIL("expected TrainError");
  } catch (const TrainError& e) {
    CHECK(e.epoch() == 0);
  }
}

TEST_CASE("early stopping restores the best epoch") {
  const auto b = synth::make_benchmark(synth::Scenario::s1, 300, 100, 11);
  TrainConfig c = small_config(200);
  c.patience = 3;
  c.adam.lr = 0.05;
  const TrainResult r = train::train(c, b.train, b.test);
  CHECK(r.metrics.epochs_run < 200);
  CHECK(r.metrics.epochs_run - 1 - r.metrics.best_epoch == 3);
  const Evaluation val_check = evaluate(r.model, c, b.test, router::RoutingMode::soft);
  CHECK(val_check.rmse_soft(0) == r.metrics.rmse_task1);
}
