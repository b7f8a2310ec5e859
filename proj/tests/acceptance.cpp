// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include "mmroute/ad/grad_check.hpp"
#include "mmroute/diagnostics/suite.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/router/router.hpp"
#include "mmroute/tabular/fidelity.hpp"
#include "mmroute/tabular/synthesize.hpp"
#include "mmroute/train/trainer.hpp"

#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using namespace mmroute;
using experts::Slot;
using router::Router;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

template <typename Fn>
void criterion(const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.passed) ++failures;
  std::printf("%s %s: %s [%.1fs]\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

ad::Matrix gaussian(ad::Index r, ad::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Matrix m(r, c);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  Rng rng(2024);
  const auto transforms = experts::ModalityTransforms::sample(16, 16, rng);
  router::RouterConfig rc;
  rc.hidden_dims = {6};
  Router rt = Router::make(transforms, rc, 1, ad::FinalInit::xavier);
  const experts::ModelConfig mc{{6, 5}, {4}};
  experts::ExpertBank bank = experts::ExpertBank::make(transforms, mc, 2, ad::FinalInit::xavier);
  const ad::Index n = 5;
  const ad::Matrix xn = gaussian(n, 16, rng);
  const ad::Matrix xt = gaussian(n, 16, rng);
  const ad::Matrix y = gaussian(n, 2, rng);
  std::vector<ad::Index> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), ad::Index{0});
  const ad::Matrix noise = router::gumbel_noise(ids, 3);

  std::vector<ad::Tensor*> params = rt.parameters();
  for (int s = 0; s < experts::kNumSlots; ++s)
    for (ad::Tensor* p : bank[s].parameters()) params.push_back(p);

  auto composite = [&](bool gumbel) {
    return [&, gumbel](ad::Tape& t) {
      std::array<ad::Var, experts::kNumPaths> paths;
      for (int i = 0; i < experts::kNumPaths; ++i)
        paths[static_cast<std::size_t>(i)] =
            t.constant(transforms.apply(static_cast<experts::ModalityPath>(i), xn, xt));
      const auto v = router::route(t, rt, t.constant(router::router_input(xn, xt)), paths);
      std::array<ad::Var, experts::kNumSlots> outs;
      for (int s = 0; s < experts::kNumSlots; ++s)
        outs[static_cast<std::size_t>(s)] = bank[s].forward(t, paths[static_cast<std::size_t>(s / 2)]);
      ad::Var w = gumbel ? router::gumbel_weights(v.log_joint, noise, 0.5, false) : v.joint;
      ad::Var pred = router::soft_predict(w, outs);
      return ad::mean(router::expected_loss(w, outs, t.constant(y))) +
             router::entropy_penalty(v, 0.01) + 0.01 * ad::mean(pred * pred);
    };
  };
  ad::GradCheckOptions opt;
  opt.step = 1e-5;
  opt.tolerance = 1e-4;
  const auto soft = ad::grad_check(composite(false), params, opt);
  const auto hard = ad::grad_check(composite(true), params, opt);
  const double worst = std::max(soft.max_relative_error, hard.max_relative_error);
  return {worst < 1e-4 && soft.passed() && hard.passed(),
          "max relative error " + fmt(worst, 3) + " over " +
              std::to_string(soft.coordinates + hard.coordinates) + " coordinates (< 1e-4)"};
}

Outcome simplex_suite() {
  Rng rng(7);
  const auto transforms = experts::ModalityTransforms::sample(16, 16, rng);
  double sum_err = 0.0;
  double outer_err = 0.0;
  int evaluations = 0;
  for (int r = 0; r < 100; ++r) {
    Router rt = Router::make(transforms, router::RouterConfig{}, static_cast<std::uint64_t>(r),
                             ad::FinalInit::xavier);
    for (auto* p : rt.parameters()) p->values() *= 3.0;
    const ad::Matrix xn = 2.0 * gaussian(100, 16, rng);
    const ad::Matrix xt = 2.0 * gaussian(100, 16, rng);
    for (ad::Index i = 0; i < 100; ++i, ++evaluations) {
      const auto s = router::route(rt, transforms, xn.row(i).transpose(), xt.row(i).transpose());
      sum_err = std::max(sum_err, std::abs(s.pi_mod.sum() - 1.0));
      sum_err = std::max(sum_err, std::abs(s.joint.sum() - 1.0));
      for (int p = 0; p < 4; ++p) {
        sum_err = std::max(sum_err, std::abs(s.pi_task.row(p).sum() - 1.0));
        for (int j = 0; j < 2; ++j)
          outer_err = std::max(outer_err, std::abs(s.joint(2 * p + j) - s.pi_mod(p) * s.pi_task(p, j)));
      }
    }
  }
  return {sum_err <= 1e-9 && outer_err <= 1e-12,
          std::to_string(evaluations) + " evaluations, max |sum - 1| " + fmt(sum_err, 3) +
              ", max outer-product gap " + fmt(outer_err, 3)};
}

Outcome loss_identities() {
  const double exact = experts::heteroscedastic_loss(0.7, 0.7, 0.0);

  Rng rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  router::SlotOutputs outs;
  for (auto& o : outs) o = {g(rng), 0.5 * g(rng), g(rng), 0.5 * g(rng)};
  double onehot_gap = 0.0;
  for (int s = 0; s < experts::kNumSlots; ++s) {
    router::RoutingState st;
    st.joint.setZero();
    st.joint(s) = 1.0;
    const double y1 = g(rng);
    const double y2 = g(rng);
    onehot_gap = std::max(onehot_gap, std::abs(router::expected_loss(st, outs, y1, y2) -
                                               experts::paradigm_loss(outs[static_cast<std::size_t>(s)], y1, y2)));
  }

  double grid_gap = 0.0;
  for (double r : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    double best = -6.0;
    double best_loss = experts::heteroscedastic_loss(r, 0.0, best);
    for (int k = 1; k <= 12000; ++k) {
      const double lv = -6.0 + 1e-3 * k;
      const double v = experts::heteroscedastic_loss(r, 0.0, lv);
      if (v < best_loss) {
        best_loss = v;
        best = lv;
      }
    }
    grid_gap = std::max(grid_gap, std::abs(best - std::log(r * r)));
  }
  return {exact == 0.0 && onehot_gap <= 1e-12 && grid_gap <= 1e-3,
          "exact-fit loss " + fmt(exact) + ", one-hot gap " + fmt(onehot_gap, 3) +
              ", grid argmin gap " + fmt(grid_gap, 3)};
}

Outcome gumbel_statistics() {
  Rng rng(11);
  const auto transforms = experts::ModalityTransforms::sample(16, 16, rng);
  Router rt = Router::make(transforms, router::RouterConfig{}, 5, ad::FinalInit::xavier);
  for (auto* p : rt.parameters()) p->values() *= 2.0;
  const auto st = router::route(rt, transforms, gaussian(16, 1, rng), gaussian(16, 1, rng));
  const Eigen::Matrix<double, 8, 1> log_pi = st.joint.array().log();
  Eigen::Matrix<double, 8, 1> freq = Eigen::Matrix<double, 8, 1>::Zero();
  const int draws = 10000;
  for (int k = 0; k < draws; ++k)
    freq(router::gumbel_select(log_pi, 0.5, derive_seed(0, static_cast<std::uint64_t>(k)), false).selected) += 1.0;
  freq /= draws;
  const double tv = 0.5 * (freq - st.joint).cwiseAbs().sum();

  double min_max = 1.0;
  for (int k = 0; k < 1000; ++k)
    min_max = std::min(min_max,
                       router::gumbel_select(log_pi, 1e-4, derive_seed(1, static_cast<std::uint64_t>(k)), false)
                           .weights.maxCoeff());
  return {tv < 0.03 && min_max > 1.0 - 1e-6,
          "TV at tau=0.5 " + fmt(tv, 3) + " (< 0.03), min max-weight at tau=1e-4 " + fmt(1.0 - min_max, 3) +
              " below 1 (< 1e-6)"};
}

struct S1Runs {
  synth::Benchmark bench;
  train::TrainConfig config;
  train::TrainResult routed;
  std::vector<train::TrainResult> baselines;
};

Outcome routing_beats_fixed(S1Runs& runs) {
  runs.bench = synth::make_benchmark(synth::Scenario::s1, 1000, 1000, 0);
  runs.config = train::TrainConfig{};
  runs.routed = train::train(runs.config, runs.bench.train, runs.bench.test);
  double best1 = 1e300;
  double best2 = 1e300;
  std::string arg1;
  std::string arg2;
  for (int s = 0; s < experts::kNumSlots; ++s) {
    runs.baselines.push_back(
        train::train_fixed_baseline(Slot::from_index(s), runs.config, runs.bench.train, runs.bench.test));
    const auto& m = runs.baselines.back().metrics;
    if (m.rmse_task1 < best1) {
      best1 = m.rmse_task1;
      arg1 = Slot::from_index(s).name();
    }
    if (m.rmse_task2 < best2) {
      best2 = m.rmse_task2;
      arg2 = Slot::from_index(s).name();
    }
  }
  const auto& r = runs.routed.metrics;
  const bool ok = r.rmse_task1 <= best1 + 0.05 && r.rmse_task2 <= best2 + 0.05;
  return {ok, "routed " + fmt(r.rmse_task1) + " / " + fmt(r.rmse_task2) + " vs best fixed " + fmt(best1) +
                  " (" + arg1 + ") / " + fmt(best2) + " (" + arg2 + "), allowance 0.05"};
}

// Numeric cells of two CSVs, compared over the columns both contain.
double csv_gap(const fs::path& a, const fs::path& b, std::size_t& cells) {
  const io::CsvTable ta = io::read_csv(a);
  const io::CsvTable tb = io::read_csv(b);
  if (ta.rows.size() != tb.rows.size()) return INFINITY;
  double gap = 0.0;
  for (std::size_t ca = 0; ca < ta.header.size(); ++ca) {
    const auto it = std::find(tb.header.begin(), tb.header.end(), ta.header[ca]);
    if (it == tb.header.end()) continue;
    const auto cb = static_cast<std::size_t>(it - tb.header.begin());
    for (std::size_t r = 0; r < ta.rows.size(); ++r, ++cells)
      gap = std::max(gap, std::abs(io::parse_double(ta.rows[r][ca]) - io::parse_double(tb.rows[r][cb])));
  }
  return gap;
}

Outcome frozen_equivalence(S1Runs& runs) {
  if (runs.baselines.size() != experts::kNumSlots) return {false, "baselines unavailable"};
  testing::TempDir dir("frozen");
  double gap = 0.0;
  std::size_t scalars = 0;
  for (int s = 0; s < experts::kNumSlots; ++s) {
    train::TrainConfig base = runs.config;
    base.variant = train::Variant::baseline;
    base.slot = Slot::from_index(s);
    train::TrainConfig frozen = base;
    frozen.variant = train::Variant::frozen;
    train::TrainResult rf = train::train(frozen, runs.bench.train, runs.bench.test);
    const fs::path db = dir / ("base_" + std::to_string(s));
    const fs::path df = dir / ("frozen_" + std::to_string(s));
    fs::create_directories(db);
    fs::create_directories(df);
    train::write_run(db, base, runs.baselines[static_cast<std::size_t>(s)]);
    train::write_run(df, frozen, rf);

    const auto lb = testing::numeric_leaves(nlohmann::json::parse(io::read_text(db / "metrics.json")));
    const auto lf = testing::numeric_leaves(nlohmann::json::parse(io::read_text(df / "metrics.json")));
    if (lb.size() != lf.size()) return {false, "metrics.json leaves differ for slot " + std::to_string(s)};
    for (const auto& [k, v] : lb) {
      if (!lf.count(k)) return {false, "missing " + k};
      gap = std::max(gap, std::abs(v - lf.at(k)));
      ++scalars;
    }
    for (const char* f : {"loss_curve.csv", "predictions.csv", "routing.csv"})
      gap = std::max(gap, csv_gap(db / f, df / f, scalars));
  }
  return {gap <= 1e-9, "max gap " + fmt(gap, 3) + " over " + std::to_string(scalars) +
                           " logged scalars, 8 slots (<= 1e-9)"};
}

Outcome tabular_fidelity() {
  const fs::path data(MMROUTE_TEST_DATA);
  const auto source = tabular::read_table_csv(data / "demo_table.csv");
  const auto schema = tabular::TabularSchema::load(data / "demo_schema.json");
  bool ok = source.rows() == 300;
  std::string detail;
  for (auto m : {tabular::Method::gaussian, tabular::Method::copula, tabular::Method::kde}) {
    const auto syn = tabular::synthesize(m, source, schema, 200, 0);
    const auto rep = tabular::fidelity_report(source, syn, schema);
    const bool pass = rep.correlation_mad < 0.1 && rep.class_kl < 0.05;
    ok = ok && pass;
    detail += (detail.empty() ? "" : ", ") + tabular::to_string(m) + " MAD " + fmt(rep.correlation_mad, 3) +
              " KL " + fmt(rep.class_kl, 3) + (pass ? "" : " (fails)");
  }
  return {ok, detail + "; thresholds MAD < 0.1, KL < 0.05"};
}

int run_suite(const fs::path& out) {
  const std::string cmd = std::string("\"") + MMROUTE_CLI + "\" --seed 0 suite --out \"" + out.string() +
                          "\" > \"" + (out.string() + ".log") + "\" 2>&1";
  return std::system(cmd.c_str());
}

std::vector<fs::path> metrics_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().filename() == "metrics.json") out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

struct SuiteRuns {
  testing::TempDir dir{"suite"};
  nlohmann::json report;
  int exit_first = -1;
  int exit_second = -1;
};

const nlohmann::json* claim(const SuiteRuns& s, const std::string& name) {
  for (const auto& c : s.report.at("claims"))
    if (c.at("name") == name) return &c;
  return nullptr;
}

std::string tally(const nlohmann::json& c) {
  return std::to_string(c.at("passed_trials").get<int>()) + "/" + std::to_string(c.at("trials").get<int>());
}

Outcome scenario_recovery(SuiteRuns& s) {
  s.exit_first = run_suite(s.dir / "a");
  s.report = nlohmann::json::parse(io::read_text(s.dir / "a" / "suite.json"));
  bool ok = true;
  std::string detail;
  for (const char* name : {"s1_mtl", "s2_stl", "s3_fusion"}) {
    const auto* c = claim(s, name);
    if (!c) return {false, std::string("claim ") + name + " missing"};
    ok = ok && c->at("passed").get<bool>();
    detail += (detail.empty() ? "" : ", ") + std::string(name) + " " + tally(*c);
  }
  std::string masses;
  for (const auto& t : s.report.at("trials")) {
    const auto& pm = t.at("path_marginals");
    masses += " " + t.at("scenario").get<std::string>() + "/" + std::to_string(t.at("seed").get<int>()) +
              ":STL=" + fmt(t.at("stl_mass").get<double>(), 3) + ",T2=" + fmt(pm[1].get<double>(), 3) +
              ",N2=" + fmt(pm[3].get<double>(), 3);
  }
  return {ok, detail + " (need 2/3 each);" + masses};
}

Outcome probability_error_alignment(const SuiteRuns& s) {
  if (s.report.is_null()) return {false, "suite did not run"};
  bool ok = true;
  std::string detail;
  for (const char* name : {"alignment_s1", "alignment_s2", "alignment_s3"}) {
    const auto* c = claim(s, name);
    if (!c) return {false, std::string("claim ") + name + " missing"};
    ok = ok && c->at("passed").get<bool>();
    detail += (detail.empty() ? "" : ", ") + std::string(name) + " " + tally(*c);
  }
  std::string rho;
  for (const auto& t : s.report.at("trials"))
    rho += " " + (t.at("spearman").is_null() ? std::string("n/a") : fmt(t.at("spearman").get<double>(), 3)) +
           "(" + std::to_string(t.at("qualifying_routes").get<int>()) + ")";
  return {ok, detail + "; spearman(qualifying slots):" + rho};
}

Outcome determinism(SuiteRuns& s) {
  s.exit_second = run_suite(s.dir / "b");
  const auto a = metrics_files(s.dir / "a");
  const auto b = metrics_files(s.dir / "b");
  if (a.empty() || a != b) return {false, "run directories differ in layout"};
  for (const auto& rel : a)
    if (io::read_text(s.dir / "a" / rel) != io::read_text(s.dir / "b" / rel))
      return {false, rel.string() + " differs"};
  const bool same_exit = s.exit_first == s.exit_second;
  return {same_exit, std::to_string(a.size()) + " metrics.json files byte-identical across two `suite --seed 0` runs" +
                         (same_exit ? "" : ", but exit codes differ")};
}

}  // namespace

int main() {
  criterion("gradient-integrity", gradient_integrity);
  criterion("simplex-suite", simplex_suite);
  criterion("loss-identities", loss_identities);
  criterion("gumbel-statistics", gumbel_statistics);
  S1Runs s1;
  criterion("routing-beats-fixed-paths", [&] { return routing_beats_fixed(s1); });
  criterion("frozen-one-hot-equivalence", [&] { return frozen_equivalence(s1); });
  criterion("tabular-fidelity", tabular_fidelity);
  SuiteRuns suite;
  criterion("scenario-routing-recovery", [&] { return scenario_recovery(suite); });
  criterion("probability-error-alignment", [&] { return probability_error_alignment(suite); });
  criterion("suite-determinism", [&] { return determinism(suite); });
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
