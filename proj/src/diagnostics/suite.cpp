#include "mmroute/diagnostics/suite.hpp"

#include "mmroute/diagnostics/report.hpp"
#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/train/trainer.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace mmroute::diagnostics {

using synth::Scenario;

bool scenario_claim(Scenario scenario, const Eigen::Matrix<double, 8, 1>& pmf) {
  double stl = 0.0;
  for (int p = 0; p < 4; ++p) stl += pmf(2 * p);
  const double mtl = pmf.sum() - stl;
  Eigen::Vector4d path;
  for (int p = 0; p < 4; ++p) path(p) = pmf(2 * p) + pmf(2 * p + 1);
  switch (scenario) {
    case Scenario::s1: return mtl > 0.5;
    case Scenario::s2: return stl > 0.5;
    case Scenario::s3: {
      // path order T1, T2, N1, N2
      const bool t2_largest = path(1) > path(0) && path(1) > path(2) && path(1) > path(3);
      return t2_largest && path(1) + path(3) > path(0) + path(2);
    }
    case Scenario::general: return true;
  }
  return false;
}

Alignment probability_error_alignment(const Eigen::Matrix<double, 8, 1>& pmf,
                                      const std::vector<int>& selected,
                                      const std::vector<double>& abs_errors, ad::Index min_samples) {
  if (selected.size() != abs_errors.size()) throw ShapeError("selected and errors differ in length");
  std::array<double, 8> sum{};
  std::array<ad::Index, 8> count{};
  for (std::size_t i = 0; i < selected.size(); ++i) {
    sum[static_cast<std::size_t>(selected[i])] += abs_errors[i];
    ++count[static_cast<std::size_t>(selected[i])];
  }
  std::vector<double> mass;
  std::vector<double> err;
  for (std::size_t s = 0; s < 8; ++s) {
    if (count[s] < min_samples) continue;
    mass.push_back(pmf(static_cast<ad::Index>(s)));
    err.push_back(sum[s] / static_cast<double>(count[s]));
  }
  Alignment a;
  a.qualifying = static_cast<int>(mass.size());
  if (a.qualifying < 2) {
    a.spearman = std::nan("");
    a.passed = true;
    return a;
  }
  a.spearman = spearman(Eigen::Map<Eigen::VectorXd>(mass.data(), static_cast<ad::Index>(mass.size())),
                        Eigen::Map<Eigen::VectorXd>(err.data(), static_cast<ad::Index>(err.size())));
  a.passed = std::isnan(a.spearman) || a.spearman <= 0.0;
  return a;
}

bool SuiteReport::passed() const {
  for (const auto& c : claims)
    if (!c.passed) return false;
  return !claims.empty();
}

nlohmann::json SuiteReport::to_json() const {
  using nlohmann::json;
  json t = json::array();
  for (const auto& r : trials) {
    json pmf = json::array();
    for (int s = 0; s < 8; ++s) pmf.push_back(r.joint_pmf(s));
    t.push_back({{"scenario", synth::to_string(r.scenario)},
                 {"seed", r.seed},
                 {"joint_pmf", pmf},
                 {"path_marginals", {r.path_marginals(0), r.path_marginals(1), r.path_marginals(2),
                                     r.path_marginals(3)}},
                 {"stl_mass", r.stl_mass},
                 {"mtl_mass", r.mtl_mass},
                 {"rmse_task1", r.rmse_task1},
                 {"rmse_task2", r.rmse_task2},
                 {"spearman", std::isnan(r.spearman) ? json(nullptr) : json(r.spearman)},
                 {"qualifying_routes", r.qualifying_routes},
                 {"claim", r.claim},
                 {"alignment", r.alignment}});
  }
  json c = json::array();
  for (const auto& cl : claims)
    c.push_back({{"name", cl.name},
                 {"description", cl.description},
                 {"passed_trials", cl.passed_trials},
                 {"trials", cl.trials},
                 {"passed", cl.passed}});
  return {{"format", "mmroute-suite"}, {"version", 1}, {"passed", passed()}, {"claims", c},
          {"trials", t}};
}

namespace {

TrialResult run_trial(Scenario scenario, std::uint64_t seed, const SuiteOptions& opt) {
  const synth::Benchmark b = synth::make_benchmark(scenario, opt.n_train, opt.n_test, seed);
  train::TrainConfig config = opt.config;
  config.seed = seed;
  config.variant = train::Variant::routed;
  train::TrainResult result = train::train(config, b.train, b.test);

  TrialResult r;
  r.scenario = scenario;
  r.seed = seed;
  const train::Evaluation& test = result.metrics.test;
  r.joint_pmf = test.joint_pmf();
  for (int p = 0; p < 4; ++p) r.path_marginals(p) = r.joint_pmf(2 * p) + r.joint_pmf(2 * p + 1);
  for (int p = 0; p < 4; ++p) r.stl_mass += r.joint_pmf(2 * p);
  r.mtl_mass = r.joint_pmf.sum() - r.stl_mass;
  r.rmse_task1 = result.metrics.rmse_task1;
  r.rmse_task2 = result.metrics.rmse_task2;
  r.claim = scenario_claim(scenario, r.joint_pmf);

  std::vector<double> errs;
  for (ad::Index i = 0; i < test.targets.rows(); ++i)
    errs.push_back(0.5 * (std::abs(test.hard_pred(i, 0) - test.targets(i, 0)) +
                          std::abs(test.hard_pred(i, 1) - test.targets(i, 1))));
  const Alignment a =
      probability_error_alignment(r.joint_pmf, test.selected, errs, opt.min_route_samples);
  r.spearman = a.spearman;
  r.qualifying_routes = a.qualifying;
  r.alignment = a.passed;

  if (opt.out_dir) {
    const auto dir = *opt.out_dir / synth::to_string(scenario) / ("seed_" + std::to_string(seed));
    synth::split_and_serialize(b, dir / "data");
    train::write_run(dir, config, result);
    route_report(dir);
  }
  return r;
}

ClaimResult tally(const std::vector<TrialResult>& trials, Scenario scenario, std::string name,
                  std::string description, bool TrialResult::*field) {
  ClaimResult c{std::move(name), std::move(description), 0, 0, false};
  for (const auto& t : trials) {
    if (t.scenario != scenario) continue;
    ++c.trials;
    if (t.*field) ++c.passed_trials;
  }
  c.passed = c.trials > 0 && 2 * c.passed_trials > c.trials;
  return c;
}

}  // namespace

SuiteReport scenario_suite(const SuiteOptions& opt) {
  if (opt.trials < 1) throw ConfigError("suite needs at least one trial");
  if (opt.threads < 1) throw ConfigError("suite threads must be >= 1");
  opt.config.validate();
  const std::array<Scenario, 3> scenarios{Scenario::s1, Scenario::s2, Scenario::s3};
  std::vector<std::pair<Scenario, std::uint64_t>> jobs;
  for (Scenario s : scenarios)
    for (int k = 0; k < opt.trials; ++k) jobs.emplace_back(s, opt.seed + static_cast<std::uint64_t>(k));

  SuiteReport rep;
  rep.trials.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        rep.trials[j] = run_trial(jobs[j].first, jobs[j].second, opt);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(opt.threads), jobs.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  rep.claims.push_back(tally(rep.trials, Scenario::s1, "s1_mtl",
                             "S1: aggregate MTL joint mass > 0.5", &TrialResult::claim));
  rep.claims.push_back(tally(rep.trials, Scenario::s2, "s2_stl",
                             "S2: aggregate STL joint mass > 0.5", &TrialResult::claim));
  rep.claims.push_back(tally(rep.trials, Scenario::s3, "s3_fusion",
                             "S3: T2 is the largest path marginal and T2+N2 > T1+N1",
                             &TrialResult::claim));
  for (Scenario s : scenarios)
    rep.claims.push_back(tally(rep.trials, s, "alignment_" + synth::to_string(s),
                               synth::to_string(s) +
                                   ": Spearman(slot mass, hard-routed slot error) <= 0",
                               &TrialResult::alignment));
  if (opt.out_dir) io::write_text(*opt.out_dir / "suite.json", rep.to_json().dump(2) + "\n");
  return rep;
}

}  // namespace mmroute::diagnostics
