#include "mmroute/diagnostics/compare.hpp"
#include "mmroute/diagnostics/report.hpp"
#include "mmroute/diagnostics/suite.hpp"
#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/synth/scenario.hpp"
#include "mmroute/tabular/fidelity.hpp"
#include "mmroute/tabular/synthesize.hpp"
#include "mmroute/train/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace mmroute;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config;
};

train::TrainConfig base_config(const Globals& g) {
  train::TrainConfig c = g.config.empty() ? train::TrainConfig{} : train::load_config(g.config);
  c.seed = g.seed;
  return c;
}

synth::Benchmark load_data(const std::string& dir) { return synth::load_benchmark(dir); }

void print_run(const fs::path& out, const train::TrainConfig& c, const train::Metrics& m) {
  std::cout << std::setprecision(6) << c.display_name() << ": rmse_task1=" << m.rmse_task1
            << " rmse_task2=" << m.rmse_task2 << " epochs=" << m.epochs_run
            << " best_epoch=" << m.best_epoch << " -> " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-sample routing over modality paths and task paradigms"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "Training config JSON")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic scenario benchmark");
  std::string scenario = "s1";
  ad::Index n_train = 1000;
  ad::Index n_test = 1000;
  std::string gen_out;
  gen->add_option("--scenario", scenario, "s1, s2, s3 or general")->capture_default_str();
  gen->add_option("--n-train", n_train)->capture_default_str();
  gen->add_option("--n-test", n_test)->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* tab = app.add_subcommand("tabsynth", "Synthesize tabular rows and report fidelity");
  std::string method = "gaussian";
  std::string tab_in;
  std::string tab_schema;
  ad::Index tab_n = 200;
  std::string tab_out;
  std::string tab_report;
  bool tab_demo = false;
  std::string export_demo;
  tab->add_option("--method", method, "gaussian, copula or kde")->capture_default_str();
  tab->add_option("--in", tab_in, "Source CSV")->check(CLI::ExistingFile);
  tab->add_option("--schema", tab_schema, "Schema JSON")->check(CLI::ExistingFile);
  tab->add_flag("--demo", tab_demo, "Use the built-in 300-row demo table");
  tab->add_option("--n", tab_n, "Rows to synthesize")->capture_default_str();
  tab->add_option("--export-demo", export_demo, "Write the demo table and schema to DIR and exit");
  tab->add_option("--out", tab_out, "Synthetic CSV");
  tab->add_option("--report", tab_report, "Fidelity report JSON");

  auto* tr = app.add_subcommand("train", "Train the routed model");
  std::string data_dir;
  std::string run_out;
  std::string mode;
  tr->add_option("--data", data_dir, "Benchmark directory from gen")->required();
  tr->add_option("--out", run_out, "Run directory")->required();
  tr->add_option("--mode", mode, "Override router mode: soft or hard");

  auto* base = app.add_subcommand("baseline", "Train one fixed (path, paradigm) expert");
  std::string path = "t1";
  std::string paradigm = "stl";
  bool homoscedastic = false;
  base->add_option("--path", path, "t1, t2, n1 or n2")->capture_default_str();
  base->add_option("--paradigm", paradigm, "stl or mtl")->capture_default_str();
  base->add_flag("--homoscedastic", homoscedastic, "Pin log-variance at 0");
  base->add_option("--data", data_dir, "Benchmark directory from gen")->required();
  base->add_option("--out", run_out, "Run directory")->required();

  auto* rep = app.add_subcommand("report", "Routing diagnostics for a run directory");
  std::string report_run;
  rep->add_option("--run", report_run, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* cmp = app.add_subcommand("compare", "Comparison table across run directories");
  std::vector<std::string> runs;
  std::string cmp_out;
  cmp->add_option("--runs", runs, "Run directories")->required();
  cmp->add_option("--out", cmp_out, "Output CSV (stdout if omitted)");

  auto* suite = app.add_subcommand("suite", "Scenario suite over S1/S2/S3 routing claims");
  std::string suite_out;
  int trials = 3;
  suite->add_option("--out", suite_out, "Output directory for runs and suite.json");
  suite->add_option("--trials", trials, "Seeds per scenario")->capture_default_str();
  suite->add_option("--n-train", n_train)->capture_default_str();
  suite->add_option("--n-test", n_test)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto b = synth::make_benchmark(synth::parse_scenario(scenario), n_train, n_test, g.seed);
      synth::split_and_serialize(b, gen_out);
      std::cout << "wrote " << scenario << " (" << n_train << "/" << n_test << ") to " << gen_out << "\n";
      return 0;
    }
    if (tab->parsed()) {
      if (!export_demo.empty()) {
        tabular::write_table_csv(fs::path(export_demo) / "demo_table.csv", tabular::demo_table(g.seed));
        io::write_text(fs::path(export_demo) / "demo_schema.json",
                       tabular::demo_schema().to_json().dump(2) + "\n");
        std::cout << "wrote demo table to " << export_demo << "\n";
        return 0;
      }
      if (tab_out.empty()) throw ConfigError("tabsynth needs --out");
      tabular::Table source;
      tabular::TabularSchema schema;
      if (tab_demo) {
        source = tabular::demo_table(g.seed);
        schema = tabular::demo_schema();
      } else {
        if (tab_in.empty() || tab_schema.empty())
          throw ConfigError("tabsynth needs --in and --schema, or --demo");
        schema = tabular::TabularSchema::load(tab_schema);
        source = tabular::read_table_csv(tab_in);
      }
      const auto synthetic =
          tabular::synthesize(tabular::parse_method(method), source, schema, tab_n, g.seed);
      tabular::write_table_csv(tab_out, synthetic);
      const auto fid = tabular::fidelity_report(source, synthetic, schema);
      if (!tab_report.empty()) io::write_text(tab_report, fid.to_json().dump(2) + "\n");
      std::cout << method << ": correlation_mad=" << fid.correlation_mad
                << " class_kl=" << fid.class_kl << "\n";
      return 0;
    }
    if (tr->parsed() || base->parsed()) {
      const auto b = load_data(data_dir);
      train::TrainConfig c = base_config(g);
      if (tr->parsed()) {
        c.threads = g.threads;
        if (!mode.empty()) c.router.mode = router::parse_mode(mode);
      } else {
        c.threads = g.threads;
        c.variant = train::Variant::baseline;
        c.slot = {experts::parse_path(path), experts::parse_paradigm(paradigm)};
        if (homoscedastic) c.model.heteroscedastic = false;
      }
      auto result = train::train(c, b.train, b.test);
      train::write_run(run_out, c, result);
      print_run(run_out, c, result.metrics);
      return 0;
    }
    if (rep->parsed()) {
      const auto r = diagnostics::route_report(report_run);
      std::cout << "joint pmf:";
      for (int s = 0; s < experts::kNumSlots; ++s)
        std::cout << " " << experts::Slot::from_index(s).name() << "=" << r.joint_pmf(s);
      std::cout << "\n";
      return 0;
    }
    if (cmp->parsed()) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      const auto rows = diagnostics::compare_table(dirs);
      if (!cmp_out.empty()) {
        diagnostics::write_compare_csv(cmp_out, rows);
      } else {
        std::cout << "name,block,rmse_task1,rmse_task2\n";
        for (const auto& r : rows)
          std::cout << r.name << "," << r.block << "," << io::format_double(r.rmse_task1) << ","
                    << io::format_double(r.rmse_task2) << "\n";
      }
      return 0;
    }
    if (suite->parsed()) {
      diagnostics::SuiteOptions opt;
      opt.seed = g.seed;
      opt.trials = trials;
      opt.n_train = n_train;
      opt.n_test = n_test;
      opt.threads = g.threads;
      opt.config = base_config(g);
      if (!suite_out.empty()) opt.out_dir = fs::path(suite_out);
      const auto r = diagnostics::scenario_suite(opt);
      for (const auto& c : r.claims)
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.passed_trials << "/"
                  << c.trials << ") " << c.description << "\n";
      return r.passed() ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TrainError& e) {
    std::cerr << "training failed at epoch " << e.epoch() << ": " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
