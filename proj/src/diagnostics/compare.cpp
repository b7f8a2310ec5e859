#include "mmroute/diagnostics/compare.hpp"

#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"

#include <json.hpp>

#include <algorithm>

namespace mmroute::diagnostics {

std::vector<CompareRow> compare_table(const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty()) throw ContractError("compare needs at least one run");
  std::vector<CompareRow> rows;
  std::string train_hash;
  std::string test_hash;
  std::string first;
  for (const auto& dir : run_dirs) {
    const auto path = dir / "metrics.json";
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(io::read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
    try {
      const std::string tr = m.at("dataset").at("train_hash").get<std::string>();
      const std::string te = m.at("dataset").at("test_hash").get<std::string>();
      if (rows.empty()) {
        train_hash = tr;
        test_hash = te;
        first = dir.string();
      } else if (tr != train_hash || te != test_hash) {
        throw ComparisonError("run " + dir.string() + " used different data than " + first);
      }
      rows.push_back({m.at("name").get<std::string>(), m.at("block").get<std::string>(),
                      m.at("rmse_task1").get<double>(), m.at("rmse_task2").get<double>(),
                      dir.string()});
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  auto rank = [](const std::string& block) {
    const auto it = std::find(kBlockOrder.begin(), kBlockOrder.end(), block);
    return static_cast<std::size_t>(it - kBlockOrder.begin());
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const CompareRow& a, const CompareRow& b) { return rank(a.block) < rank(b.block); });
  return rows;
}

void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows) {
  io::CsvTable t{{"name", "block", "rmse_task1", "rmse_task2"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.name, r.block, io::format_double(r.rmse_task1), io::format_double(r.rmse_task2)});
  io::write_csv(path, t);
}

}  // namespace mmroute::diagnostics
