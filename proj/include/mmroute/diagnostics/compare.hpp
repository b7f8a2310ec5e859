#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mmroute::diagnostics {

// Rows are emitted in this block order; unknown blocks follow, in input order.
inline const std::vector<std::string> kBlockOrder{"T1", "N1", "T2", "N2", "STL", "MTL", "HetMTL",
                                                  "Routing"};

struct CompareRow {
  std::string name;
  std::string block;
  double rmse_task1 = 0.0;
  double rmse_task2 = 0.0;
  std::string run_dir;
};

// Pure function of each run's metrics.json. Throws ComparisonError when the
// runs were trained or tested on different data.
std::vector<CompareRow> compare_table(const std::vector<std::filesystem::path>& run_dirs);
void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows);

}  // namespace mmroute::diagnostics
