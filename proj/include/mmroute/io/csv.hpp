#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmroute::io {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws IoError if absent
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Numeric body with a header line.
Eigen::MatrixXd numeric_matrix(const CsvTable& table);
void write_numeric_csv(const std::filesystem::path& path,
                       const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace mmroute::io
