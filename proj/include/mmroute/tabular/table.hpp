#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmroute::tabular {

using Eigen::Index;

enum class ColumnKind { continuous, binary };

struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd data;  // rows × columns

  Index rows() const { return data.rows(); }
  Index cols() const { return data.cols(); }
};

struct TabularSchema {
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  // Binary columns whose joint class distribution must be preserved.
  std::vector<std::string> outcomes;

  static TabularSchema from_json(const nlohmann::json& j);
  static TabularSchema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  Index size() const { return static_cast<Index>(names.size()); }
  Index index_of(const std::string& name) const;
  std::vector<Index> outcome_indices() const;
  bool is_binary(Index c) const { return kinds[static_cast<std::size_t>(c)] == ColumnKind::binary; }

  // Column names match the table; binary columns only hold 0/1.
  void validate(const Table& t) const;
};

Table read_table_csv(const std::filesystem::path& path);
void write_table_csv(const std::filesystem::path& path, const Table& t);

// Pearson correlation; a zero-variance column correlates 0 with the others.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data);
// 1-based ranks, ties share their average rank.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v);

// Joint class code of the outcome columns for each row (bit k = outcome k).
std::vector<int> outcome_classes(const Table& t, const TabularSchema& schema);

// 300-row demo table: six correlated continuous features drawn from a fixed
// covariance, two thresholded binary features and two binary outcomes.
Table demo_table(std::uint64_t seed, Index rows = 300);
TabularSchema demo_schema();
Eigen::MatrixXd demo_covariance();

}  // namespace mmroute::tabular
