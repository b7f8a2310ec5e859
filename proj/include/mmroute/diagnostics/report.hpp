#pragma once

#include "mmroute/router/router.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace mmroute::diagnostics {

using ad::Index;
using ad::Matrix;
using router::RoutingMode;

struct RouteErrorSummary {
  std::string route;  // "T2/MTL"
  RoutingMode mode = RoutingMode::hard;
  double count = 0.0;  // samples (hard) or total probability weight (soft)
  double mean_abs_err = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

struct SankeyEdge {
  std::string source;
  std::string target;
  double weight = 0.0;
};

struct RouteReport {
  Eigen::Matrix<double, 8, 1> joint_pmf;
  Matrix modality_routing;          // n × 4
  std::vector<Index> cluster_order;  // position of each sample in the dominant-path ordering
  std::vector<std::string> sankey_nodes;
  std::vector<SankeyEdge> sankey_edges;
  std::vector<RouteErrorSummary> errors;
};

// Linear interpolation between order statistics at position q·(n − 1).
double quantile_sorted(const std::vector<double>& sorted, double q);
// Smallest value whose cumulative weight reaches q of the total.
double weighted_quantile(std::vector<std::pair<double, double>> weight_value, double q);

// Ordering by dominant path, then by its probability (descending), then index.
std::vector<Index> dominant_path_order(const Matrix& pi_mod);

struct RoutingTable {
  Matrix joint;   // n × 8
  Matrix pi_mod;  // n × 4
  std::vector<int> selected;
};

struct PredictionTable {
  Matrix targets;  // n × 2
  Matrix hard;     // n × 2
  std::array<Matrix, experts::kNumSlots> slot_means;  // n × 2; empty when the slot was not run
};

RoutingTable read_routing(const std::filesystem::path& path);
PredictionTable read_predictions(const std::filesystem::path& path);

RouteReport build_report(const RoutingTable& routing, const PredictionTable& predictions);

// Reads routing.csv and predictions.csv from run_dir and writes joint_pmf.csv,
// modality_routing.csv, sankey.json and route_errors.csv next to them.
RouteReport route_report(const std::filesystem::path& run_dir);
void write_report(const std::filesystem::path& dir, const RouteReport& report);

// Spearman rank correlation with average ranks for ties; NaN if either side is constant.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace mmroute::diagnostics
