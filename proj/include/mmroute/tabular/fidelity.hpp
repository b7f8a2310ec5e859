#pragma once

#include "mmroute/tabular/table.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mmroute::tabular {

struct FidelityReport {
  // Mean |ρ_source − ρ_synthetic| over the upper triangle of the correlation matrix.
  double correlation_mad = 0.0;
  // KL(source ‖ synthetic) in nats over joint outcome classes, add-one smoothed.
  double class_kl = 0.0;
  std::vector<std::string> columns;
  std::vector<double> marginal_ks;  // Kolmogorov–Smirnov distance per column

  nlohmann::json to_json() const;
};

FidelityReport fidelity_report(const Table& source, const Table& synthetic,
                               const TabularSchema& schema);

}  // namespace mmroute::tabular
