#pragma once

#include "mmroute/tabular/table.hpp"

#include <optional>
#include <string>

namespace mmroute::tabular {

enum class Method { gaussian, copula, kde };
Method parse_method(const std::string& s);
std::string to_string(Method m);

inline constexpr double kCovarianceJitter = 1e-6;

// Multivariate normal fit per outcome class (Σ̂ + 1e-6·I, Cholesky), rows
// allocated in proportion to the source classes; binary columns thresholded
// at 0.5 afterwards.
Table gaussian_synthesize(const Table& source, const TabularSchema& schema, Index n,
                          std::uint64_t seed);

// Gaussian copula per outcome class: average-rank normal scores, their
// correlation, and a map back through each column's empirical quantiles.
Table copula_synthesize(const Table& source, const TabularSchema& schema, Index n,
                        std::uint64_t seed);

struct KdeOptions {
  std::optional<double> bandwidth;  // defaults to kde_bandwidth(rows, cols)
};

// h = n^(-1/(d+4)) with n source rows and d columns.
double kde_bandwidth(Index rows, Index dims);

// Resample a source row and add h·N(0, I) in standardized space.
Table kde_synthesize(const Table& source, const TabularSchema& schema, Index n,
                     std::uint64_t seed, const KdeOptions& options = {});

Table synthesize(Method method, const Table& source, const TabularSchema& schema, Index n,
                 std::uint64_t seed);

}  // namespace mmroute::tabular
