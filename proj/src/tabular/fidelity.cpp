#include "mmroute/tabular/fidelity.hpp"

#include "mmroute/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mmroute::tabular {

nlohmann::json FidelityReport::to_json() const {
  nlohmann::json marg = nlohmann::json::object();
  for (std::size_t i = 0; i < columns.size(); ++i) marg[columns[i]] = marginal_ks[i];
  return {{"correlation_mad", correlation_mad},
          {"class_kl", class_kl},
          {"kl_direction", "source||synthetic, add-one smoothed joint outcome classes"},
          {"marginal_ks", marg}};
}

namespace {

double ks_distance(Eigen::VectorXd a, Eigen::VectorXd b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  Index i = 0;
  Index j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a(i), b(j));
    while (i < a.size() && a(i) <= x) ++i;
    while (j < b.size() && b(j) <= x) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

}  // namespace

FidelityReport fidelity_report(const Table& source, const Table& synthetic,
                               const TabularSchema& schema) {
  schema.validate(source);
  schema.validate(synthetic);

  FidelityReport rep;
  rep.columns = source.columns;

  const Eigen::MatrixXd cs = correlation_matrix(source.data);
  const Eigen::MatrixXd cy = correlation_matrix(synthetic.data);
  const Index d = cs.rows();
  double total = 0.0;
  Index pairs = 0;
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j, ++pairs) total += std::abs(cs(i, j) - cy(i, j));
  rep.correlation_mad = pairs ? total / static_cast<double>(pairs) : 0.0;

  const auto k = schema.outcomes.size();
  if (k > 0) {
    const std::size_t classes = std::size_t{1} << k;
    std::vector<double> p(classes, 1.0);
    std::vector<double> q(classes, 1.0);
    for (int c : outcome_classes(source, schema)) p[static_cast<std::size_t>(c)] += 1.0;
    for (int c : outcome_classes(synthetic, schema)) q[static_cast<std::size_t>(c)] += 1.0;
    const double zp = static_cast<double>(source.rows() + static_cast<Index>(classes));
    const double zq = static_cast<double>(synthetic.rows() + static_cast<Index>(classes));
    double kl = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double pc = p[c] / zp;
      const double qc = q[c] / zq;
      kl += pc * std::log(pc / qc);
    }
    rep.class_kl = std::max(0.0, kl);
  }

  for (Index c = 0; c < source.cols(); ++c)
    rep.marginal_ks.push_back(ks_distance(source.data.col(c), synthetic.data.col(c)));
  return rep;
}

}  // namespace mmroute::tabular
