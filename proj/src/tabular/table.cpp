#include "mmroute/tabular/table.hpp"

#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <numeric>

namespace mmroute::tabular {

using nlohmann::json;

TabularSchema TabularSchema::from_json(const json& j) {
  TabularSchema s;
  try {
    for (const auto& c : j.at("columns")) {
      s.names.push_back(c.at("name").get<std::string>());
      const auto kind = c.value("kind", std::string("continuous"));
      if (kind == "continuous")
        s.kinds.push_back(ColumnKind::continuous);
      else if (kind == "binary")
        s.kinds.push_back(ColumnKind::binary);
      else
        throw ConfigError("column '" + s.names.back() + "' has unknown kind '" + kind + "'");
    }
    if (j.contains("outcomes")) s.outcomes = j.at("outcomes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed schema: ") + e.what());
  }
  for (const auto& o : s.outcomes)
    if (!s.is_binary(s.index_of(o)))
      throw ConfigError("outcome column '" + o + "' must be binary");
  return s;
}

TabularSchema TabularSchema::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(io::read_text(path)));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

json TabularSchema::to_json() const {
  json cols = json::array();
  for (std::size_t i = 0; i < names.size(); ++i)
    cols.push_back({{"name", names[i]},
                    {"kind", kinds[i] == ColumnKind::binary ? "binary" : "continuous"}});
  return {{"columns", cols}, {"outcomes", outcomes}};
}

Index TabularSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Index>(i);
  throw ConfigError("schema has no column '" + name + "'");
}

std::vector<Index> TabularSchema::outcome_indices() const {
  std::vector<Index> out;
  for (const auto& o : outcomes) out.push_back(index_of(o));
  return out;
}

void TabularSchema::validate(const Table& t) const {
  if (t.columns != names) throw ShapeError("table columns do not match the schema");
  for (Index c = 0; c < t.cols(); ++c) {
    if (!is_binary(c)) continue;
    for (Index r = 0; r < t.rows(); ++r)
      if (t.data(r, c) != 0.0 && t.data(r, c) != 1.0)
        throw ConfigError("binary column '" + names[static_cast<std::size_t>(c)] +
                          "' holds a value other than 0/1");
  }
}

Table read_table_csv(const std::filesystem::path& path) {
  const auto csv = io::read_csv(path);
  return {csv.header, io::numeric_matrix(csv)};
}

void write_table_csv(const std::filesystem::path& path, const Table& t) {
  io::write_numeric_csv(path, t.columns, t.data);
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data) {
  const Index d = data.cols();
  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm().transpose();
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) {
      double c = 0.0;
      if (norms(i) > 0.0 && norms(j) > 0.0)
        c = centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j));
      corr(i, j) = corr(j, i) = c;
    }
  return corr;
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const Index n = v.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) == v(order[static_cast<std::size_t>(i)])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = avg;
    i = j + 1;
  }
  return ranks;
}

std::vector<int> outcome_classes(const Table& t, const TabularSchema& schema) {
  const auto idx = schema.outcome_indices();
  std::vector<int> classes(static_cast<std::size_t>(t.rows()), 0);
  for (Index r = 0; r < t.rows(); ++r) {
    int code = 0;
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (t.data(r, idx[k]) > 0.5) code |= 1 << k;
    classes[static_cast<std::size_t>(r)] = code;
  }
  return classes;
}

Eigen::MatrixXd demo_covariance() {
  Eigen::MatrixXd corr(6, 6);
  corr << 1.0, 0.7, -0.4, -0.5, 0.5, -0.3,  //
      0.7, 1.0, -0.3, -0.4, 0.6, -0.2,       //
      -0.4, -0.3, 1.0, 0.5, -0.3, 0.2,       //
      -0.5, -0.4, 0.5, 1.0, -0.3, 0.3,       //
      0.5, 0.6, -0.3, -0.3, 1.0, -0.4,       //
      -0.3, -0.2, 0.2, 0.3, -0.4, 1.0;
  Eigen::VectorXd sd(6);
  sd << 5.0, 4.0, 2.0, 2.0, 2.5, 1.5;
  return sd.asDiagonal() * corr * sd.asDiagonal();
}

TabularSchema demo_schema() {
  TabularSchema s;
  s.names = {"phq9_baseline", "gad7_baseline", "sleep_quality", "energy",
             "stress",        "social_support", "dissociate",   "anger",
             "phq_response",  "gad_response"};
  s.kinds.assign(6, ColumnKind::continuous);
  s.kinds.insert(s.kinds.end(), 4, ColumnKind::binary);
  s.outcomes = {"phq_response", "gad_response"};
  return s;
}

Table demo_table(std::uint64_t seed, Index rows) {
  const Eigen::MatrixXd cov = demo_covariance();
  const Eigen::MatrixXd chol = cov.llt().matrixL();
  Eigen::VectorXd mean(6);
  mean << 12.0, 10.0, 5.0, 5.0, 6.0, 4.0;
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Table t;
  t.columns = demo_schema().names;
  t.data.resize(rows, 10);
  for (Index r = 0; r < rows; ++r) {
    Eigen::VectorXd z(6);
    for (Index k = 0; k < 6; ++k) z(k) = normal(rng);
    const Eigen::VectorXd x = mean + chol * z;
    const Eigen::VectorXd s = (x - mean).cwiseQuotient(sd);
    Eigen::Vector4d e;
    for (Index k = 0; k < 4; ++k) e(k) = normal(rng);
    t.data.row(r).head(6) = x.transpose();
    t.data(r, 6) = (0.6 * s(0) + 0.8 * e(0) > 0.5) ? 1.0 : 0.0;
    t.data(r, 7) = (0.5 * s(4) + 0.87 * e(1) > 0.3) ? 1.0 : 0.0;
    t.data(r, 8) = (-0.5 * s(0) + 0.4 * s(5) + 0.7 * e(2) > 0.0) ? 1.0 : 0.0;
    t.data(r, 9) = (-0.5 * s(1) + 0.4 * s(2) + 0.7 * e(3) > 0.2) ? 1.0 : 0.0;
  }
  return t;
}

}  // namespace mmroute::tabular
