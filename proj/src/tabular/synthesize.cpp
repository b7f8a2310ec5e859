#include "mmroute/tabular/synthesize.hpp"

#include "mmroute/errors.hpp"
#include "mmroute/rng.hpp"

#include <Eigen/Cholesky>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace mmroute::tabular {

Method parse_method(const std::string& s) {
  if (s == "gaussian") return Method::gaussian;
  if (s == "copula") return Method::copula;
  if (s == "kde") return Method::kde;
  throw ConfigError("unknown synthesis method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::gaussian: return "gaussian";
    case Method::copula: return "copula";
    case Method::kde: return "kde";
  }
  return "gaussian";
}

namespace {

struct ClassGroup {
  int code = 0;
  std::vector<Index> rows;
  Index quota = 0;
};

// Source rows grouped by outcome class, with n output rows split by largest
// remainder in proportion to the group sizes.
std::vector<ClassGroup> stratify(const Table& source, const TabularSchema& schema, Index n) {
  const auto classes = outcome_classes(source, schema);
  std::map<int, ClassGroup> by_code;
  for (Index r = 0; r < source.rows(); ++r) {
    auto& g = by_code[classes[static_cast<std::size_t>(r)]];
    g.code = classes[static_cast<std::size_t>(r)];
    g.rows.push_back(r);
  }
  std::vector<ClassGroup> groups;
  for (auto& [code, g] : by_code) groups.push_back(std::move(g));

  const double m = static_cast<double>(source.rows());
  std::vector<double> frac;
  Index assigned = 0;
  for (auto& g : groups) {
    const double exact = static_cast<double>(n) * static_cast<double>(g.rows.size()) / m;
    g.quota = static_cast<Index>(std::floor(exact));
    frac.push_back(exact - std::floor(exact));
    assigned += g.quota;
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++groups[order[k % order.size()]].quota;
  return groups;
}

std::vector<Index> free_columns(const TabularSchema& schema) {
  const auto outcomes = schema.outcome_indices();
  std::vector<Index> out;
  for (Index c = 0; c < schema.size(); ++c)
    if (std::find(outcomes.begin(), outcomes.end(), c) == outcomes.end()) out.push_back(c);
  return out;
}

Eigen::MatrixXd gather(const Table& t, const std::vector<Index>& rows,
                       const std::vector<Index>& cols) {
  Eigen::MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = t.data(rows[r], cols[c]);
  return m;
}

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw SynthesisError(std::string(what) + ": covariance is not positive definite after jitter");
  return llt.matrixL();
}

void check_source(const Table& source, const TabularSchema& schema, Index n, Index min_rows) {
  schema.validate(source);
  if (source.rows() < min_rows)
    throw SynthesisError("source needs at least " + std::to_string(min_rows) + " rows");
  if (n <= 0) throw SynthesisError("requested row count must be positive");
}

void threshold_binary(Table& t, const TabularSchema& schema) {
  for (Index c = 0; c < t.cols(); ++c)
    if (schema.is_binary(c))
      t.data.col(c) = (t.data.col(c).array() > 0.5).cast<double>().matrix();
}

void shuffle_rows(Table& t, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(t.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, "shuffle"));
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::MatrixXd shuffled(t.rows(), t.cols());
  for (Index r = 0; r < t.rows(); ++r) shuffled.row(r) = t.data.row(order[static_cast<std::size_t>(r)]);
  t.data = std::move(shuffled);
}

// Runs `fill(group, rng, out_block)` for every class group and stitches the
// blocks together with the outcome bits set.
template <typename Fill>
Table stratified(const Table& source, const TabularSchema& schema, Index n, std::uint64_t seed,
                 Fill&& fill) {
  const auto groups = stratify(source, schema, n);
  const auto cols = free_columns(schema);
  const auto outcomes = schema.outcome_indices();
  Table out{source.columns, Eigen::MatrixXd::Zero(n, source.cols())};
  Index row = 0;
  for (const auto& g : groups) {
    if (g.quota == 0) continue;
    Rng rng(derive_seed(seed, hash_tag("class"), static_cast<std::uint64_t>(g.code)));
    const Eigen::MatrixXd block = fill(g, cols, rng);
    for (Index r = 0; r < g.quota; ++r, ++row) {
      for (std::size_t c = 0; c < cols.size(); ++c) out.data(row, cols[c]) = block(r, static_cast<Index>(c));
      for (std::size_t k = 0; k < outcomes.size(); ++k)
        out.data(row, outcomes[k]) = (g.code >> k) & 1 ? 1.0 : 0.0;
    }
  }
  threshold_binary(out, schema);
  shuffle_rows(out, seed);
  return out;
}

Eigen::MatrixXd standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) z(r, c) = normal(rng);
  return z;
}

}  // namespace

Table gaussian_synthesize(const Table& source, const TabularSchema& schema, Index n,
                          std::uint64_t seed) {
  check_source(source, schema, n, 2);
  return stratified(source, schema, n, seed,
                    [&](const ClassGroup& g, const std::vector<Index>& cols, Rng& rng) {
                      const Eigen::MatrixXd x = gather(source, g.rows, cols);
                      const Index k = x.cols();
                      const Eigen::RowVectorXd mu = x.colwise().mean();
                      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
                      if (x.rows() > 1) {
                        const Eigen::MatrixXd centered = x.rowwise() - mu;
                        cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
                      }
                      cov.diagonal().array() += kCovarianceJitter;
                      const Eigen::MatrixXd chol = cholesky_or_throw(cov, "gaussian synthesis");
                      Eigen::MatrixXd samples = standard_normal(g.quota, k, rng) * chol.transpose();
                      samples.rowwise() += mu;
                      return samples;
                    });
}

Table copula_synthesize(const Table& source, const TabularSchema& schema, Index n,
                        std::uint64_t seed) {
  check_source(source, schema, n, 2);
  for (Index c = 0; c < source.cols(); ++c) {
    if (schema.is_binary(c)) continue;
    const std::set<double> distinct(source.data.col(c).begin(), source.data.col(c).end());
    if (distinct.size() < 2)
      throw SynthesisError("column '" + source.columns[static_cast<std::size_t>(c)] +
                           "' is constant; copula synthesis needs at least two distinct values");
  }
  const boost::math::normal std_normal;
  return stratified(
      source, schema, n, seed, [&](const ClassGroup& g, const std::vector<Index>& cols, Rng& rng) {
        const Eigen::MatrixXd x = gather(source, g.rows, cols);
        const Index m = x.rows();
        const Index k = x.cols();
        Eigen::MatrixXd scores(m, k);
        for (Index c = 0; c < k; ++c) {
          const Eigen::VectorXd ranks = average_ranks(x.col(c));
          for (Index r = 0; r < m; ++r)
            scores(r, c) = boost::math::quantile(std_normal, ranks(r) / static_cast<double>(m + 1));
        }
        Eigen::MatrixXd corr = correlation_matrix(scores);
        corr.diagonal().array() += kCovarianceJitter;
        const Eigen::MatrixXd chol = cholesky_or_throw(corr, "copula synthesis");
        const Eigen::MatrixXd z = standard_normal(g.quota, k, rng) * chol.transpose();

        Eigen::MatrixXd out(g.quota, k);
        for (Index c = 0; c < k; ++c) {
          std::vector<double> sorted(x.col(c).begin(), x.col(c).end());
          std::sort(sorted.begin(), sorted.end());
          for (Index r = 0; r < g.quota; ++r) {
            const double u = boost::math::cdf(std_normal, z(r, c));
            const auto idx = std::min<Index>(m - 1, static_cast<Index>(std::floor(u * static_cast<double>(m))));
            out(r, c) = sorted[static_cast<std::size_t>(std::max<Index>(idx, 0))];
          }
        }
        return out;
      });
}

double kde_bandwidth(Index rows, Index dims) {
  if (rows <= 0 || dims <= 0) throw SynthesisError("bandwidth needs positive rows and dims");
  return std::pow(static_cast<double>(rows), -1.0 / static_cast<double>(dims + 4));
}

Table kde_synthesize(const Table& source, const TabularSchema& schema, Index n,
                     std::uint64_t seed, const KdeOptions& options) {
  if (source.rows() == 0) throw SynthesisError("KDE synthesis from an empty source");
  check_source(source, schema, n, 1);
  const double h = options.bandwidth.value_or(kde_bandwidth(source.rows(), source.cols()));
  if (!(h >= 0.0)) throw SynthesisError("KDE bandwidth must be non-negative");

  // Noise h·N(0,1) in standardized units is h·sd·N(0,1) in source units; adding
  // it there keeps h = 0 an exact resample.
  const Eigen::RowVectorXd mean = source.data.colwise().mean();
  Eigen::RowVectorXd sd =
      ((source.data.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(source.rows()))
          .cwiseSqrt();
  for (Index c = 0; c < sd.size(); ++c)
    if (sd(c) == 0.0) sd(c) = 1.0;

  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, source.rows() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Table out{source.columns, Eigen::MatrixXd(n, source.cols())};
  for (Index r = 0; r < n; ++r) {
    const Index src = pick(rng);
    for (Index c = 0; c < source.cols(); ++c)
      out.data(r, c) = source.data(src, c) + h * sd(c) * normal(rng);
  }
  threshold_binary(out, schema);
  return out;
}

Table synthesize(Method method, const Table& source, const TabularSchema& schema, Index n,
                 std::uint64_t seed) {
  switch (method) {
    case Method::gaussian: return gaussian_synthesize(source, schema, n, seed);
    case Method::copula: return copula_synthesize(source, schema, n, seed);
    case Method::kde: return kde_synthesize(source, schema, n, seed);
  }
  throw ConfigError("bad synthesis method");
}

}  // namespace mmroute::tabular
