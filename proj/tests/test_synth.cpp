#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/synth/scenario.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mmroute;
using namespace mmroute::synth;

namespace {

double rff_loop(const RffMap& m, const Eigen::VectorXd& x, Index j) {
  double z = m.bias(j);
  for (Index k = 0; k < x.size(); ++k) z += m.weight(j, k) * x(k);
  return std::sqrt(2.0 / static_cast<double>(m.output_dim())) * std::cos(z);
}

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_CASE("rff with zero weights is a constant") {
  RffMap m{Eigen::MatrixXd::Zero(32, 16), Eigen::VectorXd::Zero(32)};
  const Eigen::VectorXd f = rff_features(m, Eigen::VectorXd::Random(16));
  CHECK((f.array() == 0.25).all());
  m.bias.setConstant(std::numbers::pi);
  const Eigen::VectorXd g = rff_features(m, Eigen::VectorXd::Random(16));
  for (Index j = 0; j < 32; ++j) CHECK(std::abs(g(j) + 0.25) < 1e-15);
}

TEST_CASE("rff matches a scalar loop and stays bounded") {
  Rng rng(7);
  const RffMap m = RffMap::sample(32, 16, rng);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x(16);
    for (Index k = 0; k < 16; ++k) x(k) = n(rng);
    const Eigen::VectorXd f = rff_features(m, x);
    for (Index j = 0; j < 32; ++j) {
      CHECK(std::abs(f(j) - rff_loop(m, x, j)) < 1e-12);
      CHECK(std::abs(f(j)) <= 0.25);
    }
  }
  CHECK_THROWS_AS(rff_features(m, Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("zero coefficients and zero noise give zero targets") {
  ScenarioSpec spec = ScenarioSpec::sample(Scenario::s1, 1);
  spec.alpha1.setZero();
  spec.alpha2.setZero();
  spec.beta1.setZero();
  spec.beta2.setZero();
  spec.gamma1 = spec.gamma2 = 0.0;
  spec.noise_sigma = 0.0;
  const Dataset d = generate(spec, 50, 3);
  CHECK(d.y1.isZero(0.0));
  CHECK(d.y2.isZero(0.0));
}

TEST_CASE("S2 targets regenerate from the stored spec") {
  ScenarioSpec spec = ScenarioSpec::sample(Scenario::s2, 12);
  spec.noise_sigma = 0.0;
  const Dataset d = generate(spec, 200, 5);
  for (Index i = 0; i < d.size(); ++i) {
    const Eigen::VectorXd xn = d.x_num.row(i).transpose();
    const Eigen::VectorXd xt = d.x_text.row(i).transpose();
    const double y1 = spec.alpha1.dot(xn) + spec.gamma1 * std::sin(spec.omega1.dot(xn));
    const double y2 = spec.alpha2.dot(xt) + spec.gamma2 * std::cos(spec.omega2.dot(xt));
    CHECK(d.y1(i) == y1);
    CHECK(d.y2(i) == y2);
  }
}

TEST_CASE("S1 residual variance matches the noise level") {
  const ScenarioSpec spec = ScenarioSpec::sample(Scenario::s1, 2);
  const Dataset d = generate(spec, 1000, 9);
  Eigen::VectorXd r(2 * d.size());
  for (Index i = 0; i < d.size(); ++i) {
    Eigen::VectorXd xn = d.x_num.row(i).transpose();
    Eigen::VectorXd xt = d.x_text.row(i).transpose();
    double y1 = spec.alpha1.dot(xn) + spec.gamma1 * std::sin(spec.omega1.dot(xn));
    double y2 = spec.alpha2.dot(xt) + spec.gamma2 * std::cos(spec.omega2.dot(xt));
    for (Index j = 0; j < spec.rff_dim; ++j) {
      y1 += spec.beta1(j) * rff_loop(spec.phi, xt, j);
      y2 += spec.beta2(j) * rff_loop(spec.psi, xn, j);
    }
    r(2 * i) = d.y1(i) - y1;
    r(2 * i + 1) = d.y2(i) - y2;
  }
  const double var = (r.array() - r.mean()).square().sum() / static_cast<double>(r.size() - 1);
  CHECK(var > 0.008);
  CHECK(var < 0.012);
}

TEST_CASE("S2 task 1 is uncorrelated with the text modality") {
  const Benchmark b = make_benchmark(Scenario::s2, 1000, 10, 4);
  for (Index j = 0; j < b.train.d_text(); ++j)
    CHECK(std::abs(corr(b.train.y1, b.train.x_text.col(j))) < 0.1);
}

TEST_CASE("S3 ignores gamma") {
  ScenarioSpec spec = ScenarioSpec::sample(Scenario::s3, 6);
  const Dataset a = generate(spec, 100, 1);
  spec.gamma1 = 40.0;
  spec.gamma2 = -3.0;
  const Dataset b = generate(spec, 100, 1);
  CHECK(a.y1 == b.y1);
  CHECK(a.y2 == b.y2);
}

TEST_CASE("coefficient shapes and ranges") {
  const ScenarioSpec s = ScenarioSpec::sample(Scenario::s1, 31);
  CHECK(s.alpha1.size() == 16);
  CHECK(s.alpha2.size() == 16);
  CHECK(s.beta1.size() == 32);
  CHECK(s.omega2.size() == 16);
  CHECK(s.phi.weight.rows() == 32);
  CHECK(s.phi.weight.cols() == 16);
  CHECK(s.gamma1 >= 0.5);
  CHECK(s.gamma1 <= 1.5);
  CHECK(s.gamma2 >= 0.5);
  CHECK(s.gamma2 <= 1.5);
  CHECK(s.noise_sigma == 0.1);
  CHECK_THROWS_AS(generate(s, 0, 1), ContractError);
}

TEST_CASE("sample generation does not depend on n") {
  const ScenarioSpec s = ScenarioSpec::sample(Scenario::s1, 8);
  const Dataset small = generate(s, 10, 2);
  const Dataset large = generate(s, 40, 2);
  CHECK(small.x_num == large.x_num.topRows(10));
  CHECK(small.y2 == large.y2.head(10));
}

TEST_CASE("csv header and bitwise round trip") {
  testing::TempDir dir("synth");
  const Benchmark b = make_benchmark(Scenario::s1, 2, 3, 17);
  write_dataset_csv(dir / "two.csv", b.train);
  const io::CsvTable t = io::read_csv(dir / "two.csv");
  CHECK(t.rows.size() == 2);
  CHECK(t.header.front() == "x_num_0");
  CHECK(t.header[16] == "x_text_0");
  CHECK(t.header[t.header.size() - 2] == "y1");
  CHECK(t.header.back() == "y2");

  const Dataset back = read_dataset_csv(dir / "two.csv");
  CHECK(back.x_num == b.train.x_num);
  CHECK(back.x_text == b.train.x_text);
  CHECK(back.y1 == b.train.y1);
  CHECK(back.y2 == b.train.y2);
  CHECK(dataset_hash(back) == dataset_hash(b.train));
}

TEST_CASE("sidecar replay regenerates both splits") {
  testing::TempDir dir("replay");
  const Benchmark b = make_benchmark(Scenario::s3, 30, 20, 5);
  split_and_serialize(b, dir.path());
  for (const char* f : {"train.csv", "test.csv", "spec.json"})
    CHECK(std::filesystem::exists(dir / f));
  const Benchmark r = replay(dir / "spec.json");
  CHECK(dataset_hash(r.train) == dataset_hash(b.train));
  CHECK(dataset_hash(r.test) == dataset_hash(b.test));
  CHECK(r.spec.phi.weight == b.spec.phi.weight);
  const Benchmark l = load_benchmark(dir.path());
  CHECK(dataset_hash(l.test) == dataset_hash(b.test));
}

TEST_CASE("scenario names") {
  CHECK(parse_scenario("s2") == Scenario::s2);
  CHECK(to_string(Scenario::s3) == "s3");
  CHECK_THROWS(parse_scenario("s9"));
}
