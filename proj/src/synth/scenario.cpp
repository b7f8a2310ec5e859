#include "mmroute/synth/scenario.hpp"

#include "mmroute/io/csv.hpp"

#include <bit>
#include <cmath>

namespace mmroute::synth {

using nlohmann::json;

Scenario parse_scenario(const std::string& name) {
  if (name == "s1" || name == "S1") return Scenario::s1;
  if (name == "s2" || name == "S2") return Scenario::s2;
  if (name == "s3" || name == "S3") return Scenario::s3;
  if (name == "general") return Scenario::general;
  throw ConfigError("unknown scenario '" + name + "' (expected s1, s2, s3 or general)");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::s1: return "s1";
    case Scenario::s2: return "s2";
    case Scenario::s3: return "s3";
    case Scenario::general: return "general";
  }
  return "s1";
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

namespace {

Eigen::VectorXd normal_vector(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

void expect_size(const Eigen::VectorXd& v, Index n, const char* name) {
  if (v.size() != n)
    throw ShapeError(std::string(name) + " has dim " + std::to_string(v.size()) + ", expected " +
                     std::to_string(n));
}

}  // namespace

ScenarioSpec ScenarioSpec::sample(Scenario scenario, std::uint64_t seed, const ScenarioDims& dims) {
  if (dims.d_num <= 0 || dims.d_text <= 0 || dims.rff_dim <= 0)
    throw ConfigError("scenario dims must be positive");
  Rng rng(seed);
  ScenarioSpec s;
  s.scenario = scenario;
  s.d_num = dims.d_num;
  s.d_text = dims.d_text;
  s.rff_dim = dims.rff_dim;
  s.seed = seed;

  s.phi = RffMap::sample(dims.rff_dim, dims.d_text, rng);
  s.psi = RffMap::sample(dims.rff_dim, dims.d_num, rng);
  s.alpha1 = normal_vector(dims.d_num, rng);
  s.alpha2 = normal_vector(dims.d_text, rng);
  s.beta1 = normal_vector(dims.rff_dim, rng);
  s.beta2 = normal_vector(dims.rff_dim, rng);
  s.omega1 = normal_vector(dims.d_num, rng);
  s.omega2 = normal_vector(dims.d_text, rng);
  std::uniform_real_distribution<double> gamma(0.5, 1.5);
  s.gamma1 = gamma(rng);
  s.gamma2 = gamma(rng);

  if (!s.uses_cross_terms()) {
    s.beta1.setZero();
    s.beta2.setZero();
  }
  if (!s.uses_sinusoids()) {
    s.gamma1 = 0.0;
    s.gamma2 = 0.0;
  }
  return s;
}

void ScenarioSpec::validate() const {
  expect_size(alpha1, d_num, "alpha1");
  expect_size(alpha2, d_text, "alpha2");
  expect_size(beta1, rff_dim, "beta1");
  expect_size(beta2, rff_dim, "beta2");
  expect_size(omega1, d_num, "omega1");
  expect_size(omega2, d_text, "omega2");
  if (phi.input_dim() != d_text || phi.output_dim() != rff_dim)
    throw ShapeError("phi must map d_text to D");
  if (psi.input_dim() != d_num || psi.output_dim() != rff_dim)
    throw ShapeError("psi must map d_num to D");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
}

Eigen::Vector2d noiseless_targets(const ScenarioSpec& spec, const Eigen::VectorXd& x_num,
                                  const Eigen::VectorXd& x_text) {
  double y1 = spec.alpha1.dot(x_num);
  double y2 = spec.alpha2.dot(x_text);
  if (spec.uses_cross_terms()) {
    y1 += spec.beta1.dot(rff_features(spec.phi, x_text));
    y2 += spec.beta2.dot(rff_features(spec.psi, x_num));
  }
  if (spec.uses_sinusoids()) {
    y1 += spec.gamma1 * std::sin(spec.omega1.dot(x_num));
    y2 += spec.gamma2 * std::cos(spec.omega2.dot(x_text));
  }
  return {y1, y2};
}

Dataset generate(const ScenarioSpec& spec, Index n, std::uint64_t seed, Split split) {
  if (n <= 0) throw ContractError("generate needs n > 0");
  spec.validate();
  Dataset d{Eigen::MatrixXd(n, spec.d_num), Eigen::MatrixXd(n, spec.d_text), Eigen::VectorXd(n),
            Eigen::VectorXd(n), split};
  for (Index i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const Eigen::VectorXd xn = normal_vector(spec.d_num, rng);
    const Eigen::VectorXd xt = normal_vector(spec.d_text, rng);
    const Eigen::VectorXd eps = normal_vector(2, rng);
    const Eigen::Vector2d y = noiseless_targets(spec, xn, xt);
    d.x_num.row(i) = xn.transpose();
    d.x_text.row(i) = xt.transpose();
    d.y1(i) = y(0) + spec.noise_sigma * eps(0);
    d.y2(i) = y(1) + spec.noise_sigma * eps(1);
  }
  return d;
}

Dataset Dataset::rows(const std::vector<Index>& indices) const {
  const auto n = static_cast<Index>(indices.size());
  Dataset out{Eigen::MatrixXd(n, d_num()), Eigen::MatrixXd(n, d_text()), Eigen::VectorXd(n),
              Eigen::VectorXd(n), split};
  for (Index k = 0; k < n; ++k) {
    const Index i = indices[static_cast<std::size_t>(k)];
    out.x_num.row(k) = x_num.row(i);
    out.x_text.row(k) = x_text.row(i);
    out.y1(k) = y1(i);
    out.y2(k) = y2(i);
  }
  return out;
}

Eigen::MatrixXd Dataset::targets() const {
  Eigen::MatrixXd y(size(), 2);
  y.col(0) = y1;
  y.col(1) = y2;
  return y;
}

void Dataset::validate() const {
  const Index n = x_num.rows();
  if (x_text.rows() != n || y1.size() != n || y2.size() != n)
    throw ShapeError("dataset columns disagree on sample count");
  if (!x_num.allFinite() || !x_text.allFinite() || !y1.allFinite() || !y2.allFinite())
    throw NumericError("dataset contains non-finite values");
}

std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_all = [&](const auto& m) {
    mix(static_cast<double>(m.rows()));
    mix(static_cast<double>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) mix(m(r, c));
  };
  mix_all(d.x_num);
  mix_all(d.x_text);
  mix_all(d.y1);
  mix_all(d.y2);
  return h;
}

Benchmark make_benchmark(Scenario scenario, Index n_train, Index n_test, std::uint64_t seed,
                         const ScenarioDims& dims) {
  Benchmark b;
  b.spec = ScenarioSpec::sample(scenario, derive_seed(seed, "spec"), dims);
  b.train_seed = derive_seed(seed, "train");
  b.test_seed = derive_seed(seed, "test");
  b.train = generate(b.spec, n_train, b.train_seed, Split::train);
  b.test = generate(b.spec, n_test, b.test_seed, Split::test);
  return b;
}

// ---------------------------------------------------------------------------

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json rff_json(const RffMap& m) {
  json rows = json::array();
  for (Index r = 0; r < m.weight.rows(); ++r) rows.push_back(vec_json(m.weight.row(r).transpose()));
  return {{"weight", rows}, {"bias", vec_json(m.bias)}};
}

RffMap rff_from(const json& j) {
  const auto rows = j.at("weight").get<std::vector<std::vector<double>>>();
  RffMap m;
  const auto d = static_cast<Index>(rows.empty() ? 0 : rows.front().size());
  m.weight.resize(static_cast<Index>(rows.size()), d);
  for (Index r = 0; r < m.weight.rows(); ++r) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(r)].size()) != d)
      throw ShapeError("ragged RFF weight matrix in spec");
    for (Index c = 0; c < d; ++c) m.weight(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  m.bias = vec_from(j.at("bias"));
  return m;
}

}  // namespace

json spec_to_json(const ScenarioSpec& s) {
  return {{"scenario", to_string(s.scenario)},
          {"d_num", s.d_num},
          {"d_text", s.d_text},
          {"rff_dim", s.rff_dim},
          {"alpha1", vec_json(s.alpha1)},
          {"alpha2", vec_json(s.alpha2)},
          {"beta1", vec_json(s.beta1)},
          {"beta2", vec_json(s.beta2)},
          {"omega1", vec_json(s.omega1)},
          {"omega2", vec_json(s.omega2)},
          {"gamma1", s.gamma1},
          {"gamma2", s.gamma2},
          {"noise_sigma", s.noise_sigma},
          {"phi", rff_json(s.phi)},
          {"psi", rff_json(s.psi)},
          {"seed", s.seed}};
}

ScenarioSpec spec_from_json(const json& j) {
  ScenarioSpec s;
  try {
    s.scenario = parse_scenario(j.at("scenario").get<std::string>());
    s.d_num = j.at("d_num").get<Index>();
    s.d_text = j.at("d_text").get<Index>();
    s.rff_dim = j.at("rff_dim").get<Index>();
    s.alpha1 = vec_from(j.at("alpha1"));
    s.alpha2 = vec_from(j.at("alpha2"));
    s.beta1 = vec_from(j.at("beta1"));
    s.beta2 = vec_from(j.at("beta2"));
    s.omega1 = vec_from(j.at("omega1"));
    s.omega2 = vec_from(j.at("omega2"));
    s.gamma1 = j.at("gamma1").get<double>();
    s.gamma2 = j.at("gamma2").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.phi = rff_from(j.at("phi"));
    s.psi = rff_from(j.at("psi"));
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed scenario spec: ") + e.what());
  }
  s.validate();
  return s;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  d.validate();
  if (d.size() == 0) throw ContractError("refusing to write an empty dataset");
  std::vector<std::string> header;
  for (Index i = 0; i < d.d_num(); ++i) header.push_back("x_num_" + std::to_string(i));
  for (Index i = 0; i < d.d_text(); ++i) header.push_back("x_text_" + std::to_string(i));
  header.emplace_back("y1");
  header.emplace_back("y2");
  Eigen::MatrixXd m(d.size(), d.d_num() + d.d_text() + 2);
  m << d.x_num, d.x_text, d.y1, d.y2;
  io::write_numeric_csv(path, header, m);
}

Dataset read_dataset_csv(const std::filesystem::path& path, Split split) {
  const io::CsvTable t = io::read_csv(path);
  Index d_num = 0;
  Index d_text = 0;
  for (const auto& h : t.header) {
    if (h.rfind("x_num_", 0) == 0) ++d_num;
    if (h.rfind("x_text_", 0) == 0) ++d_text;
  }
  const auto n = static_cast<Index>(t.rows.size());
  Dataset d{Eigen::MatrixXd(n, d_num), Eigen::MatrixXd(n, d_text), Eigen::VectorXd(n),
            Eigen::VectorXd(n), split};
  std::vector<std::size_t> num_cols;
  std::vector<std::size_t> text_cols;
  for (Index i = 0; i < d_num; ++i) num_cols.push_back(t.column("x_num_" + std::to_string(i)));
  for (Index i = 0; i < d_text; ++i) text_cols.push_back(t.column("x_text_" + std::to_string(i)));
  const std::size_t c1 = t.column("y1");
  const std::size_t c2 = t.column("y2");
  for (Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    for (Index i = 0; i < d_num; ++i) d.x_num(r, i) = io::parse_double(row[num_cols[static_cast<std::size_t>(i)]]);
    for (Index i = 0; i < d_text; ++i) d.x_text(r, i) = io::parse_double(row[text_cols[static_cast<std::size_t>(i)]]);
    d.y1(r) = io::parse_double(row[c1]);
    d.y2(r) = io::parse_double(row[c2]);
  }
  try {
    d.validate();
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return d;
}

void split_and_serialize(const Benchmark& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset_csv(dir / "train.csv", b.train);
  write_dataset_csv(dir / "test.csv", b.test);
  json doc = {{"format", "mmroute-scenario"},
              {"version", 1},
              {"spec", spec_to_json(b.spec)},
              {"generation",
               {{"train_seed", b.train_seed},
                {"test_seed", b.test_seed},
                {"n_train", b.train.size()},
                {"n_test", b.test.size()}}}};
  io::write_text(dir / "spec.json", doc.dump(2) + "\n");
}

Benchmark load_benchmark(const std::filesystem::path& dir) {
  Benchmark b;
  json doc;
  try {
    doc = json::parse(io::read_text(dir / "spec.json"));
  } catch (const json::parse_error& e) {
    throw IoError((dir / "spec.json").string() + ": " + e.what());
  }
  b.spec = spec_from_json(doc.at("spec"));
  b.train_seed = doc.at("generation").at("train_seed").get<std::uint64_t>();
  b.test_seed = doc.at("generation").at("test_seed").get<std::uint64_t>();
  b.train = read_dataset_csv(dir / "train.csv", Split::train);
  b.test = read_dataset_csv(dir / "test.csv", Split::test);
  if (b.train.d_num() != b.spec.d_num || b.train.d_text() != b.spec.d_text)
    throw IoError(dir.string() + ": dataset dims disagree with spec.json");
  return b;
}

Benchmark replay(const std::filesystem::path& spec_json) {
  json doc;
  try {
    doc = json::parse(io::read_text(spec_json));
  } catch (const json::parse_error& e) {
    throw IoError(spec_json.string() + ": " + e.what());
  }
  Benchmark b;
  b.spec = spec_from_json(doc.at("spec"));
  const json& g = doc.at("generation");
  b.train_seed = g.at("train_seed").get<std::uint64_t>();
  b.test_seed = g.at("test_seed").get<std::uint64_t>();
  b.train = generate(b.spec, g.at("n_train").get<Index>(), b.train_seed, Split::train);
  b.test = generate(b.spec, g.at("n_test").get<Index>(), b.test_seed, Split::test);
  return b;
}

}  // namespace mmroute::synth
