#include "mmroute/diagnostics/report.hpp"

#include "mmroute/errors.hpp"
#include "mmroute/io/csv.hpp"
#include "mmroute/tabular/table.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmroute::diagnostics {

using experts::kNumPaths;
using experts::kNumSlots;
using experts::Slot;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double weighted_quantile(std::vector<std::pair<double, double>> wv, double q) {
  std::erase_if(wv, [](const auto& p) { return !(p.first > 0.0); });
  if (wv.empty()) throw ContractError("weighted quantile with no positive weight");
  std::sort(wv.begin(), wv.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  double total = 0.0;
  for (const auto& [w, v] : wv) total += w;
  double cum = 0.0;
  for (const auto& [w, v] : wv) {
    cum += w;
    if (cum >= q * total) return v;
  }
  return wv.back().second;
}

std::vector<Index> dominant_path_order(const Matrix& pi_mod) {
  const Index n = pi_mod.rows();
  std::vector<int> dom(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) dom[static_cast<std::size_t>(i)] = router::argmax_slot(pi_mod.row(i).transpose());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const int da = dom[static_cast<std::size_t>(a)];
    const int db = dom[static_cast<std::size_t>(b)];
    if (da != db) return da < db;
    return pi_mod(a, da) > pi_mod(b, db);
  });
  std::vector<Index> position(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) position[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
  return position;
}

namespace {

std::string slot_key(int s) {
  const Slot slot = Slot::from_index(s);
  return experts::to_string(slot.path) + "_" + experts::to_string(slot.paradigm);
}

double cell(const io::CsvTable& t, std::size_t row, std::size_t col) {
  return io::parse_double(t.rows[row][col]);
}

}  // namespace

RoutingTable read_routing(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path);
  const std::size_t n = t.rows.size();
  RoutingTable r{Matrix(static_cast<Index>(n), kNumSlots), Matrix(static_cast<Index>(n), kNumPaths), {}};
  std::array<std::size_t, kNumSlots> jc;
  std::array<std::size_t, kNumPaths> pc;
  for (int s = 0; s < kNumSlots; ++s) jc[static_cast<std::size_t>(s)] = t.column("joint_" + slot_key(s));
  for (int p = 0; p < kNumPaths; ++p)
    pc[static_cast<std::size_t>(p)] =
        t.column("pi_" + experts::to_string(experts::kPaths[static_cast<std::size_t>(p)]));
  const std::size_t sel = t.column("selected");
  for (std::size_t i = 0; i < n; ++i) {
    for (int s = 0; s < kNumSlots; ++s)
      r.joint(static_cast<Index>(i), s) = cell(t, i, jc[static_cast<std::size_t>(s)]);
    for (int p = 0; p < kNumPaths; ++p)
      r.pi_mod(static_cast<Index>(i), p) = cell(t, i, pc[static_cast<std::size_t>(p)]);
    const double slot = cell(t, i, sel);
    if (slot < 0 || slot >= kNumSlots || slot != std::floor(slot))
      throw IoError(path.string() + ": bad selected slot on row " + std::to_string(i + 1));
    r.selected.push_back(static_cast<int>(slot));
  }
  return r;
}

PredictionTable read_predictions(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path);
  const auto n = static_cast<Index>(t.rows.size());
  PredictionTable p{Matrix(n, 2), Matrix(n, 2), {}};
  const std::array<std::size_t, 4> cols{t.column("y1"), t.column("y2"), t.column("hard1"),
                                        t.column("hard2")};
  for (Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    p.targets(i, 0) = cell(t, r, cols[0]);
    p.targets(i, 1) = cell(t, r, cols[1]);
    p.hard(i, 0) = cell(t, r, cols[2]);
    p.hard(i, 1) = cell(t, r, cols[3]);
  }
  for (int s = 0; s < kNumSlots; ++s) {
    const std::string key = slot_key(s);
    const auto c1 = std::find(t.header.begin(), t.header.end(), key + "_mean1");
    if (c1 == t.header.end()) continue;
    const std::size_t a = static_cast<std::size_t>(c1 - t.header.begin());
    const std::size_t b = t.column(key + "_mean2");
    Matrix m(n, 2);
    for (Index i = 0; i < n; ++i) {
      m(i, 0) = cell(t, static_cast<std::size_t>(i), a);
      m(i, 1) = cell(t, static_cast<std::size_t>(i), b);
    }
    p.slot_means[static_cast<std::size_t>(s)] = std::move(m);
  }
  return p;
}

RouteReport build_report(const RoutingTable& routing, const PredictionTable& pred) {
  const Index n = routing.joint.rows();
  if (n == 0) throw ContractError("route report over an empty run");
  if (pred.targets.rows() != n || static_cast<Index>(routing.selected.size()) != n)
    throw ShapeError("routing and prediction tables differ in length");

  RouteReport rep;
  rep.joint_pmf = routing.joint.colwise().mean().transpose();
  rep.modality_routing = routing.pi_mod;
  rep.cluster_order = dominant_path_order(routing.pi_mod);

  rep.sankey_nodes.push_back("root");
  for (auto p : experts::kPaths) rep.sankey_nodes.push_back(experts::to_string(p));
  for (int s = 0; s < kNumSlots; ++s) rep.sankey_nodes.push_back(Slot::from_index(s).name());
  for (int p = 0; p < kNumPaths; ++p) {
    const std::string path = experts::to_string(experts::kPaths[static_cast<std::size_t>(p)]);
    rep.sankey_edges.push_back({"root", path, rep.joint_pmf(2 * p) + rep.joint_pmf(2 * p + 1)});
  }
  for (int s = 0; s < kNumSlots; ++s) {
    const Slot slot = Slot::from_index(s);
    rep.sankey_edges.push_back({experts::to_string(slot.path), slot.name(), rep.joint_pmf(s)});
  }

  auto abs_err = [&](Index i, double m1, double m2) {
    return 0.5 * (std::abs(m1 - pred.targets(i, 0)) + std::abs(m2 - pred.targets(i, 1)));
  };
  for (int s = 0; s < kNumSlots; ++s) {
    std::vector<double> errs;
    for (Index i = 0; i < n; ++i)
      if (routing.selected[static_cast<std::size_t>(i)] == s)
        errs.push_back(abs_err(i, pred.hard(i, 0), pred.hard(i, 1)));
    if (errs.empty()) continue;
    std::sort(errs.begin(), errs.end());
    RouteErrorSummary e;
    e.route = Slot::from_index(s).name();
    e.mode = RoutingMode::hard;
    e.count = static_cast<double>(errs.size());
    e.mean_abs_err = std::accumulate(errs.begin(), errs.end(), 0.0) / e.count;
    e.q25 = quantile_sorted(errs, 0.25);
    e.q50 = quantile_sorted(errs, 0.5);
    e.q75 = quantile_sorted(errs, 0.75);
    rep.errors.push_back(e);
  }
  for (int s = 0; s < kNumSlots; ++s) {
    const Matrix& m = pred.slot_means[static_cast<std::size_t>(s)];
    if (m.size() == 0) continue;
    std::vector<std::pair<double, double>> wv;
    double total = 0.0;
    double weighted = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double w = routing.joint(i, s);
      const double err = abs_err(i, m(i, 0), m(i, 1));
      wv.emplace_back(w, err);
      total += w;
      weighted += w * err;
    }
    if (!(total > 0.0)) continue;
    RouteErrorSummary e;
    e.route = Slot::from_index(s).name();
    e.mode = RoutingMode::soft;
    e.count = total;
    e.mean_abs_err = weighted / total;
    e.q25 = weighted_quantile(wv, 0.25);
    e.q50 = weighted_quantile(wv, 0.5);
    e.q75 = weighted_quantile(wv, 0.75);
    rep.errors.push_back(e);
  }
  return rep;
}

RouteReport route_report(const std::filesystem::path& run_dir) {
  for (const char* f : {"routing.csv", "predictions.csv"})
    if (!std::filesystem::exists(run_dir / f))
      throw IoError("missing " + (run_dir / f).string());
  RouteReport rep = build_report(read_routing(run_dir / "routing.csv"),
                                 read_predictions(run_dir / "predictions.csv"));
  write_report(run_dir, rep);
  return rep;
}

void write_report(const std::filesystem::path& dir, const RouteReport& rep) {
  io::CsvTable pmf{{"path", "paradigm", "probability"}, {}};
  for (int s = 0; s < kNumSlots; ++s) {
    const Slot slot = Slot::from_index(s);
    pmf.rows.push_back({experts::to_string(slot.path), experts::to_string(slot.paradigm),
                        io::format_double(rep.joint_pmf(s))});
  }
  io::write_csv(dir / "joint_pmf.csv", pmf);

  io::CsvTable mod{{"sample"}, {}};
  for (auto p : experts::kPaths) mod.header.push_back(experts::to_string(p));
  mod.header.push_back("cluster_order");
  for (Index i = 0; i < rep.modality_routing.rows(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int p = 0; p < kNumPaths; ++p) row.push_back(io::format_double(rep.modality_routing(i, p)));
    row.push_back(std::to_string(rep.cluster_order[static_cast<std::size_t>(i)]));
    mod.rows.push_back(std::move(row));
  }
  io::write_csv(dir / "modality_routing.csv", mod);

  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : rep.sankey_edges)
    edges.push_back({{"source", e.source}, {"target", e.target}, {"weight", e.weight}});
  const nlohmann::json sankey{{"nodes", rep.sankey_nodes}, {"edges", edges}};
  io::write_text(dir / "sankey.json", sankey.dump(2) + "\n");

  io::CsvTable errs{{"route", "mode", "count", "mean_abs_err", "q25", "q50", "q75"}, {}};
  for (const auto& e : rep.errors)
    errs.rows.push_back({e.route, router::to_string(e.mode), io::format_double(e.count),
                         io::format_double(e.mean_abs_err), io::format_double(e.q25),
                         io::format_double(e.q50), io::format_double(e.q75)});
  io::write_csv(dir / "route_errors.csv", errs);
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::VectorXd ra = tabular::average_ranks(a);
  const Eigen::VectorXd rb = tabular::average_ranks(b);
  const Eigen::VectorXd ca = ra.array() - ra.mean();
  const Eigen::VectorXd cb = rb.array() - rb.mean();
  const double den = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return ca.dot(cb) / den;
}

}  // namespace mmroute::diagnostics
