#pragma once

// Model files ({"k": int, "M": [[...]], "b": int}) and JSON/CSV renderings
// of the library's result types. State indices are 1-based on the wire.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ksm/bound_verifier.hpp"
#include "ksm/broadcast_sim.hpp"
#include "ksm/error.hpp"
#include "ksm/exact_oracles.hpp"
#include "ksm/phylo_cov.hpp"
#include "ksm/spectral.hpp"

namespace ksm {

using json = nlohmann::ordered_json;

struct Model {
  ChannelMatrix channel;
  std::size_t b = 2;
};

inline Model parse_model(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::ParseError, "model document must be a JSON object");
  for (const char* field : {"k", "M", "b"})
    if (!doc.contains(field)) throw Error(ErrorKind::ParseError, std::string("missing field \"") + field + "\"");
  if (!doc["k"].is_number_integer()) throw Error(ErrorKind::ParseError, "field \"k\" must be an integer");
  if (!doc["b"].is_number_integer() || doc["b"].get<long long>() < 2)
    throw Error(ErrorKind::ParseError, "field \"b\" must be an integer >= 2");
  const auto& m = doc["M"];
  if (!m.is_array()) throw Error(ErrorKind::ParseError, "field \"M\" must be an array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& row : m) {
    if (!row.is_array()) throw Error(ErrorKind::ParseError, "field \"M\" must be an array of rows");
    std::vector<double> r;
    for (const auto& x : row) {
      if (!x.is_number()) throw Error(ErrorKind::ParseError, "field \"M\" has a non-numeric entry");
      r.push_back(x.get<double>());
    }
    rows.push_back(std::move(r));
  }
  const auto k = doc["k"].get<long long>();
  if (k != static_cast<long long>(rows.size()))
    throw Error(ErrorKind::ParseError, "field \"k\" = " + std::to_string(k) + " but \"M\" has " +
                                           std::to_string(rows.size()) + " rows");
  return {validate_channel(rows), static_cast<std::size_t>(doc["b"].get<long long>())};
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open model file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  return parse_model(doc);
}

inline json model_to_json(const ChannelMatrix& channel, std::size_t b) {
  return json{{"k", channel.k()}, {"M", channel.rows()}, {"b", b}};
}

// Shortest decimal text that round-trips the double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

// JSON has no inf/nan; those become null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json to_json(const SpectralData& sd) {
  json j{{"k", sd.k()},
         {"b", sd.b},
         {"pi", sd.pi},
         {"lambda", sd.lambda},
         {"nu", sd.nu},
         {"ks_product", sd.ks_product},
         {"phase", std::string(to_string(classify_phase(sd)))}};
  if (classify_phase(sd) == Phase::KestenStigum) j["c_prime_floor"] = cprime_lower_bound(sd);
  return j;
}

inline json moments_json(const RunningMoments& m) {
  return json{{"count", m.count()},
              {"mean", m.mean()},
              {"variance", m.variance()},
              {"variance_defined", m.variance_defined()},
              {"second_raw_moment", m.second_raw_moment()},
              {"se_mean", m.standard_error()},
              {"skewness", number(m.skewness())},
              {"excess_kurtosis", number(m.excess_kurtosis())}};
}

inline json to_json(const BatchSummary& s) {
  json groups = json::array();
  for (std::size_t i = 0; i < s.groups.size(); ++i) {
    const auto& g = s.groups[i];
    if (g.count() == 0) continue;
    json mgf = json::array(), square = json::array();
    for (std::size_t z = 0; z < s.zeta_grid.size(); ++z)
      mgf.push_back({{"zeta", s.zeta_grid[z]}, {"value", number(g.mgf[z].mean())}, {"se", number(g.mgf[z].standard_error())}});
    for (std::size_t z = 0; z < s.square_zeta_grid.size(); ++z)
      square.push_back({{"zeta", s.square_zeta_grid[z]},
                        {"value", number(g.square_mgf[z].mean())},
                        {"se", number(g.square_mgf[z].standard_error())}});
    json entry{{"root_state", i + 1}, {"count", g.count()}, {"s_n", moments_json(g.s)}, {"q_n", moments_json(g.q)},
               {"mgf", mgf}};
    if (!s.square_zeta_grid.empty()) entry["square_mgf"] = square;
    groups.push_back(std::move(entry));
  }
  return json{{"k", s.k},
              {"n", s.n},
              {"replicas", s.replicas},
              {"zeta_grid", s.zeta_grid},
              {"pooled_census", s.pooled_census},
              {"groups", groups}};
}

inline json to_json(const CensusCheck& c) {
  if (!c.applicable) return json{{"applicable", false}};
  return json{{"applicable", true}, {"empirical", c.empirical}, {"pi", c.pi}, {"max_deviation", c.max_deviation}};
}

inline void write_replica_csv_header(std::ostream& out, std::size_t k) {
  out << "replica,root_state,s_n,q_n";
  for (std::size_t i = 1; i <= k; ++i) out << ",census_" << i;
  out << '\n';
}

inline void write_replica_csv_row(std::ostream& out, std::uint64_t replica, const ReplicaResult& r) {
  out << replica << ',' << r.root_state + 1 << ',' << format_double(r.s_n) << ',' << format_double(r.q_n);
  for (auto c : r.census) out << ',' << c;
  out << '\n';
}

inline json to_json(const MgfTable& t) {
  json levels = json::array();
  for (std::size_t n = 0; n < t.values.size(); ++n) {
    json states = json::array();
    for (std::size_t i = 0; i < t.values[n].size(); ++i) {
      json vals = json::array();
      for (double g : t.values[n][i]) vals.push_back(number(g));
      states.push_back({{"i", i + 1}, {"gamma", vals}});
    }
    levels.push_back({{"n", t.levels[n]}, {"states", states}});
  }
  return json{{"zeta_grid", t.zeta_grid}, {"levels", levels}};
}

inline void write_csv(std::ostream& out, const MgfTable& t) {
  out << "n,i,zeta,value\n";
  for (std::size_t n = 0; n < t.values.size(); ++n)
    for (std::size_t i = 0; i < t.values[n].size(); ++i)
      for (std::size_t z = 0; z < t.zeta_grid.size(); ++z)
        out << t.levels[n] << ',' << i + 1 << ',' << format_double(t.zeta_grid[z]) << ','
            << format_double(t.values[n][i][z]) << '\n';
}

inline json to_json(const MomentTable& t) {
  json levels = json::array();
  for (std::size_t n = 0; n < t.mean.size(); ++n)
    levels.push_back({{"n", n}, {"mean", t.mean[n]}, {"second_moment", t.second_moment[n]}});
  return json{{"levels", levels}};
}

// moment column: 1 = E[S_n | i], 2 = E[S_n^2 | i]
inline void write_csv(std::ostream& out, const MomentTable& t) {
  out << "n,i,moment,value\n";
  for (std::size_t n = 0; n < t.mean.size(); ++n)
    for (std::size_t i = 0; i < t.mean[n].size(); ++i) {
      out << n << ',' << i + 1 << ",1," << format_double(t.mean[n][i]) << '\n';
      out << n << ',' << i + 1 << ",2," << format_double(t.second_moment[n][i]) << '\n';
    }
}

inline json to_json(const BruteForceResult& r) {
  json dist = json::array();
  for (const auto& o : r.distribution)
    dist.push_back({{"census", o.census}, {"value", o.value}, {"probability", o.probability}});
  return json{{"n", r.n},
              {"root_state", r.root_state + 1},
              {"configurations", r.configurations},
              {"total_probability", r.total_probability()},
              {"mean", r.mean()},
              {"second_moment", r.second_moment()},
              {"distribution", dist}};
}

inline json to_json(const SquareMgfResult& r) {
  json values = json::array();
  for (std::size_t i = 0; i < r.value.size(); ++i)
    values.push_back({{"i", i + 1},
                      {"value", number(r.value[i])},
                      {"log_value", number(r.log_value[i])},
                      {"relative_change", number(r.relative_change[i])}});
  return json{{"n", r.n}, {"zeta", r.zeta}, {"nodes", r.nodes}, {"converged", r.converged}, {"states", values}};
}

inline json to_json(const CorollaryReport& c) {
  json levels = json::array();
  for (const auto& l : c.levels) levels.push_back(to_json(l));
  json sups = json::array();
  for (double s : c.sup_per_level) sups.push_back(number(s));
  return json{{"zeta_probe", c.zeta_probe},
              {"nodes", c.nodes},
              {"sup_per_level", sups},
              {"supremum", number(c.supremum)},
              {"all_converged", c.all_converged},
              {"stabilizes", c.stabilizes},
              {"levels", levels}};
}

inline json to_json(const BoundReport& r) {
  json cs = json::array();
  for (double c : r.empirical_c) cs.push_back(number(c));
  json j{{"model_id", r.model_id},
         {"phase", std::string(to_string(r.phase))},
         {"zeta_grid", r.table.zeta_grid},
         {"n_max", r.n_max()},
         {"empirical_c", cs},
         {"c_prime_floor", r.c_prime_floor ? json(*r.c_prime_floor) : json(nullptr)},
         {"uniformly_bounded", r.uniformly_bounded},
         {"non_increasing_after_burn_in", r.non_increasing_after_burn_in},
         {"relative_increase", number(r.relative_increase)},
         {"increment_ratio", r.increment_ratio ? number(*r.increment_ratio) : json(nullptr)}};
  if (r.corollary) j["corollary"] = to_json(*r.corollary);
  return j;
}

inline json to_json(const BoundCheckRow& row) {
  return json{{"n", row.n}, {"i", row.i + 1}, {"zeta", row.zeta}, {"gamma", row.gamma}, {"bound", row.bound},
              {"margin", row.margin}};
}

inline json to_json(const TheoremCheck& t) {
  return json{{"c", t.c},
              {"pass", t.pass},
              {"first_violation", t.first_violation ? to_json(*t.first_violation) : json(nullptr)}};
}

inline void write_csv(std::ostream& out, const TheoremCheck& t) {
  out << "n,i,zeta,gamma,bound,margin\n";
  for (const auto& r : t.rows)
    out << r.n << ',' << r.i + 1 << ',' << format_double(r.zeta) << ',' << format_double(r.gamma) << ','
        << format_double(r.bound) << ',' << format_double(r.margin) << '\n';
}

inline json to_json(const CltReport& r) {
  json roots = json::array();
  for (const auto& m : r.roots)
    roots.push_back({{"root_state", m.root_state + 1},
                     {"count", m.count},
                     {"mean", m.mean},
                     {"mean_se", m.mean_se},
                     {"variance", m.variance},
                     {"skewness", number(m.skewness)},
                     {"skewness_se", m.skewness_se},
                     {"excess_kurtosis", number(m.excess_kurtosis)},
                     {"excess_kurtosis_se", m.excess_kurtosis_se}});
  return json{{"n", r.n},
              {"roots", roots},
              {"max_mean_gap", r.max_mean_gap},
              {"max_mean_gap_in_se", number(r.max_mean_gap_in_se)},
              {"gaussian_consistent", r.gaussian_consistent}};
}

inline void write_csv(std::ostream& out, const CltReport& r) {
  out << "n,root_state,count,mean,mean_se,variance,skewness,excess_kurtosis\n";
  for (const auto& m : r.roots)
    out << r.n << ',' << m.root_state + 1 << ',' << m.count << ',' << format_double(m.mean) << ','
        << format_double(m.mean_se) << ',' << format_double(m.variance) << ',' << format_double(m.skewness) << ','
        << format_double(m.excess_kurtosis) << '\n';
}

inline json to_json(const CovPairResult& r) {
  return json{{"m", r.pair.m},
              {"u", r.pair.u},
              {"v", r.pair.v},
              {"distance", r.distance},
              {"repeats", r.per_repeat.size()},
              {"cov_hat_mean", r.mean},
              {"se", r.se},
              {"target", r.target},
              {"distance_estimate", r.distance_hat ? json(*r.distance_hat) : json(nullptr)}};
}

inline void write_csv(std::ostream& out, const CovPairResult& r) {
  out << "repeat,cov_hat\n";
  for (std::size_t t = 0; t < r.per_repeat.size(); ++t) out << t << ',' << format_double(r.per_repeat[t]) << '\n';
}

}  // namespace ksm
