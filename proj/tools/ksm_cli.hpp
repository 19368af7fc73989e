#pragma once

// Command-line front end: subcommands, option parsing, output files and run
// manifests. Every subcommand option is carried as a string so the resolved
// configuration can be written to a manifest and replayed verbatim.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"

#include "ksm/ksm.hpp"

namespace ksm::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitVerificationFailed = 1, kExitUsage = 2 };

// Resolved configuration of one run: the subcommand and every option value.
struct RunConfig {
  std::string command;
  std::map<std::string, std::string> options;

  bool operator==(const RunConfig&) const = default;
};

struct OutputDigest {
  std::string file;
  std::string sha256;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  RunConfig config;
  std::optional<std::uint64_t> master_seed;
  unsigned threads = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<OutputDigest> outputs;
};

inline json to_json(const RunManifest& m) {
  json outputs = json::array();
  for (const auto& o : m.outputs) outputs.push_back({{"file", o.file}, {"sha256", o.sha256}});
  json options = json::object();
  for (const auto& [k, v] : m.config.options) options[k] = v;
  return json{{"tool_version", m.tool_version},
              {"command", m.config.command},
              {"options", options},
              {"master_seed", m.master_seed ? json(*m.master_seed) : json(nullptr)},
              {"threads", m.threads},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at},
              {"outputs", outputs}};
}

inline RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config.command = j.at("command").get<std::string>();
    for (const auto& [k, v] : j.at("options").items()) m.config.options[k] = v.get<std::string>();
    if (!j.at("master_seed").is_null()) m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.threads = j.value("threads", 0u);
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("file"), o.at("sha256")});
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("malformed manifest: ") + e.what());
  }
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int t = 0; t < len; ++t) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[t]);
  return out.str();
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- value parsing ----------------------------------------------------------

inline std::uint64_t parse_u64(const std::string& name, const std::string& s) {
  try {
    std::size_t pos = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    const auto v = std::stoull(s, &pos, 10);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, "--" + name + " expects a non-negative integer, got \"" + s + "\"");
  }
}

inline unsigned parse_level(const std::string& name, const std::string& s) {
  const auto v = parse_u64(name, s);
  if (v > 1000) throw Error(ErrorKind::ParseError, "--" + name + " is out of range");
  return static_cast<unsigned>(v);
}

inline double parse_double(const std::string& name, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, "--" + name + " expects a number, got \"" + s + "\"");
  }
}

inline std::vector<double> parse_list(const std::string& name, const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(name, item));
  return out;
}

inline bool parse_switch(const std::string& name, const std::string& s) {
  if (s == "on" || s == "true") return true;
  if (s == "off" || s == "false") return false;
  throw Error(ErrorKind::ParseError, "--" + name + " expects on|off, got \"" + s + "\"");
}

// "stationary" or "state:<i>" with i 1-based.
inline RootCondition parse_root(const std::string& s, std::size_t k) {
  if (s == "stationary") return RootCondition::stationary();
  if (s.rfind("state:", 0) == 0) {
    const auto i = parse_u64("root", s.substr(6));
    if (i < 1 || i > k) throw Error(ErrorKind::ParseError, "--root state index must be in 1.." + std::to_string(k));
    return RootCondition::fixed(i - 1);
  }
  throw Error(ErrorKind::ParseError, "--root expects stationary or state:<i>, got \"" + s + "\"");
}

// ---- run context ------------------------------------------------------------

class RunContext {
 public:
  RunContext(RunConfig config, std::optional<std::string> out_dir, unsigned threads, std::ostream& out,
             std::ostream& err)
      : config_(std::move(config)), out_dir_(std::move(out_dir)), threads_(threads), out_(out), err_(err) {
    manifest_.config = config_;
    manifest_.threads = threads;
    manifest_.started_at = utc_now();
  }

  const std::string& opt(const std::string& name) const { return config_.options.at(name); }
  unsigned threads() const { return threads_; }
  bool has_out_dir() const { return out_dir_.has_value(); }
  std::ostream& err() { return err_; }
  void set_seed(std::uint64_t seed) { manifest_.master_seed = seed; }

  // The primary JSON document goes to stdout and, with --out-dir, to a file.
  void emit_json(const std::string& file, const json& doc) {
    const std::string text = doc.dump(2) + "\n";
    out_ << text;
    write_file(file, text);
  }

  void write_file(const std::string& file, const std::string& text) {
    if (!out_dir_) return;
    std::filesystem::create_directories(*out_dir_);
    std::ofstream f(std::filesystem::path(*out_dir_) / file, std::ios::binary);
    f << text;
    if (!f) throw Error(ErrorKind::ParseError, "cannot write " + file);
    manifest_.outputs.push_back({file, sha256_hex(text)});
  }

  void finish() {
    if (!out_dir_) return;
    manifest_.finished_at = utc_now();
    std::ofstream f(std::filesystem::path(*out_dir_) / "manifest.json", std::ios::binary);
    f << to_json(manifest_).dump(2) << "\n";
  }

 private:
  RunConfig config_;
  std::optional<std::string> out_dir_;
  unsigned threads_;
  std::ostream& out_;
  std::ostream& err_;
  RunManifest manifest_;
};

// ---- subcommands --------------------------------------------------------------

inline SpectralData load_spectral(const RunContext& ctx) {
  const Model model = load_model(ctx.opt("model"));
  return analyze(model.channel, model.b);
}

inline int run_analyze(RunContext& ctx) {
  ctx.emit_json("spectral.json", to_json(load_spectral(ctx)));
  return kExitOk;
}

inline int run_simulate(RunContext& ctx) {
  const SpectralData sd = load_spectral(ctx);
  SimSpec spec{sd, parse_level("n", ctx.opt("n")), parse_root(ctx.opt("root"), sd.k()),
               parse_u64("replicas", ctx.opt("replicas")), parse_u64("seed", ctx.opt("seed"))};
  ctx.set_seed(spec.master_seed);
  const auto zetas = parse_list("zeta", ctx.opt("zeta"));
  BatchOptions options{parse_list("square-zeta", ctx.opt("square-zeta")), ctx.threads()};
  const bool per_replica = parse_switch("per-replica", ctx.opt("per-replica"));
  if (per_replica && !ctx.has_out_dir())
    throw Error(ErrorKind::ParseError, "--per-replica on requires --out-dir");

  const BatchSummary summary = run_batch(spec, zetas, options);
  json doc = to_json(summary);
  doc["census_check"] = to_json(census_distribution_check(spec, summary));
  ctx.emit_json("summary.json", doc);
  if (per_replica) {
    std::ostringstream csv;
    write_replica_csv_header(csv, sd.k());
    for (std::uint64_t r = 0; r < spec.replicas; ++r) write_replica_csv_row(csv, r, sample_replica(spec, r));
    ctx.write_file("replicas.csv", csv.str());
  }
  ctx.err() << "simulate: " << summary.replicas << " replicas at n=" << spec.n << " done" << std::endl;
  return kExitOk;
}

inline int run_oracle(RunContext& ctx) {
  const SpectralData sd = load_spectral(ctx);
  const unsigned n = parse_level("n", ctx.opt("n"));
  const auto zetas = parse_list("zeta", ctx.opt("zeta"));
  const std::string& mode = ctx.opt("mode");
  std::ostringstream csv;
  json doc;
  if (mode == "mgf") {
    const auto table = mgf_exact(sd, n, zetas);
    doc = to_json(table);
    write_csv(csv, table);
  } else if (mode == "moments") {
    const auto table = moments_exact(sd, n);
    doc = to_json(table);
    write_csv(csv, table);
  } else if (mode == "brute") {
    doc = json::array();
    csv << "n,i,zeta,value\n";
    for (std::size_t i = 0; i < sd.k(); ++i) {
      const auto r = brute_force(sd, n, i);
      json entry = to_json(r);
      json gammas = json::array();
      for (double z : zetas) {
        gammas.push_back({{"zeta", z}, {"gamma", r.log_mgf(z)}});
        csv << n << ',' << i + 1 << ',' << format_double(z) << ',' << format_double(r.log_mgf(z)) << '\n';
      }
      entry["gamma"] = gammas;
      doc.push_back(std::move(entry));
    }
  } else if (mode == "square") {
    const auto nodes = parse_u64("nodes", ctx.opt("nodes"));
    doc = json::array();
    csv << "n,i,zeta,value\n";
    for (double z : zetas) {
      const auto r = square_mgf_quadrature(sd, n, z, nodes);
      doc.push_back(to_json(r));
      for (std::size_t i = 0; i < sd.k(); ++i)
        csv << n << ',' << i + 1 << ',' << format_double(z) << ',' << format_double(r.value[i]) << '\n';
    }
  } else {
    throw Error(ErrorKind::ParseError, "--mode expects mgf|moments|brute|square, got \"" + mode + "\"");
  }
  ctx.emit_json("oracle.json", doc);
  ctx.write_file("oracle.csv", csv.str());
  return kExitOk;
}

inline int run_verify_mgf(RunContext& ctx) {
  const SpectralData sd = load_spectral(ctx);
  const unsigned n_max = parse_level("n-max", ctx.opt("n-max"));
  const auto zetas = parse_list("zeta", ctx.opt("zeta"));
  const bool assert_bounded = parse_switch("assert-bounded", ctx.opt("assert-bounded"));

  BoundReport report = extract_empirical_c(mgf_exact(sd, n_max, zetas), sd);
  report.model_id = std::filesystem::path(ctx.opt("model")).stem().string();
  const double probe = parse_double("zeta-probe", ctx.opt("zeta-probe"));
  report.corollary = check_corollary_bound(sd, n_max, probe);

  const std::string& c_text = ctx.opt("c");
  const double c = c_text == "auto" ? report.empirical_c.back() + 1e-9 : parse_double("c", c_text);
  const TheoremCheck check = check_theorem_bound(report, c);

  json doc = to_json(report);
  doc["theorem_check"] = to_json(check);
  const bool pass = check.pass && (!assert_bounded || report.uniformly_bounded);
  doc["verdict"] = pass ? "Pass" : "Fail";
  ctx.emit_json("report.json", doc);
  std::ostringstream csv;
  write_csv(csv, check);
  ctx.write_file("bound.csv", csv.str());
  return pass ? kExitOk : kExitVerificationFailed;
}

inline int run_clt(RunContext& ctx) {
  const SpectralData sd = load_spectral(ctx);
  if (classify_phase(sd) != Phase::SubCritical)
    throw Error(ErrorKind::WrongPhase, "clt needs a sub-critical model (b lambda^2 < 1)");
  const unsigned n = parse_level("n", ctx.opt("n"));
  const auto replicas = parse_u64("replicas", ctx.opt("replicas"));
  const auto seed = parse_u64("seed", ctx.opt("seed"));
  ctx.set_seed(seed);
  const auto batch = run_per_root_batches(sd, n, replicas, seed, {}, {{}, ctx.threads()});
  const CltReport report = clt_diagnostics(sd, batch);
  json doc = to_json(report);
  doc["verdict"] = report.gaussian_consistent ? "Pass" : "Fail";
  ctx.emit_json("clt.json", doc);
  std::ostringstream csv;
  write_csv(csv, report);
  ctx.write_file("clt.csv", csv.str());
  return report.gaussian_consistent ? kExitOk : kExitVerificationFailed;
}

inline int run_cov(RunContext& ctx) {
  const SpectralData sd = load_spectral(ctx);
  const unsigned n = parse_level("n", ctx.opt("n"));
  NodePair pair;
  pair.m = parse_level("m", ctx.opt("m"));
  const std::string& p = ctx.opt("pair");
  const auto comma = p.find(',');
  if (comma == std::string::npos) throw Error(ErrorKind::ParseError, "--pair expects u,v");
  pair.u = parse_u64("pair", p.substr(0, comma));
  pair.v = parse_u64("pair", p.substr(comma + 1));
  const auto ell = parse_u64("ell", ctx.opt("ell"));
  const auto repeats = parse_u64("repeats", ctx.opt("repeats"));
  const auto seed = parse_u64("seed", ctx.opt("seed"));
  ctx.set_seed(seed);
  if (pair.m >= n) throw Error(ErrorKind::InvalidPair, "pair level m must be below n");
  const auto results = run_cov_experiment(sd, n, {pair}, ell, repeats, seed, ctx.threads());
  ctx.emit_json("cov.json", to_json(results.front()));
  std::ostringstream csv;
  write_csv(csv, results.front());
  ctx.write_file("cov_repeats.csv", csv.str());
  return kExitOk;
}

// ---- dispatch -----------------------------------------------------------------

struct OptionSpec {
  std::string name;
  std::optional<std::string> default_value;  // empty: required
  std::string help;
};

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<OptionSpec> options;
  int (*run)(RunContext&);
};

inline const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> table = {
      {"analyze", "Spectral data of a channel model", {{"model", {}, "model JSON file"}}, run_analyze},
      {"simulate",
       "Monte Carlo batch of the broadcast process",
       {{"model", {}, "model JSON file"},
        {"n", {}, "tree depth"},
        {"root", "stationary", "stationary | state:<i>"},
        {"replicas", {}, "number of replicas"},
        {"seed", "0", "master seed"},
        {"zeta", "", "comma list of zeta values for E[exp(zeta S_n)]"},
        {"square-zeta", "", "comma list of zeta values for E[exp(zeta S_n^2)]"},
        {"per-replica", "off", "on|off: write replicas.csv to --out-dir"}},
       run_simulate},
      {"oracle",
       "Exact MGF/moment tables, brute-force law, square-MGF quadrature",
       {{"model", {}, "model JSON file"},
        {"n", {}, "level (n_max for mgf/moments)"},
        {"zeta", "", "comma list of zeta values"},
        {"mode", "mgf", "mgf | moments | brute | square"},
        {"nodes", "64", "Gauss-Hermite nodes (square mode)"}},
       run_oracle},
      {"verify-mgf",
       "Extract empirical constants and check the exponential-moment bound",
       {{"model", {}, "model JSON file"},
        {"n-max", "12", "largest level"},
        {"zeta", "-10,-8,-4,-2,-1,-0.5,-0.25,0.25,0.5,1,2,4,8,10", "comma list of zeta values"},
        {"c", "auto", "auto | <float>"},
        {"zeta-probe", "0.05", "probe for the square-MGF bound"},
        {"assert-bounded", "on", "on|off: fail unless empirical c is uniformly bounded"}},
       run_verify_mgf},
      {"clt",
       "Gaussian diagnostics of Q_n below the Kesten-Stigum threshold",
       {{"model", {}, "model JSON file"},
        {"n", {}, "tree depth"},
        {"replicas", {}, "replicas per root state"},
        {"seed", "0", "master seed"}},
       run_clt},
      {"cov",
       "Deep covariance between reconstructed internal states",
       {{"model", {}, "model JSON file"},
        {"n", {}, "leaf level"},
        {"m", {}, "level of the internal pair"},
        {"pair", {}, "u,v: 0-based indices within level m"},
        {"ell", {}, "samples per repeat"},
        {"seed", "0", "master seed"},
        {"repeats", "1", "independent repeats"}},
       run_cov},
  };
  return table;
}

inline unsigned threads_from_env() {
  if (const char* env = std::getenv("KSM_THREADS")) {
    try {
      return static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
    }
  }
  return 0;
}

inline int run_command(const CommandSpec& cmd, RunConfig config, std::optional<std::string> out_dir, unsigned threads,
                       std::ostream& out, std::ostream& err) {
  RunContext ctx(std::move(config), std::move(out_dir), threads, out, err);
  const int code = cmd.run(ctx);
  ctx.finish();
  return code;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline int replay(const std::string& manifest_path, std::optional<std::string> out_dir, unsigned threads,
                  std::ostream& out, std::ostream& err) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open manifest " + manifest_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  const RunManifest m = manifest_from_json(doc);
  for (const auto& cmd : commands())
    if (cmd.name == m.config.command) return run_command(cmd, m.config, std::move(out_dir), threads, out, err);
  throw Error(ErrorKind::ParseError, "manifest names unknown command " + m.config.command);
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear root-state estimator on b-ary trees: simulation, exact oracles, bound checks", "ksm"};
  app.require_subcommand(1);
  unsigned threads = 0;
  std::string out_dir;

  std::map<std::string, std::map<std::string, std::string>> values;
  std::vector<std::pair<const CommandSpec*, CLI::App*>> subs;
  for (const auto& cmd : commands()) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    auto& vals = values[cmd.name];
    for (const auto& o : cmd.options) {
      auto* opt = sub->add_option("--" + o.name, vals[o.name], o.help);
      if (o.default_value) {
        vals[o.name] = *o.default_value;
        opt->capture_default_str();
      } else {
        opt->required();
      }
    }
    sub->add_option("--threads", threads, "worker threads (default: KSM_THREADS or all cores)");
    sub->add_option("--out-dir", out_dir, "write outputs and manifest.json here");
    subs.emplace_back(&cmd, sub);
  }
  std::string manifest_path;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Re-run the configuration recorded in a manifest");
  replay_cmd->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required();
  replay_cmd->add_option("--threads", threads, "worker threads");
  replay_cmd->add_option("--out-dir", out_dir, "write outputs and manifest.json here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (app.exit(e, out, err) == 0) return kExitOk;
    err << app.help();
    return kExitUsage;
  }

  if (threads == 0) threads = threads_from_env();
  std::optional<std::string> dir = out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir);
  try {
    if (replay_cmd->parsed()) return replay(manifest_path, dir, threads, out, err);
    for (const auto& [cmd, sub] : subs)
      if (sub->parsed()) return run_command(*cmd, RunConfig{cmd->name, values[cmd->name]}, dir, threads, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace ksm::cli
