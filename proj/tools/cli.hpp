#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ddsc/ddsc.hpp"

namespace ddsc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode { ok = 0, usage = 1, data_error = 2, solver_error = 3 };

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a(read_file(p))); }

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Flags whose values are paths; the manifest stores them absolute so a
// replay works from any working directory.
inline const std::set<std::string>& path_flags() {
  static const std::set<std::string> s{"--in", "--out", "--images", "--labels", "--run", "--cache", "--manifest"};
  return s;
}

inline std::vector<std::string> absolutize_paths(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    const auto eq = a.find('=');
    if (eq != std::string::npos && path_flags().count(a.substr(0, eq))) {
      out.push_back(a.substr(0, eq + 1) + fs::absolute(a.substr(eq + 1)).lexically_normal().string());
    } else if (path_flags().count(a) && i + 1 < args.size()) {
      out.push_back(a);
      out.push_back(fs::absolute(args[++i]).lexically_normal().string());
    } else {
      out.push_back(a);
    }
  }
  return out;
}

/// Bookkeeping for one command: inputs, outputs and stage times, written as
/// manifest.json next to the outputs.
struct Run {
  std::string command;
  std::vector<std::string> args;
  fs::path out_dir;
  std::optional<std::uint64_t> seed;
  json flags = json::object();
  json inputs = json::array();
  json outputs = json::array();
  StageTimings timings;

  void input(const fs::path& p) { inputs.push_back({{"path", fs::absolute(p).lexically_normal().string()}, {"hash", file_hash(p)}}); }

  void write(const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    write_file_atomic(path, content);
    outputs.push_back(fs::absolute(path).lexically_normal().string());
  }

  void finish() {
    json t = json::object();
    for (const auto& [stage, secs] : timings.stages) t[stage] = secs;
    json m{{"command", command}, {"args", args},       {"flags", flags},     {"inputs", inputs},
           {"outputs", outputs}, {"wall_times", t},    {"tool_version", kVersion}};
    m["seed"] = seed ? json(*seed) : json(nullptr);
    write_file_atomic(out_dir / "manifest.json", m.dump(2) + "\n");
  }
};

inline void collect_flags(const CLI::App& sub, Run& run) {
  for (const auto* o : sub.get_options()) {
    if (o->get_name() == "--help" || o->get_lnames().empty()) continue;
    const auto& name = o->get_lnames().front();
    if (o->count() > 0) {
      const auto res = o->results();
      run.flags[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else if (!o->get_default_str().empty()) {
      run.flags[name] = o->get_default_str();
    }
  }
}

inline std::optional<double> parse_gamma(const std::string& s) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double g = std::stod(s, &used);
    if (used != s.size() || !(g > 0.0)) throw std::invalid_argument("gamma");
    return g;
  } catch (const std::exception&) {
    throw Error(Errc::invalid_config, "--gamma must be 'auto' or a positive number, got '" + s + "'");
  }
}

inline DistributionSet load_set(const fs::path& p, Run& run) {
  run.input(p);
  return timed(run.timings, "load", [&] { return load_jsonl(p); });
}

inline std::vector<std::string> ids_of(const DistributionSet& set) {
  std::vector<std::string> ids;
  for (const auto& d : set.distributions) ids.push_back(d.id);
  return ids;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

namespace detail {

struct Options {
  // shared
  fs::path in, out, cache;
  std::uint64_t seed = 0;
  std::string metric = "mmd";
  double epsilon = 1.0;
  double sigma = 0.0;  // 0 = median heuristic
  double fraction = 1.0;
  // synth
  int n_per_class = 20, m = 40;
  double jitter = 0.0;
  // cluster
  std::string method = "ddsc", gamma = "auto";
  int k = 2, tau = 10, m0 = 0;
  // noise sweep
  std::string sigmas = "0:3:0.25";
  std::string metrics = "mmd,sinkhorn:5,sinkhorn:10,sinkhorn:50,sinkhorn:100,sinkhorn:500,wasserstein,lot";
  // consistency
  std::string m_grid = "5,10,20,40";
  // bounds
  fs::path run_dir;
  double b_m = 0, b_epsilon = 1, b_theta = 0.05, b_kappa = 1, b_b = 1, b_eta = 1, b_psi = 1;
  double b_gamma = 0, b_tau = 0, b_n = 0, b_xi = -1;
  bool json_out = false;
  // import-idx
  fs::path images, labels;
  int per_class = 100;
  // replay
  fs::path manifest;
};

inline MetricParams metric_params(const Options& o) {
  MetricParams p;
  p.metric = parse_metric(o.metric);
  p.epsilon = o.epsilon;
  if (o.sigma > 0.0) p.sigma = o.sigma;
  return p;
}

inline DistanceMatrix distances(const DistributionSet& set, const Options& o, Run& run) {
  const auto params = metric_params(o);
  return timed(run.timings, "distmat", [&] {
    if (o.cache.empty()) return build_distance_matrix(set, params, o.fraction, o.seed);
    return load_or_build_distance_matrix(o.cache, set, params, o.fraction, o.seed);
  });
}

inline void cmd_synth(const Options& o, Run& run) {
  SyntheticConfig cfg;
  cfg.n_per_class = o.n_per_class;
  cfg.m = o.m;
  cfg.jitter = o.jitter;
  cfg.seed = o.seed;
  const auto set = timed(run.timings, "generate", [&] { return generate_synthetic(cfg); });
  run.write("synthetic.jsonl", to_jsonl(set));
  run.write("labels.csv", labels_csv(ids_of(set), set.labels()));
}

inline void cmd_distmat(const Options& o, Run& run, std::ostream& out) {
  const auto set = load_set(o.in, run);
  const auto d = distances(set, o, run);
  run.write("distmat.csv", to_cache_text(d));
  out << "distmat: " << d.size() << "x" << d.size() << ", " << d.computed_pairs() << " computed pairs, " << d.params << "\n";
  if (d.unconverged) out << "warning: " << d.unconverged << " Sinkhorn pairs did not reach tolerance\n";
}

inline json cmd_cluster(const Options& o, Run& run, std::ostream& out) {
  const auto set = load_set(o.in, run);
  const auto gamma = parse_gamma(o.gamma);
  const auto n = static_cast<Eigen::Index>(set.size());
  json report{{"method", o.method}};
  json diag{{"n", n}, {"m", mean_support_count(set)}, {"alpha", nullptr}, {"delta", nullptr}, {"tau", nullptr}, {"gamma", nullptr}};
  std::vector<int> labels;

  auto spectral_report = [&](const SpectralResult& r) {
    diag["alpha"] = r.alpha;
    diag["delta"] = r.delta;
    diag["tau"] = r.graph.tau;
    diag["gamma"] = r.graph.gamma;
    json ev = json::array();
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(r.embedding.eigenvalues.size(), o.k + 1); ++i) ev.push_back(r.embedding.eigenvalues[i]);
    diag["eigenvalues"] = ev;
    for (const auto& [stage, secs] : r.timings.stages) run.timings.add(stage, secs);
    if (set.has_labels()) {
      const auto c = check_connectivity(r.graph, set.labels());
      report["connectivity"] = {{"components", c.components}, {"no_inter_class_edges", c.no_inter_class_edges}, {"xi", number_or_null(c.xi)}};
    }
  };

  if (o.method == "ddsc") {
    const auto d = distances(set, o, run);
    const auto r = spectral_cluster(d, o.k, o.tau, gamma, o.seed);
    spectral_report(r);
    labels = r.assignment.labels;
    report["metric"] = o.metric;
    report["params"] = d.params;
    diag["computed_pairs"] = d.computed_pairs();
    diag["unconverged_pairs"] = d.unconverged;
  } else if (o.method == "sc-mean") {
    const auto r = timed(run.timings, "sc_on_means", [&] { return sc_on_means(set, o.k, o.tau, gamma, o.seed); });
    spectral_report(r);
    labels = r.assignment.labels;
  } else if (o.method == "kmeans-mean") {
    labels = timed(run.timings, "kmeans", [&] { return kmeans_on_means(set, o.k, o.seed); }).labels;
  } else if (o.method == "d2") {
    const auto r = timed(run.timings, "d2", [&] { return d2_clustering(set, o.k, o.m0, o.seed); });
    labels = r.assignment.labels;
    report["objective_history"] = r.sq_objective_history;
    report["outer_iterations"] = r.outer_iterations;
  } else {
    throw Error(Errc::invalid_config, "unknown method '" + o.method + "'");
  }

  report["ami"] = nullptr;
  report["ari"] = nullptr;
  if (set.has_labels()) {
    report["ami"] = ami(set.labels(), labels);
    report["ari"] = ari(set.labels(), labels);
  }
  json t = json::object();
  for (const auto& [stage, secs] : run.timings.stages) t[stage] = secs;
  report["timings"] = t;
  report["diagnostics"] = diag;
  run.write("labels.csv", labels_csv(ids_of(set), labels));
  run.write("report.json", report.dump(2) + "\n");
  out << o.method << ": " << n << " distributions, K = " << o.k;
  if (set.has_labels()) out << ", AMI = " << report["ami"].get<double>() << ", ARI = " << report["ari"].get<double>();
  out << "\n";
  return report;
}

inline void cmd_noise_sweep(const Options& o, Run& run, std::ostream& out) {
  const auto set = load_set(o.in, run);
  std::vector<MetricSpec> specs;
  for (const auto& s : split(o.metrics, ',')) specs.push_back(parse_metric_spec(s));
  const auto grid = parse_grid(o.sigmas);
  const auto rows = timed(run.timings, "sweep", [&] { return noise_sweep(set, grid, specs, o.seed); });
  run.write("noise_sweep.csv", noise_sweep_csv(rows));
  out << "noise-sweep: " << rows.size() << " rows (" << grid.size() << " sigmas x " << specs.size() << " metrics)\n";
}

inline void cmd_consistency(const Options& o, Run& run, std::ostream& out) {
  const auto set = load_set(o.in, run);
  std::vector<Eigen::Index> grid;
  for (double v : parse_grid(o.m_grid)) {
    if (v != std::floor(v)) throw Error(Errc::invalid_config, "--m-grid values must be integers");
    grid.push_back(static_cast<Eigen::Index>(v));
  }
  const auto rows = timed(run.timings, "experiment", [&] {
    return empirical_consistency_experiment(set, metric_params(o), grid, o.k, o.tau, parse_gamma(o.gamma), o.seed);
  });
  run.write("consistency.csv", consistency_csv(rows));
  for (const auto& r : rows) out << "m' = " << r.m_prime << ": d = " << r.d << ", AMI = " << r.ami << "\n";
}

inline void cmd_import_idx(const Options& o, Run& run, std::ostream& out) {
  run.input(o.images);
  run.input(o.labels);
  const auto set = timed(run.timings, "import", [&] {
    return load_idx_images(o.images, o.labels, static_cast<std::size_t>(o.per_class), o.seed);
  });
  run.write("mnist.jsonl", to_jsonl(set));
  run.write("labels.csv", labels_csv(ids_of(set), set.labels()));
  out << "import-idx: " << set.size() << " distributions\n";
}

inline void cmd_bounds(const Options& o, Run* run, std::ostream& out, const CLI::App& sub) {
  const auto report_path = o.run_dir / "report.json";
  if (!fs::exists(report_path)) throw Error(Errc::missing_diagnostics, "no report.json in " + o.run_dir.string());
  json report;
  try {
    report = json::parse(read_file(report_path));
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, report_path.string() + ": " + e.what());
  }
  const auto diag = report.value("diagnostics", json::object());
  auto need = [&](const char* key) {
    if (!diag.contains(key) || !diag[key].is_number())
      throw Error(Errc::missing_diagnostics, std::string("run has no spectral diagnostic '") + key + "' (method " +
                                                 report.value("method", std::string("?")) + ")");
    return diag[key].get<double>();
  };
  SpectralDiagnostics sd;
  sd.alpha = need("alpha");
  sd.delta = need("delta");

  BoundInputs in;
  in.m = sub.get_option("--m")->count() ? o.b_m : need("m");
  in.epsilon = o.b_epsilon;
  in.theta = o.b_theta;
  in.gamma = sub.get_option("--gamma")->count() ? o.b_gamma : need("gamma");
  in.tau = sub.get_option("--tau")->count() ? o.b_tau : need("tau");
  in.n = sub.get_option("--n")->count() ? o.b_n : need("n");
  in.kappa = o.b_kappa;
  in.b = o.b_b;
  in.eta = o.b_eta;
  in.psi = o.b_psi;

  std::optional<double> empirical;
  if (report.contains("connectivity") && report["connectivity"]["xi"].is_number()) empirical = report["connectivity"]["xi"].get<double>();
  double xi = o.b_xi;
  if (xi < 0.0) xi = empirical ? std::max(0.0, *empirical) : 0.0;

  sd.zeta = zeta(in);
  json result{{"inputs",
               {{"m", in.m}, {"epsilon", in.epsilon}, {"theta", in.theta}, {"gamma", in.gamma}, {"tau", in.tau}, {"n", in.n},
                {"kappa", in.kappa}, {"b", in.b}, {"eta", in.eta}, {"psi", in.psi}}},
              {"alpha", sd.alpha},
              {"delta", sd.delta},
              {"zeta", sd.zeta},
              {"sinkhorn_error_bound", sinkhorn_error_bound(in)}};
  std::string verdict = "ok";
  try {
    sd.consistency = consistency_bound(sd, in);
    result["consistency_bound"] = sd.consistency;
  } catch (const Error& e) {
    if (e.code() != Errc::vacuous_bound && e.code() != Errc::zero_gap) throw;
    verdict = e.code() == Errc::vacuous_bound ? "vacuous bound" : "zero gap";
    result["consistency_bound"] = nullptr;
  }
  result["verdict"] = verdict;
  const auto c = correctness_condition(in, xi, empirical);
  result["correctness"] = {{"lhs", c.lhs}, {"rhs", c.rhs}, {"xi", xi}, {"holds", c.holds},
                           {"empirical_xi", c.empirical_xi ? json(*c.empirical_xi) : json(nullptr)}};

  if (o.json_out) {
    out << result.dump(2) << "\n";
  } else {
    out << "zeta = " << sd.zeta << "\n";
    if (verdict == "ok")
      out << "consistency bound = " << sd.consistency << "\n";
    else
      out << "consistency bound: " << verdict << " (alpha = " << sd.alpha << ", delta = " << sd.delta << ")\n";
    out << "correctness condition: " << c.lhs << (c.holds ? " <= " : " > ") << c.rhs << " (xi = " << xi << ") -> "
        << (c.holds ? "holds" : "does not hold") << "\n";
  }
  if (run) {
    run->input(report_path);
    run->write("bounds.json", result.dump(2) + "\n");
  }
}

inline void cmd_replay(const Options& o, std::ostream& out, std::ostream& err, int& code) {
  json m;
  try {
    m = json::parse(read_file(o.manifest));
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, o.manifest.string() + ": " + e.what());
  }
  if (!m.contains("args") || !m["args"].is_array()) throw Error(Errc::schema_error, "manifest has no args");
  for (const auto& in : m.value("inputs", json::array())) {
    const fs::path p = in.at("path").get<std::string>();
    if (!fs::exists(p)) throw Error(Errc::io_error, "replay input missing: " + p.string());
    if (file_hash(p) != in.at("hash").get<std::string>()) throw Error(Errc::schema_error, "replay input changed since the run: " + p.string());
  }
  auto args = m["args"].get<std::vector<std::string>>();
  if (!o.out.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") {
        args[i + 1] = o.out.string();
        replaced = true;
      }
    if (!replaced) args.insert(args.end(), {"--out", o.out.string()});
  }
  code = run_cli(args, out, err);
}

}  // namespace detail

/// Parses and runs one command. args excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distribution clustering: divergence matrices, spectral clustering, baselines and bounds", "ddsc"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  detail::Options o;

  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "RNG seed")->required(); };
  auto add_metric = [&](CLI::App* s) {
    s->add_option("--metric", o.metric, "mmd | wasserstein | sinkhorn | lot")
        ->check(CLI::IsMember({"mmd", "wasserstein", "sinkhorn", "lot"}))
        ->capture_default_str();
    s->add_option("--epsilon", o.epsilon, "Sinkhorn regularizer")->capture_default_str();
    s->add_option("--sigma", o.sigma, "MMD kernel bandwidth (0 = median heuristic)")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth", "Write the synthetic square/circle set");
  add_seed(synth);
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--n-per-class", o.n_per_class)->capture_default_str();
  synth->add_option("--m", o.m, "Support points per distribution")->capture_default_str();
  synth->add_option("--jitter", o.jitter)->capture_default_str();

  auto* distmat = app.add_subcommand("distmat", "Compute (or load from cache) a distance matrix");
  distmat->add_option("--in", o.in, "Distribution set (JSONL)")->required()->check(CLI::ExistingFile);
  add_metric(distmat);
  distmat->add_option("--fraction", o.fraction)->capture_default_str();
  add_seed(distmat);
  distmat->add_option("--out", o.out)->required();
  distmat->add_option("--cache", o.cache, "Cache directory");

  auto* cluster = app.add_subcommand("cluster", "Cluster a distribution set");
  cluster->add_option("--in", o.in)->required()->check(CLI::ExistingFile);
  cluster->add_option("--method", o.method)->check(CLI::IsMember({"ddsc", "d2", "kmeans-mean", "sc-mean"}))->capture_default_str();
  add_metric(cluster);
  cluster->add_option("--k", o.k)->capture_default_str();
  cluster->add_option("--tau", o.tau)->capture_default_str();
  cluster->add_option("--gamma", o.gamma, "Kernel parameter or 'auto'")->capture_default_str();
  cluster->add_option("--fraction", o.fraction)->capture_default_str();
  cluster->add_option("--m0", o.m0, "D2 barycenter support size (0 = mean support count)")->capture_default_str();
  add_seed(cluster);
  cluster->add_option("--out", o.out)->required();
  cluster->add_option("--cache", o.cache);

  auto* sweep = app.add_subcommand("noise-sweep", "Median relative error of each metric under Gaussian noise");
  sweep->add_option("--in", o.in)->required()->check(CLI::ExistingFile);
  sweep->add_option("--sigmas", o.sigmas)->capture_default_str();
  sweep->add_option("--metrics", o.metrics)->capture_default_str();
  add_seed(sweep);
  sweep->add_option("--out", o.out)->required();

  auto* bounds = app.add_subcommand("bounds", "Evaluate the consistency and correctness bounds for a finished run");
  bounds->add_option("--run", o.run_dir, "Directory of a cluster run")->required();
  bounds->add_option("--m", o.b_m, "Support count (default: run mean)");
  bounds->add_option("--epsilon", o.b_epsilon)->capture_default_str();
  bounds->add_option("--theta", o.b_theta)->capture_default_str();
  bounds->add_option("--gamma", o.b_gamma, "default: run value");
  bounds->add_option("--tau", o.b_tau, "default: run value");
  bounds->add_option("--n", o.b_n, "default: run value");
  bounds->add_option("--kappa", o.b_kappa)->capture_default_str();
  bounds->add_option("--b", o.b_b)->capture_default_str();
  bounds->add_option("--eta", o.b_eta)->capture_default_str();
  bounds->add_option("--psi", o.b_psi)->capture_default_str();
  bounds->add_option("--xi", o.b_xi, "Margin for the correctness condition (default: empirical)");
  bounds->add_flag("--json", o.json_out);
  bounds->add_option("--out", o.out, "Also write bounds.json here");

  auto* idx = app.add_subcommand("import-idx", "Convert MNIST-style IDX files to a JSONL set");
  idx->add_option("--images", o.images)->required()->check(CLI::ExistingFile);
  idx->add_option("--labels", o.labels)->required()->check(CLI::ExistingFile);
  idx->add_option("--per-class", o.per_class)->capture_default_str();
  add_seed(idx);
  idx->add_option("--out", o.out)->required();

  auto* cons = app.add_subcommand("consistency", "Eigenspace distance under support subsampling");
  cons->add_option("--in", o.in)->required()->check(CLI::ExistingFile);
  add_metric(cons);
  cons->add_option("--m-grid", o.m_grid)->capture_default_str();
  cons->add_option("--k", o.k)->capture_default_str();
  cons->add_option("--tau", o.tau)->capture_default_str();
  cons->add_option("--gamma", o.gamma)->capture_default_str();
  add_seed(cons);
  cons->add_option("--out", o.out)->required();

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  replay->add_option("--out", o.out, "Output directory (default: the original)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? ok : usage;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "replay") {
      int code = ok;
      detail::cmd_replay(o, out, err, code);
      return code;
    }
    Run run;
    run.command = name;
    run.args = absolutize_paths(args);
    run.out_dir = o.out;
    if (sub->get_option_no_throw("--seed")) run.seed = o.seed;
    collect_flags(*sub, run);
    if (name == "synth") detail::cmd_synth(o, run);
    if (name == "distmat") detail::cmd_distmat(o, run, out);
    if (name == "cluster") detail::cmd_cluster(o, run, out);
    if (name == "noise-sweep") detail::cmd_noise_sweep(o, run, out);
    if (name == "consistency") detail::cmd_consistency(o, run, out);
    if (name == "import-idx") detail::cmd_import_idx(o, run, out);
    if (name == "bounds") {
      detail::cmd_bounds(o, o.out.empty() ? nullptr : &run, out, *sub);
      if (o.out.empty()) return ok;
    }
    run.finish();
    return ok;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    if (category(e.code()) == ErrorCategory::solver) return solver_error;
    if (e.code() == Errc::invalid_config || e.code() == Errc::tau_out_of_range) return usage;
    return data_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return data_error;
  }
}

}  // namespace ddsc::cli
