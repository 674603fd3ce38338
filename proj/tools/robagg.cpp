// robagg: simulate, fit-aggregate-detect, tau, check.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "robagg/config.hpp"
#include "robagg/distsim.hpp"
#include "robagg/error.hpp"
#include "robagg/pipeline.hpp"
#include "robagg/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace robagg;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::string> model, c, alpha;
  std::string output;
  bool dry_run = false;
  int verbose = 0;
};

struct StudyOverrides {
  std::optional<std::string> servers, n, seed, replicates, contamination, count, threads;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app->add_option("--model", o.model, "logistic or linear");
  app->add_option("--c", o.c, "Huber constant (inf for the weighted average)");
  app->add_option("--alpha", o.alpha, "detection level");
  app->add_option("-o,--output", o.output, "directory for CSV artifacts");
  app->add_flag("--dry-run", o.dry_run, "validate inputs, compute and write nothing");
  app->add_flag("-v,--verbose", o.verbose, "more output");
}

void push(Overrides& out, const char* key, const std::optional<std::string>& v) {
  if (v) out.emplace_back(key, *v);
}

RunConfig resolve(const CommonOptions& o, const StudyOverrides* s) {
  Overrides ov;
  push(ov, "model", o.model);
  push(ov, "c", o.c);
  push(ov, "alpha", o.alpha);
  if (s) {
    push(ov, "K", s->servers);
    push(ov, "n", s->n);
    push(ov, "seed", s->seed);
    push(ov, "replicates", s->replicates);
    push(ov, "contamination", s->contamination);
    push(ov, "count", s->count);
    push(ov, "threads", s->threads);
  }
  return o.config_path.empty() ? parse_config("", ov) : load_config(o.config_path, ov);
}

// Writes via a temporary file so a failed run leaves no partial artifact.
template <typename Fn>
void write_artifact(const fs::path& path, Fn&& body) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    body(out);
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void prepare_output_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

int run_simulate(const CommonOptions& o, const StudyOverrides& s) {
  const RunConfig cfg = resolve(o, &s);
  const StudyConfig& sc = cfg.study;
  if (sc.replicates < 2) throw ConfigError("simulate needs replicates >= 2");
  std::cout << "simulate: model=" << to_string(sc.model) << " K=" << sc.servers
            << " n=" << sc.shard_size << " c=" << sc.c << " replicates=" << sc.replicates
            << " contamination=" << to_string(sc.contamination.kind) << " count="
            << sc.contamination.resolved_count(sc.servers) << " seed=" << sc.base_seed << '\n';
  if (o.dry_run) {
    std::cout << "dry run: configuration is valid\n";
    return 0;
  }

  const StudyMetrics m = run_study(sc, cfg.threads);

  std::cout << std::setprecision(6);
  std::cout << "replicates: " << m.replicates << " ok, " << m.failed << " failed; tau "
            << m.tau << "; " << m.runtime_seconds << " s\n";
  std::cout << std::left << std::setw(18) << "estimator" << std::setw(6) << "coef" << std::setw(14)
            << "bias" << std::setw(14) << "sd" << std::setw(14) << "ase" << std::setw(10) << "cp"
            << "re\n";
  auto rows = [&](const char* name, const std::vector<CoefficientMetrics>& cm, bool with_re) {
    for (std::size_t j = 0; j < cm.size(); ++j) {
      std::cout << std::setw(18) << name << std::setw(6) << j + 1 << std::setw(14) << cm[j].bias
                << std::setw(14) << cm[j].sd << std::setw(14) << cm[j].ase << std::setw(10)
                << cm[j].cp;
      if (with_re) std::cout << m.re[j];
      std::cout << '\n';
    }
  };
  rows("huber", m.huber, true);
  rows("weighted_average", m.wavg, false);
  std::cout << std::right;

  std::cout << "detection\n";
  std::cout << "  hit rate: ";
  if (m.hit_rate) std::cout << *m.hit_rate << '\n';
  else std::cout << "NA (no contaminated servers)\n";
  std::cout << "  clean-server flag rate: " << m.clean_flag_rate << '\n';
  std::cout << "  servers flagged in most replicates:";
  bool any = false;
  for (std::size_t k = 0; k < m.server_theta_flag_rate.size(); ++k)
    if (m.server_theta_flag_rate[k] > 0.5) {
      std::cout << ' ' << k + 1;
      any = true;
    }
  std::cout << (any ? "\n" : " none\n");
  if (o.verbose) {
    for (std::size_t k = 0; k < m.server_theta_flag_rate.size(); ++k)
      std::cout << "  server " << k + 1 << ": theta " << m.server_theta_flag_rate[k] << ", sigma "
                << m.server_sigma_flag_rate[k] << '\n';
  }

  if (!o.output.empty()) {
    prepare_output_dir(o.output);
    write_artifact(fs::path(o.output) / "metrics.csv", [&](std::ostream& out) { write_metrics_csv(m, out); });
    write_artifact(fs::path(o.output) / "servers.csv", [&](std::ostream& out) {
      out << std::setprecision(17) << "server_id,theta_flag_rate,sigma_flag_rate\n";
      for (std::size_t k = 0; k < m.server_theta_flag_rate.size(); ++k)
        out << k + 1 << ',' << m.server_theta_flag_rate[k] << ',' << m.server_sigma_flag_rate[k] << '\n';
    });
    std::cout << "wrote " << (fs::path(o.output) / "metrics.csv").string() << " and servers.csv\n";
  }
  return 0;
}

int run_fad(const CommonOptions& o, const std::vector<std::string>& paths) {
  const RunConfig cfg = resolve(o, nullptr);
  const std::vector<Shard> shards = read_shards(paths);
  if (o.verbose)
    for (std::size_t k = 0; k < shards.size(); ++k)
      std::cout << "server " << k + 1 << ": " << shards[k].path << " (" << shards[k].data.size()
                << " rows)\n";
  if (o.dry_run) {
    std::cout << "dry run: " << shards.size() << " shards with " << shards.front().covariates.size()
              << " covariates are valid\n";
    return 0;
  }

  const PipelineReport report = fit_aggregate_detect(shards, cfg.study.model, cfg.study.c, cfg.study.alpha);
  print_report(report, std::cout);
  if (!o.output.empty()) {
    prepare_output_dir(o.output);
    write_artifact(fs::path(o.output) / "aggregate.csv",
                   [&](std::ostream& out) { write_aggregate_csv(report, out); });
    write_artifact(fs::path(o.output) / "detection.csv",
                   [&](std::ostream& out) { write_detection_csv(report.detection, out); });
    std::cout << "wrote " << (fs::path(o.output) / "aggregate.csv").string() << " and detection.csv\n";
  }
  return 0;
}

int run_tau(const std::vector<double>& cs) {
  std::cout << std::setprecision(6);
  for (double c : cs) {
    if (!(c > 0.0)) throw DomainError("tau: c must be positive");
    std::cout << "c=" << c << " tau=" << tau_c(c) << " b=" << huber_b(c)
              << " sigma2=" << huber_sigma2(c) << '\n';
  }
  return 0;
}

int run_check() {
  int failed = 0;
  for (const auto& r : run_self_checks()) {
    std::cout << (r.ok ? "PASS " : "FAIL ") << r.name;
    if (!r.ok) {
      std::cout << ": " << r.detail;
      ++failed;
    }
    std::cout << '\n';
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust aggregation of distributed M-estimators"};
  app.require_subcommand(1);

  CommonOptions sim_opts;
  StudyOverrides sim_ov;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study");
  add_common(sim, sim_opts);
  sim->add_option("--K", sim_ov.servers, "number of servers");
  sim->add_option("--n", sim_ov.n, "observations per server");
  sim->add_option("--seed", sim_ov.seed, "base seed");
  sim->add_option("--replicates", sim_ov.replicates, "Monte Carlo replicates");
  sim->add_option("--contamination", sim_ov.contamination, "none, omniscient, gaussian or bitflip");
  sim->add_option("--count", sim_ov.count, "contaminated servers (default floor(K^(1/4)))");
  sim->add_option("--threads", sim_ov.threads, "worker threads (default ROBAGG_THREADS or all cores)");

  CommonOptions fad_opts;
  std::vector<std::string> shard_paths;
  auto* fad = app.add_subcommand("fit-aggregate-detect", "fit one CSV shard per server, aggregate, detect");
  add_common(fad, fad_opts);
  fad->add_option("shards", shard_paths, "shard CSV files, server ids 1..K in this order")->required();

  std::vector<double> tau_cs;
  auto* tau = app.add_subcommand("tau", "efficiency constant tau_c");
  tau->add_option("--c", tau_cs, "Huber constant(s)")->required();

  auto* chk = app.add_subcommand("check", "run invariant self-checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(sim_opts, sim_ov);
    if (fad->parsed()) return run_fad(fad_opts, shard_paths);
    if (tau->parsed()) return run_tau(tau_cs);
    if (chk->parsed()) return run_check();
  } catch (const std::exception& e) {
    std::cerr << "robagg: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
