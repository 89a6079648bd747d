// Command-line front end: run, compare, oracle.

#include "dlmc/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> output_dir;
  std::optional<double> cost;
  std::optional<int> max_iterations;
  std::vector<std::string> sets;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--seed", o.seed, "Override the config seed");
  app->add_option("--workers", o.workers, "Worker threads");
  app->add_option("--output-dir", o.output_dir, "Output directory");
  app->add_option("--cost-per-call-seconds", o.cost, "Simulated seconds per likelihood call");
  app->add_option("--max-iterations", o.max_iterations, "Iteration cap");
  app->add_option("--set", o.sets, "Extra key=value overrides")->take_all();
}

dlmc::ExperimentConfig resolve(const std::string& path, const Overrides& o) {
  dlmc::ExperimentConfig c = path.empty() ? dlmc::ExperimentConfig{} : dlmc::load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.cost) c.cost_per_likelihood_call = *o.cost;
  if (o.max_iterations) c.max_iterations = *o.max_iterations;
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw dlmc::ConfigError("--set expects key=value, got '" + kv + "'");
    dlmc::set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  dlmc::validate(c);
  return c;
}

std::string fmt(const nlohmann::ordered_json& v) {
  if (v.is_null()) return "-";
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v.get<double>());
    return buf;
  }
  return v.is_string() ? v.get<std::string>() : v.dump();
}

void print_table(const std::vector<nlohmann::ordered_json>& rows) {
  const std::vector<std::string> cols{"method", "target", "dim", "seed", "converged", "iterations",
                                      "likelihood_calls", "parallel_seconds", "b2_mean", "b2_max"};
  for (const auto& c : cols) std::cout << c << '\t';
  std::cout << '\n';
  for (const auto& r : rows) {
    for (const auto& c : cols) std::cout << (r.contains(c) ? fmt(r[c]) : "-") << '\t';
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic Langevin Monte Carlo experiments"};
  app.require_subcommand(1);
  std::string log_level = "warning";
  app.add_option("--log-level", log_level, "debug, info, warning or error");

  Overrides run_o;
  std::string run_config;
  auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
  run->add_option("config_file", run_config, "Config file");
  run->add_option("--config", run_config, "Config file");
  add_overrides(run, run_o);

  Overrides cmp_o;
  std::vector<std::string> cmp_configs;
  bool summaries_only = false;
  auto* cmp = app.add_subcommand("compare", "Run several configs (or read their summaries) and tabulate");
  cmp->add_option("configs", cmp_configs, "Config files")->required();
  cmp->add_flag("--summaries-only", summaries_only, "Read summary.json from each output directory instead of running");
  add_overrides(cmp, cmp_o);

  Overrides orc_o;
  std::string orc_target, orc_config, orc_out;
  auto* orc = app.add_subcommand("oracle", "Compute reference moments for a target and store them");
  orc->add_option("target", orc_target, "Target name (overrides the config)");
  orc->add_option("--config", orc_config, "Config file");
  orc->add_option("--output", orc_out, "Reference file path")->required();
  add_overrides(orc, orc_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (log_level == "debug") dlmc::set_log_level(dlmc::LogLevel::debug);
    else if (log_level == "info") dlmc::set_log_level(dlmc::LogLevel::info);
    else if (log_level == "warning") dlmc::set_log_level(dlmc::LogLevel::warning);
    else if (log_level == "error") dlmc::set_log_level(dlmc::LogLevel::error);
    else throw dlmc::ConfigError("unknown log level '" + log_level + "'");

    if (*run) {
      const dlmc::ExperimentConfig c = resolve(run_config, run_o);
      const dlmc::RunArtifacts a = dlmc::run_and_emit(c);
      auto s = dlmc::summary_json(a);
      s.erase("final_mean");
      s.erase("final_second_moment");
      std::cout << s.dump(1) << '\n';
      if (a.failed) return 1;
      return a.converged ? 0 : 2;
    }
    if (*cmp) {
      std::vector<nlohmann::ordered_json> rows;
      bool all_converged = true;
      for (const auto& p : cmp_configs) {
        const dlmc::ExperimentConfig c = resolve(p, cmp_o);
        nlohmann::ordered_json s;
        if (summaries_only) {
          s = nlohmann::ordered_json::parse(dlmc::read_json_file(std::filesystem::path(c.output_dir) / "summary.json").dump());
        } else {
          const dlmc::RunArtifacts a = dlmc::run_and_emit(c);
          if (a.failed) return 1;
          s = dlmc::summary_json(a);
        }
        all_converged = all_converged && s.value("converged", false);
        rows.push_back(s);
      }
      print_table(rows);
      return all_converged ? 0 : 2;
    }
    if (*orc) {
      dlmc::ExperimentConfig c = resolve(orc_config, orc_o);
      if (!orc_target.empty()) c.target = orc_target;
      dlmc::validate(c);
      std::optional<dlmc::ReferenceMoments> r = dlmc::oracle_reference(c);
      if (!r) r = dlmc::reference_run(c, dlmc::make_target(c));
      dlmc::save_reference(*r, orc_out);
      std::cout << dlmc::reference_to_json(*r).dump(1) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
