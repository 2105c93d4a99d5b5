// Experiment runner: one subcommand per recipe. Exit codes: 0 success,
// 1 configuration error, 2 runtime error.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relearn/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"relearn: forget-and-relearn experiment workbench"};
  app.require_subcommand(1);

  struct Args {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = "runs";
    std::vector<std::string> sets;
  };
  std::vector<std::pair<relearn::ExperimentKind, Args>> subs;
  subs.reserve(relearn::all_experiments().size());
  for (relearn::ExperimentKind kind : relearn::all_experiments()) {
    subs.push_back({kind, Args{}});
    auto* sub = app.add_subcommand(relearn::to_string(kind));
    Args& a = subs.back().second;
    sub->add_option("--config", a.config_path, "key=value config file");
    sub->add_option("--seed", a.seed, "run seed")->default_val("0");
    sub->add_option("--out", a.out_dir, "output directory")->default_val("runs");
    sub->add_option("--set", a.sets, "override, key=value (repeatable)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto& [kind, a] : subs) {
      if (!app.got_subcommand(relearn::to_string(kind))) continue;
      std::vector<std::pair<std::string, std::string>> overrides;
      for (const std::string& s : a.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos)
          throw relearn::ConfigError("--set expects key=value, got '" + s + "'");
        overrides.push_back({s.substr(0, eq), s.substr(eq + 1)});
      }
      std::optional<std::filesystem::path> file;
      if (!a.config_path.empty()) file = a.config_path;
      relearn::ExperimentConfig cfg =
          relearn::make_config(kind, a.seed, a.out_dir, file, overrides);
      relearn::RunArtifacts art = relearn::run_experiment(cfg);
      std::printf("run complete: %s\n", art.run_dir.string().c_str());
      return 0;
    }
    std::fprintf(stderr, "no experiment selected\n");
    return 1;
  } catch (const relearn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
