// SPDX-License-Identifier: Apache-2.0
//
// lora-flow: deterministic experiment runner for the LoRA gradient-flow
// library. `lora-flow list` names the experiments; `lora-flow run` executes
// one config and writes <out>/<experiment>.csv plus <out>/summary.json.
//
// Exit codes: 0 all built-in checks pass, 1 a check failed, 2 bad config,
// 3 divergence or math error during the run.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "loraflow/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"LoRA gradient-flow experiment runner"};
  app.require_subcommand(1);

  auto* list_cmd = app.add_subcommand("list", "list the available experiments");
  bool list_json = false;
  list_cmd->add_flag("--json", list_json, "machine-readable JSON array");

  auto* run_cmd = app.add_subcommand("run", "run one experiment from a config");
  std::string config_path;
  run_cmd->add_option("--config", config_path, "path to JSON config")->required();
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  std::optional<std::string> experiment_override;
  run_cmd->add_option("--seed", seed_override, "override config seed");
  run_cmd->add_option("--out", out_override, "override output directory");
  run_cmd->add_option("--experiment", experiment_override,
                      "override experiment name");

  CLI11_PARSE(app, argc, argv);

  if (list_cmd->parsed()) {
    std::cout << (list_json ? loraflow::list_experiments_json()
                            : loraflow::list_experiments_text());
    return 0;
  }

  loraflow::ExperimentConfig cfg;
  try {
    cfg = loraflow::load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (out_override) cfg.out_dir = *out_override;
    if (experiment_override) {
      cfg.experiment = *experiment_override;
      // Re-validate the overridden name against the catalog.
      const auto& catalog = loraflow::experiment_catalog();
      const bool known =
          std::any_of(catalog.begin(), catalog.end(),
                      [&](const auto& e) { return e.first == cfg.experiment; });
      if (!known) {
        throw loraflow::ConfigError("unknown experiment '" + cfg.experiment + "'");
      }
    }
  } catch (const loraflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    const loraflow::RunResult result = loraflow::run_experiment(cfg);
    for (const auto& check : result.summary.at("checks")) {
      std::cout << (check.at("pass").get<bool>() ? "[PASS] " : "[FAIL] ")
                << check.at("name").get<std::string>() << "\n";
    }
    std::cout << (result.pass ? "PASS" : "FAIL") << " " << cfg.experiment
              << " (outputs in " << cfg.out_dir << ")\n";
    return result.pass ? 0 : 1;
  } catch (const loraflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const loraflow::Error& e) {
    std::cerr << "run error (" << cfg.experiment << "): " << e.what() << "\n";
    return 3;
  }
}
