// voltreg command-line front end.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "voltreg/error.hpp"
#include "voltreg/harness.hpp"

namespace {

using namespace voltreg;

void save_effective_config(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  std::ofstream(cfg.out / "run_config.json") << run_config_to_json(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volt/VAR control with a learned grid surrogate and DDPG"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  app.add_option("--config", config_path, "RunConfig JSON file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "run seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides the config)");

  auto* gen = app.add_subcommand("gen-data", "generate the power-flow dataset");
  auto* sur = app.add_subcommand("train-surrogate", "fit the voltage surrogate on dataset.csv");
  auto* agent = app.add_subcommand("train-agent", "train a DDPG agent");
  std::string backend = "surrogate";
  agent->add_option("--backend", backend, "reward backend")->check(CLI::IsMember({"surrogate", "truemodel"}));
  auto* cmp = app.add_subcommand("compare", "evaluate no-control and both agents on the held-out days");
  auto* fast = app.add_subcommand("fast-fluct", "60 s PV ramp scenario");
  auto* pf = app.add_subcommand("pf", "solve one profile operating point with zero reactive output");
  std::size_t day = 0;
  int hour = 12;
  pf->add_option("--day", day, "profile day index");
  pf->add_option("--hour", hour, "hour of day");
  auto* show = app.add_subcommand("print-config", "print the effective RunConfig as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorCategory::kConfig);
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (*seed_opt) cfg.seed = seed;
    if (*out_opt) cfg.out = out_dir;

    if (*show) {
      std::cout << run_config_to_json(cfg);
      return 0;
    }
    save_effective_config(cfg);
    if (*gen) cmd_gen_data(cfg, std::cout);
    if (*sur) cmd_train_surrogate(cfg, std::cout);
    if (*agent) cmd_train_agent(cfg, parse_backend(backend), std::cout);
    if (*cmp) cmd_compare(cfg, std::cout);
    if (*fast) cmd_fast_fluct(cfg, std::cout);
    if (*pf) cmd_pf(cfg, day, hour, std::cout);
  } catch (const Error& e) {
    std::cerr << "voltreg: " << category_name(e.category()) << " error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "voltreg: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
