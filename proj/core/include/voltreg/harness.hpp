#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "voltreg/ddpg.hpp"
#include "voltreg/evaluation.hpp"
#include "voltreg/profiles.hpp"
#include "voltreg/surrogate.hpp"
#include "voltreg/vr_env.hpp"

namespace voltreg {

/// Everything a run depends on. Serializes to JSON; together with `seed` it
/// fully determines every output file.
struct RunConfig {
  std::filesystem::path feeder;    // empty = bundled feeder10.json
  std::filesystem::path profiles;  // profile CSV; empty = synthetic
  SyntheticProfileConfig synthetic;
  std::size_t test_days = 30;
  std::uint64_t seed = 1;
  DatasetConfig dataset;
  SurrogateConfig surrogate;
  AgentConfig agent;
  RewardConfig reward;
  FastRampConfig fast_ramp;
  std::string monitor;  // node-phase label for the fast-fluctuation trace; empty = hottest
  std::filesystem::path out = "runs/default";
};

RunConfig parse_run_config(const std::string& json_text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

/// Independent seed for a named stage, derived from the run seed.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage);

std::filesystem::path bundled_feeder_path();

/// Feeder, profiles and the train/test day split for a run.
struct Workspace {
  Feeder feeder;
  ProfileSet profiles;
  std::vector<std::size_t> train_days;
  std::vector<std::size_t> test_days;
};

Workspace load_workspace(const RunConfig& cfg);

enum class Backend { kSurrogate, kTrueModel };
std::string backend_name(Backend b);
Backend parse_backend(const std::string& name);

struct GenDataSummary {
  std::size_t samples = 0;
  std::size_t discarded = 0;
  std::filesystem::path dataset_csv;
};

struct SurrogateSummary {
  MaeReport mae;
  double first_loss = 0.0;
  double final_loss = 0.0;
  std::filesystem::path checkpoint;
};

struct AgentSummary {
  Backend backend = Backend::kSurrogate;
  std::vector<double> returns;
  std::uint64_t solver_calls = 0;  // power-flow solves made during training
  std::size_t nonconverged_steps = 0;
  std::filesystem::path checkpoint;
};

struct CompareSummary {
  std::vector<EvalReport> reports;  // no-control, proposed, truemodel
};

struct FastFluctSummary {
  std::string monitor;
  std::vector<double> pv_mw;  // first PV's output per second
  std::vector<double> no_control, proposed, truemodel;  // monitored |V| per second
  double proposed_within_fraction = 0.0;
  double truemodel_within_fraction = 0.0;
  std::size_t no_control_violations = 0;
  double mean_latency_ms = 0.0;
  double max_latency_ms = 0.0;
};

struct PfSummary {
  VoltageSolution solution;
  double max_mismatch = 0.0;
};

/// Each command reads and writes files under cfg.out and logs to `log`.
GenDataSummary cmd_gen_data(const RunConfig& cfg, std::ostream& log);
SurrogateSummary cmd_train_surrogate(const RunConfig& cfg, std::ostream& log);
AgentSummary cmd_train_agent(const RunConfig& cfg, Backend backend, std::ostream& log);
CompareSummary cmd_compare(const RunConfig& cfg, std::ostream& log);
FastFluctSummary cmd_fast_fluct(const RunConfig& cfg, std::ostream& log);
/// Solves one (day, hour) operating point with zero reactive setpoints.
PfSummary cmd_pf(const RunConfig& cfg, std::size_t day, int hour, std::ostream& log);

}  // namespace voltreg
