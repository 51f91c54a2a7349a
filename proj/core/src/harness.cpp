#include "voltreg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voltreg/csv.hpp"
#include "voltreg/error.hpp"
#include "voltreg/operating_point.hpp"
#include "voltreg/power_flow.hpp"

namespace voltreg {

using nlohmann::json;

// ---------------------------------------------------------------------------
// RunConfig <-> JSON

namespace {

// Reads keys present in `j` into the fields, rejecting unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCategory::kConfig, where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      field = it->template get<T>();
    } catch (const json::exception&) {
      fail(ErrorCategory::kConfig, where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(ErrorCategory::kConfig, "unknown key " + where_ + "." + k);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_optimizer(Reader& r, OptimizerConfig& opt) {
  std::string kind = optimizer_kind_name(opt.kind);
  r.get("optimizer", kind);
  try {
    opt.kind = parse_optimizer_kind(kind);
  } catch (const Error& e) {
    fail(ErrorCategory::kConfig, e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::kParse, source + ": " + e.what());
  }
  RunConfig cfg;
  Reader top(j, "config");
  std::string feeder = cfg.feeder.string(), profiles = cfg.profiles.string(), out = cfg.out.string();
  top.get("feeder", feeder);
  top.get("profiles", profiles);
  top.get("test_days", cfg.test_days);
  top.get("seed", cfg.seed);
  top.get("monitor", cfg.monitor);
  top.get("out", out);
  cfg.feeder = feeder;
  cfg.profiles = profiles;
  cfg.out = out;

  if (const json* c = top.child("synthetic")) {
    Reader r(*c, "synthetic");
    auto& s = cfg.synthetic;
    r.get("days", s.days);
    r.get("power_factor", s.power_factor);
    r.get("day_scale_min", s.day_scale_min);
    r.get("day_scale_max", s.day_scale_max);
    r.get("load_noise", s.load_noise);
    r.get("cloudy_fraction", s.cloudy_fraction);
    r.get("cloud_noise", s.cloud_noise);
    r.finish();
  }
  if (const json* c = top.child("dataset")) {
    Reader r(*c, "dataset");
    auto& d = cfg.dataset;
    r.get("count", d.count);
    r.get("train_count", d.train_count);
    r.get("max_failure_ratio", d.max_failure_ratio);
    r.get("threads", d.threads);
    r.finish();
  }
  if (const json* c = top.child("surrogate")) {
    Reader r(*c, "surrogate");
    auto& s = cfg.surrogate;
    r.get("hidden", s.hidden);
    r.get("batch", s.batch);
    r.get("epochs", s.epochs);
    read_optimizer(r, s.optimizer);
    r.get("lr", s.optimizer.lr);
    r.get("lr_decay", s.lr_decay);
    r.finish();
  }
  if (const json* c = top.child("agent")) {
    Reader r(*c, "agent");
    auto& a = cfg.agent;
    r.get("gamma", a.gamma);
    r.get("lr_actor", a.lr_actor);
    r.get("lr_critic", a.lr_critic);
    r.get("tau", a.tau);
    r.get("batch", a.batch);
    r.get("buffer_capacity", a.buffer_capacity);
    r.get("sigma0", a.sigma0);
    r.get("xi", a.xi);
    r.get("episodes", a.episodes);
    r.get("actor_hidden", a.actor_hidden);
    r.get("critic_hidden", a.critic_hidden);
    OptimizerConfig opt{a.optimizer};
    read_optimizer(r, opt);
    a.optimizer = opt.kind;
    r.finish();
  }
  if (const json* c = top.child("reward")) {
    Reader r(*c, "reward");
    auto& w = cfg.reward;
    r.get("v0", w.v0);
    r.get("v_min", w.v_min);
    r.get("v_max", w.v_max);
    r.get("penalty_per_violation", w.penalty_per_violation);
    r.get("nonconvergence_penalty", w.nonconvergence_penalty);
    r.finish();
  }
  if (const json* c = top.child("fast_ramp")) {
    Reader r(*c, "fast_ramp");
    auto& f = cfg.fast_ramp;
    r.get("seconds", f.seconds);
    r.get("pv_high_mw", f.pv_high_mw);
    r.get("pv_low_mw", f.pv_low_mw);
    r.get("load_multiplier", f.load_multiplier);
    r.get("power_factor", f.power_factor);
    r.finish();
  }
  top.finish();

  if (cfg.test_days == 0) fail(ErrorCategory::kConfig, "test_days must be positive");
  cfg.reward.validate();
  cfg.agent.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string run_config_to_json(const RunConfig& cfg) {
  const auto& s = cfg.synthetic;
  const auto& d = cfg.dataset;
  const auto& su = cfg.surrogate;
  const auto& a = cfg.agent;
  const auto& w = cfg.reward;
  const auto& f = cfg.fast_ramp;
  json j = {
      {"feeder", cfg.feeder.string()},
      {"profiles", cfg.profiles.string()},
      {"test_days", cfg.test_days},
      {"seed", cfg.seed},
      {"monitor", cfg.monitor},
      {"out", cfg.out.string()},
      {"synthetic",
       {{"days", s.days}, {"power_factor", s.power_factor}, {"day_scale_min", s.day_scale_min},
        {"day_scale_max", s.day_scale_max}, {"load_noise", s.load_noise}, {"cloudy_fraction", s.cloudy_fraction},
        {"cloud_noise", s.cloud_noise}}},
      {"dataset",
       {{"count", d.count}, {"train_count", d.train_count}, {"max_failure_ratio", d.max_failure_ratio}, {"threads", d.threads}}},
      {"surrogate",
       {{"hidden", su.hidden}, {"batch", su.batch}, {"epochs", su.epochs},
        {"optimizer", optimizer_kind_name(su.optimizer.kind)}, {"lr", su.optimizer.lr}, {"lr_decay", su.lr_decay}}},
      {"agent",
       {{"gamma", a.gamma}, {"lr_actor", a.lr_actor}, {"lr_critic", a.lr_critic}, {"tau", a.tau}, {"batch", a.batch},
        {"buffer_capacity", a.buffer_capacity}, {"sigma0", a.sigma0}, {"xi", a.xi}, {"episodes", a.episodes},
        {"actor_hidden", a.actor_hidden}, {"critic_hidden", a.critic_hidden},
        {"optimizer", optimizer_kind_name(a.optimizer)}}},
      {"reward",
       {{"v0", w.v0}, {"v_min", w.v_min}, {"v_max", w.v_max}, {"penalty_per_violation", w.penalty_per_violation},
        {"nonconvergence_penalty", w.nonconvergence_penalty}}},
      {"fast_ramp",
       {{"seconds", f.seconds}, {"pv_high_mw", f.pv_high_mw}, {"pv_low_mw", f.pv_low_mw},
        {"load_multiplier", f.load_multiplier}, {"power_factor", f.power_factor}}},
  };
  return j.dump(2) + "\n";
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
  // FNV-1a over the stage name, mixed with the run seed by splitmix64.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : stage) h = (h ^ c) * 1099511628211ULL;
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::filesystem::path bundled_feeder_path() {
  if (const char* env = std::getenv("VOLTREG_DATA_DIR")) return std::filesystem::path(env) / "feeder10.json";
  return std::filesystem::path(VOLTREG_DATA_DIR) / "feeder10.json";
}

Workspace load_workspace(const RunConfig& cfg) {
  Workspace ws{load_feeder(cfg.feeder.empty() ? bundled_feeder_path() : cfg.feeder), {}, {}, {}};
  ws.profiles = cfg.profiles.empty() ? synthesize_profiles(ws.feeder, cfg.synthetic, stage_seed(cfg.seed, "profiles"))
                                     : read_profile_csv(cfg.profiles, ws.feeder);
  const std::size_t days = ws.profiles.day_count();
  if (cfg.test_days >= days)
    fail(ErrorCategory::kConfig, "test_days (" + std::to_string(cfg.test_days) + ") must leave training days out of " +
                                     std::to_string(days));
  std::vector<std::size_t> all(days);
  for (std::size_t d = 0; d < days; ++d) all[d] = d;
  std::mt19937_64 rng(stage_seed(cfg.seed, "split"));
  std::shuffle(all.begin(), all.end(), rng);
  ws.test_days.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.test_days));
  ws.train_days.assign(all.begin() + static_cast<std::ptrdiff_t>(cfg.test_days), all.end());
  std::sort(ws.test_days.begin(), ws.test_days.end());
  std::sort(ws.train_days.begin(), ws.train_days.end());
  return ws;
}

std::string backend_name(Backend b) { return b == Backend::kSurrogate ? "surrogate" : "truemodel"; }

Backend parse_backend(const std::string& name) {
  if (name == "surrogate") return Backend::kSurrogate;
  if (name == "truemodel") return Backend::kTrueModel;
  fail(ErrorCategory::kConfig, "unknown backend '" + name + "' (expected surrogate or truemodel)");
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) fail(ErrorCategory::kIo, "cannot create output directory " + cfg.out.string() + ": " + ec.message());
  return cfg.out;
}

std::filesystem::path require(const std::filesystem::path& p, const std::string& producer) {
  if (!std::filesystem::exists(p)) fail(ErrorCategory::kState, p.string() + " not found; run " + producer + " first");
  return p;
}

std::ofstream open_text(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

void write_split(const std::filesystem::path& p, const Workspace& ws) {
  CsvWriter w(p, {"day", "test"});
  std::vector<bool> test(ws.profiles.day_count(), false);
  for (std::size_t d : ws.test_days) test[d] = true;
  for (std::size_t d = 0; d < test.size(); ++d) w.row({static_cast<double>(d), test[d] ? 1.0 : 0.0});
}

}  // namespace

GenDataSummary cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const Workspace ws = load_workspace(cfg);
  DatasetConfig dc = cfg.dataset;
  dc.day_pool = ws.train_days;
  const std::uint64_t seed = stage_seed(cfg.seed, "dataset");
  const Dataset ds = generate_dataset(ws.feeder, ws.profiles, dc, seed);

  GenDataSummary sum;
  sum.samples = ds.samples.size();
  sum.discarded = ds.discarded;
  sum.dataset_csv = out / "dataset.csv";
  write_dataset_csv(sum.dataset_csv, ws.feeder, ds.samples);
  write_split(out / "split.csv", ws);
  {
    std::ofstream f = open_text(out / "gen_data.log");
    f << "samples " << ds.samples.size() << "\ntrain " << ds.train_count << "\ntest " << ds.samples.size() - ds.train_count
      << "\ndiscarded " << ds.discarded << "\nseed " << seed << "\n";
  }
  log << "gen-data: " << sum.samples << " samples (" << ds.train_count << " train), " << ds.discarded
      << " non-converged draws discarded -> " << sum.dataset_csv.string() << "\n";
  return sum;
}

SurrogateSummary cmd_train_surrogate(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const Feeder feeder = load_feeder(cfg.feeder.empty() ? bundled_feeder_path() : cfg.feeder);
  const std::vector<Sample> samples = read_dataset_csv(require(out / "dataset.csv", "gen-data"), feeder);
  if (samples.size() != cfg.dataset.count || cfg.dataset.train_count >= samples.size())
    fail(ErrorCategory::kState, "dataset.csv does not match the configured dataset size; re-run gen-data");
  const std::span<const Sample> train(samples.data(), cfg.dataset.train_count);
  const std::span<const Sample> test(samples.data() + cfg.dataset.train_count, samples.size() - cfg.dataset.train_count);

  SurrogateConfig sc = cfg.surrogate;
  sc.seed = stage_seed(cfg.seed, "surrogate");
  const int every = std::max(1, sc.epochs / 20);
  sc.on_epoch = [&](int epoch, double loss) {
    if (epoch == 1 || epoch % every == 0) log << "  epoch " << epoch << " loss " << loss << "\n" << std::flush;
  };
  SurrogateTraining tr = train_surrogate(feeder, train, sc);

  SurrogateSummary sum;
  sum.checkpoint = out / "surrogate.json";
  tr.model.save(sum.checkpoint);
  sum.mae = evaluate_mae(tr.model, test);
  sum.first_loss = tr.loss_curve.front();
  sum.final_loss = tr.loss_curve.back();
  {
    CsvWriter w(out / "surrogate_loss.csv", {"epoch", "loss"});
    for (std::size_t e = 0; e < tr.loss_curve.size(); ++e) w.row({static_cast<double>(e + 1), tr.loss_curve[e]});
  }
  {
    CsvWriter w(out / "surrogate_node_error.csv", {"node", "mae", "max_abs_error"});
    for (std::size_t r = 0; r < tr.model.nodes().size(); ++r)
      w.row(feeder.label(tr.model.nodes()[r]), {sum.mae.per_node_mae[r], sum.mae.per_node_max[r]});
  }
  {
    CsvWriter w(out / "surrogate_error_hist.csv", {"lower", "upper", "count"});
    const auto& e = sum.mae.histogram_edges;
    for (std::size_t k = 0; k < e.size(); ++k)
      w.row({e[k], k + 1 < e.size() ? e[k + 1] : INFINITY, static_cast<double>(sum.mae.histogram_counts[k])});
  }
  {
    std::ofstream f = open_text(out / "surrogate_report.txt");
    f << "test_mae " << sum.mae.mae << "\nmax_abs_error " << sum.mae.max_abs_error << "\nfirst_epoch_loss " << sum.first_loss
      << "\nfinal_epoch_loss " << sum.final_loss << "\n";
  }
  log << "train-surrogate: test MAE " << sum.mae.mae << " p.u., max error " << sum.mae.max_abs_error << " p.u., loss "
      << sum.first_loss << " -> " << sum.final_loss << "\n";
  return sum;
}

AgentSummary cmd_train_agent(const RunConfig& cfg, Backend backend, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const Workspace ws = load_workspace(cfg);
  const std::string name = backend_name(backend);

  SurrogateModel surrogate;
  std::unique_ptr<VoltageBackend> vb;
  if (backend == Backend::kSurrogate) {
    surrogate = SurrogateModel::load(require(out / "surrogate.json", "train-surrogate"));
    if (surrogate.node_phase_count() != ws.feeder.node_phase_count())
      fail(ErrorCategory::kValidation, "surrogate checkpoint was trained for a different feeder");
    vb = std::make_unique<SurrogateBackend>(surrogate);
  } else {
    vb = std::make_unique<PowerFlowBackend>(ws.feeder);
  }
  const VoltageEnv env(ws.feeder, *vb, cfg.reward);

  const int every = std::max(1, cfg.agent.episodes / 20);
  double acc = 0.0;
  const std::uint64_t calls_before = solve_call_count();
  TrainingResult tr = train_agent(env, ws.profiles, ws.train_days, cfg.agent, stage_seed(cfg.seed, "agent-" + name),
                                  [&](int ep, double ret) {
                                    acc += ret;
                                    if (ep % every == 0) {
                                      log << "  episode " << ep << " mean return " << acc / every << "\n" << std::flush;
                                      acc = 0.0;
                                    }
                                  });
  AgentSummary sum;
  sum.backend = backend;
  sum.solver_calls = solve_call_count() - calls_before;
  sum.nonconverged_steps = tr.nonconverged_steps;
  sum.returns = tr.episode_returns;
  if (backend == Backend::kSurrogate && sum.solver_calls != 0)
    fail(ErrorCategory::kState, "surrogate-backend training invoked the power-flow solver " + std::to_string(sum.solver_calls) +
                                    " times");

  sum.checkpoint = out / ("actor_" + name + ".json");
  tr.actor.save(sum.checkpoint);
  save_mlp(tr.critic, out / ("critic_" + name + ".json"));
  {
    const std::vector<double> smooth = moving_average(tr.episode_returns, 100);
    CsvWriter w(out / ("rewards_" + name + ".csv"), {"episode", "day", "return", "mean100"});
    for (std::size_t e = 0; e < smooth.size(); ++e)
      w.row({static_cast<double>(e + 1), static_cast<double>(tr.episode_days[e]), tr.episode_returns[e], smooth[e]});
  }
  log << "train-agent[" << name << "]: " << tr.episode_returns.size() << " episodes, " << tr.updates << " updates, "
      << sum.solver_calls << " power-flow solves, " << sum.nonconverged_steps << " non-converged steps -> "
      << sum.checkpoint.string() << "\n";
  return sum;
}

CompareSummary cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const Workspace ws = load_workspace(cfg);
  const ActorModel proposed = ActorModel::load(require(out / "actor_surrogate.json", "train-agent --backend surrogate"));
  const ActorModel truemodel = ActorModel::load(require(out / "actor_truemodel.json", "train-agent --backend truemodel"));

  struct Method {
    std::string label;
    std::string file;
    Policy policy;
  };
  const std::vector<Method> methods{{"no-control", "nocontrol", no_control_policy(ws.feeder)},
                                    {"proposed", "proposed", proposed.policy(ws.feeder)},
                                    {"ddpg-truemodel", "truemodel", truemodel.policy(ws.feeder)}};
  CompareSummary sum;
  std::vector<std::vector<VoltageRecord>> records(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    sum.reports.push_back(
        evaluate_policy(ws.feeder, ws.profiles, ws.test_days, methods[m].policy, methods[m].label, cfg.reward, &records[m]));
    write_voltage_csv(out / ("voltages_" + methods[m].file + ".csv"), ws.feeder, records[m]);
  }
  write_eval_csv(out / "comparison.csv", sum.reports);
  {
    std::ofstream f = open_text(out / "comparison.txt");
    write_eval_table(f, sum.reports);
  }
  {
    // Per-node magnitudes at hour 13 of the first evaluation day.
    const std::size_t day = ws.test_days.front();
    CsvWriter w(out / "snapshot_hour13.csv", {"node", "no-control", "proposed", "ddpg-truemodel"});
    std::vector<const VoltageRecord*> at(methods.size(), nullptr);
    for (std::size_t m = 0; m < methods.size(); ++m)
      for (const VoltageRecord& r : records[m])
        if (r.day == day && r.step == 13) at[m] = &r;
    for (std::size_t i = 0; i < ws.feeder.node_phase_count(); ++i) {
      std::vector<double> row;
      for (const VoltageRecord* r : at) row.push_back(r ? r->v_mag[static_cast<Eigen::Index>(i)] : NAN);
      w.row(ws.feeder.label(i), row);
    }
  }
  log << "compare on " << ws.test_days.size() << " held-out days (true power flow):\n";
  write_eval_table(log, sum.reports);
  return sum;
}

FastFluctSummary cmd_fast_fluct(const RunConfig& cfg, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const Feeder feeder = load_feeder(cfg.feeder.empty() ? bundled_feeder_path() : cfg.feeder);
  const ActorModel proposed = ActorModel::load(require(out / "actor_surrogate.json", "train-agent --backend surrogate"));
  const ActorModel truemodel = ActorModel::load(require(out / "actor_truemodel.json", "train-agent --backend truemodel"));
  const ProfileSet ramp = make_fast_ramp_profile(feeder, cfg.fast_ramp);
  PowerFlowBackend backend(feeder);
  const VoltageEnv env(feeder, backend, cfg.reward);

  // Time each proposed decision (state assembly plus forward pass).
  std::vector<double> latency_ms;
  const Policy timed = [&](const State& s) {
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd a = proposed.act(s.flatten(feeder));
    latency_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    return a;
  };
  const EpisodeRecord none = run_episode(env, ramp, 0, no_control_policy(feeder));
  const EpisodeRecord prop = run_episode(env, ramp, 0, timed);
  const EpisodeRecord tm = run_episode(env, ramp, 0, truemodel.policy(feeder));

  FastFluctSummary sum;
  std::size_t monitor = 0;
  if (cfg.monitor.empty()) {
    double hottest = -1.0;
    for (const StepResult& r : none.steps)
      if (r.converged)
        for (std::size_t i : feeder.non_slack_nodes())
          if (r.v_mag[static_cast<Eigen::Index>(i)] > hottest) {
            hottest = r.v_mag[static_cast<Eigen::Index>(i)];
            monitor = i;
          }
  } else {
    bool found = false;
    for (std::size_t i = 0; i < feeder.node_phase_count() && !found; ++i)
      if (feeder.label(i) == cfg.monitor) {
        monitor = i;
        found = true;
      }
    if (!found) fail(ErrorCategory::kConfig, "monitor node-phase '" + cfg.monitor + "' not in the feeder");
  }
  sum.monitor = feeder.label(monitor);

  auto trace = [&](const EpisodeRecord& ep, std::vector<double>& v) {
    std::size_t within = 0;
    for (const StepResult& r : ep.steps) {
      const double x = r.converged ? r.v_mag[static_cast<Eigen::Index>(monitor)] : NAN;
      v.push_back(x);
      if (x >= cfg.reward.v_min && x <= cfg.reward.v_max) ++within;
    }
    return within;
  };
  const auto steps = static_cast<double>(ramp.steps_per_day());
  sum.no_control_violations = none.steps.size() - trace(none, sum.no_control);
  sum.proposed_within_fraction = static_cast<double>(trace(prop, sum.proposed)) / steps;
  sum.truemodel_within_fraction = static_cast<double>(trace(tm, sum.truemodel)) / steps;
  for (std::size_t t = 0; t < ramp.steps_per_day(); ++t) sum.pv_mw.push_back(ramp.at(0, t).pv_p_mw.empty() ? 0.0 : ramp.at(0, t).pv_p_mw[0]);
  if (!latency_ms.empty()) {
    double total = 0.0;
    for (double x : latency_ms) total += x;
    sum.mean_latency_ms = total / static_cast<double>(latency_ms.size());
    sum.max_latency_ms = *std::max_element(latency_ms.begin(), latency_ms.end());
  }

  {
    CsvWriter w(out / "fast_fluct.csv", {"second", "pv_mw", "no_control", "proposed", "truemodel"});
    for (std::size_t t = 0; t < sum.no_control.size(); ++t)
      w.row({static_cast<double>(t), sum.pv_mw[t], sum.no_control[t], sum.proposed[t], sum.truemodel[t]});
  }
  {
    // Latency is wall-clock and stays out of the files so reruns hash equal.
    std::ofstream f = open_text(out / "fast_fluct.txt");
    f << "monitor " << sum.monitor << "\nno_control_steps_out_of_bounds " << sum.no_control_violations
      << "\nproposed_within_fraction " << sum.proposed_within_fraction << "\ntruemodel_within_fraction "
      << sum.truemodel_within_fraction << "\n";
  }
  log << "fast-fluct at " << sum.monitor << ": no-control out of bounds " << sum.no_control_violations << "/"
      << none.steps.size() << " s, proposed within bounds " << 100.0 * sum.proposed_within_fraction << "%, truemodel "
      << 100.0 * sum.truemodel_within_fraction << "%, decision latency mean " << sum.mean_latency_ms << " ms, max "
      << sum.max_latency_ms << " ms\n";
  return sum;
}

PfSummary cmd_pf(const RunConfig& cfg, std::size_t day, int hour, std::ostream& log) {
  const auto out = prepare_out(cfg);
  const Workspace ws = load_workspace(cfg);
  if (day >= ws.profiles.day_count() || hour < 0 || static_cast<std::size_t>(hour) >= ws.profiles.steps_per_day())
    fail(ErrorCategory::kConfig, "pf: day/hour outside the profile set");
  const State s = make_state(ws.feeder, ws.profiles.at(day, static_cast<std::size_t>(hour)), hour);
  const Injection inj = net_injection(ws.feeder, s, denormalize_action(ws.feeder, s, zero_reactive_action(ws.feeder)));
  PfSummary sum;
  sum.solution = solve(ws.feeder, inj);
  if (!sum.solution.converged) fail(ErrorCategory::kNumerical, "pf: power flow did not converge");
  sum.max_mismatch = mismatch(ws.feeder, sum.solution.v, inj).max_abs();

  CsvWriter w(out / "pf.csv", {"node", "v_mag", "angle_deg"});
  log << "pf day " << day << " hour " << hour << ": " << sum.solution.iterations << " iterations, mismatch "
      << sum.max_mismatch << " p.u.\n";
  log << std::fixed << std::setprecision(5);
  for (std::size_t i = 0; i < ws.feeder.node_phase_count(); ++i) {
    const Complex v = sum.solution.v[static_cast<Eigen::Index>(i)];
    const double deg = std::arg(v) * 180.0 / std::numbers::pi;
    w.row(ws.feeder.label(i), {std::abs(v), deg});
    log << "  " << std::setw(5) << ws.feeder.label(i) << "  " << std::abs(v) << "  " << std::setw(10) << deg << "\n";
  }
  log << std::defaultfloat;
  return sum;
}

}  // namespace voltreg
