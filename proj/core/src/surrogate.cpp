#include "voltreg/surrogate.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "mlp_json.hpp"
#include "voltreg/csv.hpp"
#include "voltreg/error.hpp"
#include "voltreg/operating_point.hpp"
#include "voltreg/power_flow.hpp"

namespace voltreg {

// ---------------------------------------------------------------------------
// Data generation

namespace {

struct DrawResult {
  Sample sample;
  std::size_t failures = 0;
  bool ok = false;
};

DrawResult draw_sample(const PowerFlow& pf, const ProfileSet& profiles, const std::vector<std::size_t>& pool,
                       std::uint64_t seed, std::size_t index, std::size_t max_attempts) {
  const Feeder& f = pf.feeder();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick_day(0, pool.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_step(0, profiles.steps_per_day() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  DrawResult out;
  std::vector<double> u(action_dim(f));
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    const std::size_t day = pool[pick_day(rng)];
    const std::size_t step = pick_step(rng);
    for (double& x : u) x = unit(rng);
    const State s = make_state(f, profiles.at(day, step), static_cast<int>(step));
    const Injection inj = net_injection(f, s, denormalize_action(f, s, u));
    try {
      VoltageSolution sol = pf.solve(inj);
      if (sol.converged) {
        out.sample = Sample{inj.p, inj.q, sol.magnitudes()};
        out.ok = true;
        return out;
      }
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::kNumerical) throw;
    }
    ++out.failures;
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const Feeder& feeder, const ProfileSet& profiles, const DatasetConfig& cfg, std::uint64_t seed) {
  if (cfg.count == 0) fail(ErrorCategory::kConfig, "dataset size must be positive");
  if (cfg.train_count > cfg.count) fail(ErrorCategory::kConfig, "train_count exceeds dataset size");
  if (profiles.day_count() == 0) fail(ErrorCategory::kConfig, "profile set is empty");

  std::vector<std::size_t> pool = cfg.day_pool;
  if (pool.empty()) {
    pool.resize(profiles.day_count());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  for (std::size_t d : pool)
    if (d >= profiles.day_count()) fail(ErrorCategory::kConfig, "day pool references missing profile day");

  PowerFlow pf(feeder);
  // Each sample may retry; a sample that cannot converge in this many draws
  // already implies the failure-ratio limit is exceeded.
  const auto max_attempts = static_cast<std::size_t>(std::ceil(1.0 / (1.0 - cfg.max_failure_ratio))) + 8;

  std::vector<DrawResult> results(cfg.count);
  unsigned threads = cfg.threads ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    try {
      for (std::size_t k = next++; k < cfg.count; k = next++)
        results[k] = draw_sample(pf, profiles, pool, seed, k, max_attempts);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = cfg.count;
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (unsigned t = 0; t < threads; ++t) pool_threads.emplace_back(worker);
    for (auto& t : pool_threads) t.join();
  }
  if (error) std::rethrow_exception(error);

  Dataset ds;
  ds.train_count = cfg.train_count;
  ds.samples.reserve(cfg.count);
  std::size_t unrecoverable = 0;
  for (auto& r : results) {
    ds.discarded += r.failures;
    if (!r.ok) ++unrecoverable;
    ds.samples.push_back(std::move(r.sample));
  }
  const double ratio = static_cast<double>(ds.discarded) / static_cast<double>(ds.discarded + cfg.count);
  if (unrecoverable > 0 || ratio > cfg.max_failure_ratio)
    fail(ErrorCategory::kNumerical, "dataset generation: " + std::to_string(ds.discarded) + " non-converged draws (" +
                                        std::to_string(100.0 * ratio) + "% of attempts), " + std::to_string(unrecoverable) +
                                        " samples could not be produced; the feeder is too stressed by the profile/action ranges");
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset CSV

namespace {

std::string column_tag(const Feeder& f, std::size_t i) {
  const NodePhase& n = f.node(i);
  return std::to_string(f.buses()[n.bus].id) + phase_letter(n.phase);
}

}  // namespace

void write_dataset_csv(const std::filesystem::path& path, const Feeder& feeder, std::span<const Sample> samples) {
  const std::size_t n = feeder.node_phase_count();
  std::vector<std::string> header;
  for (const char* prefix : {"p_", "q_", "v_"})
    for (std::size_t i = 0; i < n; ++i) header.push_back(prefix + column_tag(feeder, i));
  CsvWriter w(path, header);
  std::vector<double> row(3 * n);
  for (const Sample& s : samples) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      row[i] = s.p[e];
      row[n + i] = s.q[e];
      row[2 * n + i] = s.v_mag[e];
    }
    w.row(row);
  }
}

std::vector<Sample> read_dataset_csv(const std::filesystem::path& path, const Feeder& feeder) {
  const NumericTable t = read_numeric_csv(path);
  const std::size_t n = feeder.node_phase_count();
  std::vector<std::size_t> cp(n), cq(n), cv(n);
  for (std::size_t i = 0; i < n; ++i) {
    cp[i] = t.column("p_" + column_tag(feeder, i));
    cq[i] = t.column("q_" + column_tag(feeder, i));
    cv[i] = t.column("v_" + column_tag(feeder, i));
  }
  std::vector<Sample> out;
  out.reserve(t.rows.size());
  const auto en = static_cast<Eigen::Index>(n);
  for (const auto& row : t.rows) {
    Sample s{NodePhaseVector(en), NodePhaseVector(en), NodePhaseVector(en)};
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      s.p[e] = row[cp[i]];
      s.q[e] = row[cq[i]];
      s.v_mag[e] = row[cv[i]];
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer Standardizer::fit(const Eigen::MatrixXd& columns) {
  if (columns.cols() == 0) fail(ErrorCategory::kConfig, "cannot fit a scaler on zero samples");
  Standardizer s;
  s.mean = columns.rowwise().mean();
  const Eigen::MatrixXd centered = columns.colwise() - s.mean;
  s.scale = (centered.array().square().rowwise().sum() / static_cast<double>(columns.cols())).sqrt().matrix();
  for (Eigen::Index r = 0; r < s.scale.size(); ++r)
    if (!(s.scale[r] > 1e-12)) s.scale[r] = 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::normalize(const Eigen::MatrixXd& x) const {
  return ((x.colwise() - mean).array().colwise() / scale.array()).matrix();
}

Eigen::MatrixXd Standardizer::denormalize(const Eigen::MatrixXd& z) const {
  return ((z.array().colwise() * scale.array()).matrix()).colwise() + mean;
}

// ---------------------------------------------------------------------------
// SurrogateModel

SurrogateModel::SurrogateModel(const Feeder& feeder, Mlp net, Standardizer input, Standardizer output)
    : net_(std::move(net)), input_(std::move(input)), output_(std::move(output)) {
  nodes_.assign(feeder.non_slack_nodes().begin(), feeder.non_slack_nodes().end());
  node_phase_count_ = feeder.node_phase_count();
  slack_magnitude_ = feeder.v0();
  const auto m = static_cast<int>(nodes_.size());
  if (net_.in_dim() != 2 * m || net_.out_dim() != m)
    fail(ErrorCategory::kValidation, "surrogate network shape does not match the feeder");
}

Eigen::VectorXd SurrogateModel::features(const NodePhaseVector& p, const NodePhaseVector& q) const {
  if (static_cast<std::size_t>(p.size()) != node_phase_count_ || static_cast<std::size_t>(q.size()) != node_phase_count_)
    fail(ErrorCategory::kValidation, "surrogate input length does not match the feeder");
  const auto m = static_cast<Eigen::Index>(nodes_.size());
  Eigen::VectorXd x(2 * m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(nodes_[static_cast<std::size_t>(r)]);
    x[r] = p[i];
    x[m + r] = q[i];
  }
  return x;
}

Eigen::MatrixXd SurrogateModel::predict_batch(const Eigen::MatrixXd& features) const {
  return output_.denormalize(net_.forward_batch(input_.normalize(features)));
}

NodePhaseVector SurrogateModel::predict(const NodePhaseVector& p, const NodePhaseVector& q) const {
  const Eigen::VectorXd v = predict_batch(features(p, q)).col(0);
  NodePhaseVector out = NodePhaseVector::Constant(static_cast<Eigen::Index>(node_phase_count_), slack_magnitude_);
  for (std::size_t r = 0; r < nodes_.size(); ++r) out[static_cast<Eigen::Index>(nodes_[r])] = v[static_cast<Eigen::Index>(r)];
  return out;
}

void SurrogateModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "voltreg.surrogate";
  j["version"] = 1;
  j["node_phase_count"] = node_phase_count_;
  j["nodes"] = nodes_;
  j["slack_magnitude"] = slack_magnitude_;
  j["input_mean"] = detail::vector_to_json(input_.mean);
  j["input_scale"] = detail::vector_to_json(input_.scale);
  j["output_mean"] = detail::vector_to_json(output_.mean);
  j["output_scale"] = detail::vector_to_json(output_.scale);
  j["net"] = detail::mlp_to_json(net_);
  detail::write_json_file(path, j);
}

SurrogateModel SurrogateModel::load(const std::filesystem::path& path) {
  const nlohmann::json j = detail::read_json_file(path);
  SurrogateModel m;
  try {
    if (j.at("format").get<std::string>() != "voltreg.surrogate")
      fail(ErrorCategory::kParse, path.string() + ": not a surrogate checkpoint");
    if (j.at("version").get<int>() != 1) fail(ErrorCategory::kParse, path.string() + ": unsupported surrogate version");
    m.node_phase_count_ = j.at("node_phase_count").get<std::size_t>();
    m.nodes_ = j.at("nodes").get<std::vector<std::size_t>>();
    m.slack_magnitude_ = j.at("slack_magnitude").get<double>();
    m.input_ = {detail::vector_from_json(j.at("input_mean")), detail::vector_from_json(j.at("input_scale"))};
    m.output_ = {detail::vector_from_json(j.at("output_mean")), detail::vector_from_json(j.at("output_scale"))};
    m.net_ = detail::mlp_from_json(j.at("net"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, path.string() + ": " + e.what());
  }
  const auto nn = static_cast<Eigen::Index>(m.nodes_.size());
  if (m.net_.in_dim() != 2 * nn || m.net_.out_dim() != nn || m.input_.mean.size() != 2 * nn ||
      m.output_.mean.size() != nn)
    fail(ErrorCategory::kParse, path.string() + ": surrogate checkpoint shapes are inconsistent");
  return m;
}

// ---------------------------------------------------------------------------
// Training

SurrogateTraining train_surrogate(const Feeder& feeder, std::span<const Sample> train, const SurrogateConfig& cfg) {
  if (train.empty()) fail(ErrorCategory::kConfig, "surrogate training split is empty");
  if (cfg.batch == 0 || cfg.epochs <= 0) fail(ErrorCategory::kConfig, "surrogate batch and epochs must be positive");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) fail(ErrorCategory::kConfig, "surrogate lr_decay must be in (0, 1]");

  const auto ns = feeder.non_slack_nodes();
  const auto m = static_cast<Eigen::Index>(ns.size());
  const auto count = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixXd x(2 * m, count);
  Eigen::MatrixXd y(m, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    const Sample& s = train[static_cast<std::size_t>(c)];
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)]);
      x(r, c) = s.p[i];
      x(m + r, c) = s.q[i];
      y(r, c) = s.v_mag[i];
    }
  }
  Standardizer in = Standardizer::fit(x);
  Standardizer out = Standardizer::fit(y);
  const Eigen::MatrixXd xn = in.normalize(x);
  const Eigen::MatrixXd yn = out.normalize(y);

  std::vector<LayerSpec> specs;
  for (int h : cfg.hidden) specs.push_back({h, Activation::kTanh});
  specs.push_back({static_cast<int>(m), Activation::kIdentity});
  Mlp net(static_cast<int>(2 * m), specs, cfg.seed);
  Optimizer opt(cfg.optimizer);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  SurrogateTraining result;
  const auto batch = static_cast<Eigen::Index>(cfg.batch);
  Eigen::MatrixXd bx(2 * m, batch);
  Eigen::MatrixXd by(m, batch);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < count; start += batch) {
      const Eigen::Index b = std::min(batch, count - start);
      bx.resize(2 * m, b);
      by.resize(m, b);
      for (Eigen::Index c = 0; c < b; ++c) {
        bx.col(c) = xn.col(order[static_cast<std::size_t>(start + c)]);
        by.col(c) = yn.col(order[static_cast<std::size_t>(start + c)]);
      }
      const ForwardCache cache = net.forward_cached(bx);
      const Eigen::MatrixXd err = cache.output.back() - by;
      const double loss = err.squaredNorm() / static_cast<double>(b);
      if (!std::isfinite(loss))
        fail(ErrorCategory::kNumerical, "surrogate training diverged at epoch " + std::to_string(epoch));
      const BackwardResult g = net.backward(cache, (2.0 / static_cast<double>(b)) * err);
      opt.step(net, g.grads);
      loss_sum += loss;
      ++batches;
    }
    const double epoch_loss = loss_sum / batches;
    result.loss_curve.push_back(epoch_loss);
    opt.set_lr(opt.config().lr * cfg.lr_decay);
    if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss);
  }
  result.model = SurrogateModel(feeder, std::move(net), std::move(in), std::move(out));
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

MaeReport evaluate_mae(const SurrogateModel& model, std::span<const Sample> test) {
  if (test.empty()) fail(ErrorCategory::kConfig, "evaluate_mae: empty test set");
  const auto& nodes = model.nodes();
  const auto m = static_cast<Eigen::Index>(nodes.size());
  const auto count = static_cast<Eigen::Index>(test.size());
  Eigen::MatrixXd feats(2 * m, count);
  Eigen::MatrixXd truth(m, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    const Sample& s = test[static_cast<std::size_t>(c)];
    feats.col(c) = model.features(s.p, s.q);
    for (Eigen::Index r = 0; r < m; ++r) truth(r, c) = s.v_mag[static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(r)])];
  }
  const Eigen::MatrixXd err = (model.predict_batch(feats) - truth).cwiseAbs();

  MaeReport rep;
  rep.mae = err.sum() / static_cast<double>(err.size());
  rep.max_abs_error = err.maxCoeff();
  for (Eigen::Index r = 0; r < m; ++r) {
    rep.per_node_mae.push_back(err.row(r).mean());
    rep.per_node_max.push_back(err.row(r).maxCoeff());
  }
  // Log-spaced bins from 1e-6 to 1e-1 plus an overflow bin.
  for (int k = 0; k <= 20; ++k) rep.histogram_edges.push_back(std::pow(10.0, -6.0 + 0.25 * k));
  rep.histogram_counts.assign(rep.histogram_edges.size(), 0);
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double e = err.data()[i];
    auto it = std::upper_bound(rep.histogram_edges.begin(), rep.histogram_edges.end(), e);
    std::size_t bin = it == rep.histogram_edges.begin() ? 0 : static_cast<std::size_t>(it - rep.histogram_edges.begin()) - 1;
    ++rep.histogram_counts[bin];
  }
  return rep;
}

}  // namespace voltreg
