#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "voltreg/grid_model.hpp"
#include "voltreg/mlp.hpp"
#include "voltreg/profiles.hpp"

namespace voltreg {

/// One solver-generated training instance: net injections and the resulting
/// voltage magnitudes at every node-phase (per-unit).
struct Sample {
  NodePhaseVector p;
  NodePhaseVector q;
  NodePhaseVector v_mag;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t train_count = 0;  // samples[0, train_count) train, the rest test
  std::size_t discarded = 0;    // draws rejected for non-convergence

  std::span<const Sample> train() const { return {samples.data(), train_count}; }
  std::span<const Sample> test() const { return {samples.data() + train_count, samples.size() - train_count}; }
};

struct DatasetConfig {
  std::size_t count = 12000;
  std::size_t train_count = 10000;
  std::vector<std::size_t> day_pool;  // profile days to draw from; empty = all
  double max_failure_ratio = 0.5;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Draws (load, PV) operating points from the profile days plus reactive
/// setpoints uniform over the device boxes, solves the power flow and records
/// (P, Q, |V|). Sample k depends only on (seed, k), so output is identical for
/// any thread count. Throws Error(kNumerical) when more than
/// `max_failure_ratio` of draws fail to converge.
Dataset generate_dataset(const Feeder& feeder, const ProfileSet& profiles, const DatasetConfig& cfg, std::uint64_t seed);

/// Columns p_<bus><phase>..., q_..., v_... over all node-phases.
void write_dataset_csv(const std::filesystem::path& path, const Feeder& feeder, std::span<const Sample> samples);
std::vector<Sample> read_dataset_csv(const std::filesystem::path& path, const Feeder& feeder);

/// Per-feature affine scaling to zero mean / unit variance. Constant features
/// keep unit scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& columns);  // one sample per column
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& z) const;
};

/// Learned map (P, Q) -> |V| over the non-slack node-phases.
class SurrogateModel {
 public:
  SurrogateModel() = default;
  SurrogateModel(const Feeder& feeder, Mlp net, Standardizer input, Standardizer output);

  /// Full-length magnitudes; slack entries are the fixed slack magnitude.
  NodePhaseVector predict(const NodePhaseVector& p, const NodePhaseVector& q) const;
  /// Non-slack magnitudes for a batch; columns are samples.
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& features) const;
  /// Stacks [p; q] over non-slack node-phases.
  Eigen::VectorXd features(const NodePhaseVector& p, const NodePhaseVector& q) const;

  const Mlp& net() const { return net_; }
  const Standardizer& input_scaler() const { return input_; }
  const Standardizer& output_scaler() const { return output_; }
  const std::vector<std::size_t>& nodes() const { return nodes_; }
  std::size_t node_phase_count() const { return node_phase_count_; }
  double slack_magnitude() const { return slack_magnitude_; }

  void save(const std::filesystem::path& path) const;
  static SurrogateModel load(const std::filesystem::path& path);

 private:
  Mlp net_;
  Standardizer input_;
  Standardizer output_;
  std::vector<std::size_t> nodes_;
  std::size_t node_phase_count_ = 0;
  double slack_magnitude_ = 1.0;
};

struct SurrogateConfig {
  std::vector<int> hidden{400, 400};
  std::size_t batch = 32;
  int epochs = 2000;
  OptimizerConfig optimizer{OptimizerConfig::Kind::kSgd, 1e-4};
  double lr_decay = 1.0;  // learning rate multiplied by this after every epoch
  std::uint64_t seed = 1;
  /// Called after every epoch with (epoch index from 1, mean training loss).
  std::function<void(int, double)> on_epoch;
};

struct SurrogateTraining {
  SurrogateModel model;
  std::vector<double> loss_curve;  // mean batch loss per epoch, normalized units
};

/// Minimizes the batch mean of ||V - V_hat||^2 (standardized targets) with one
/// shuffled pass over the training split per epoch. Throws Error(kNumerical)
/// with the epoch index if the loss diverges.
SurrogateTraining train_surrogate(const Feeder& feeder, std::span<const Sample> train, const SurrogateConfig& cfg);

struct MaeReport {
  double mae = 0.0;            // mean over samples and non-slack node-phases
  double max_abs_error = 0.0;
  std::vector<double> per_node_mae;      // ordered like SurrogateModel::nodes()
  std::vector<double> per_node_max;
  std::vector<double> histogram_edges;   // absolute-error bins
  std::vector<std::size_t> histogram_counts;
};

MaeReport evaluate_mae(const SurrogateModel& model, std::span<const Sample> test);

}  // namespace voltreg
