#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voltreg {

enum class Activation {
  kTanh,
  kIdentity,
  kScaledTanh,  // scale * tanh(z); bounded outputs for the actor
};

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  Activation activation = Activation::kTanh;
  double scale = 1.0;  // only used by kScaledTanh
};

struct LayerSpec {
  int width = 0;
  Activation activation = Activation::kTanh;
  double scale = 1.0;
};

/// Per-layer parameter gradients, shaped exactly like the owning Mlp.
struct GradientSet {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;

  double norm() const;
  bool all_finite() const;
  void scale(double factor);
};

/// Activations recorded by a forward pass. Tied to the parameter state that
/// produced it; backward() rejects a cache once the network has changed.
struct ForwardCache {
  std::uint64_t stamp = 0;
  Eigen::MatrixXd input;                // in x batch
  std::vector<Eigen::MatrixXd> output;  // per layer, post-activation
};

struct BackwardResult {
  GradientSet grads;        // empty when parameter gradients were not requested
  Eigen::MatrixXd grad_in;  // in x batch
};

/// Fully connected feed-forward network. Batches are column-major: one sample
/// per column.
class Mlp {
 public:
  Mlp() = default;
  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(int in_dim, const std::vector<LayerSpec>& layers, std::uint64_t seed);
  explicit Mlp(std::vector<Layer> layers);

  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  int in_dim() const;
  int out_dim() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;
  ForwardCache forward_cached(const Eigen::MatrixXd& x) const;

  /// Reverse-mode pass. `grad_out` is dLoss/dOutput (out x batch); gradients
  /// are summed over the batch.
  BackwardResult backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out,
                          bool param_grads = true) const;

  /// theta <- theta - lr * g. Throws on non-finite gradients (no change is made).
  void sgd_step(const GradientSet& g, double lr);
  /// theta <- theta + delta, used by the optional optimizers.
  void apply_delta(const GradientSet& delta);

  GradientSet zero_gradients() const;
  bool all_finite() const;

  /// Parameters flattened layer by layer (W row-major, then b).
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);

  std::uint64_t stamp() const { return stamp_; }

 private:
  void touch();
  void check_shapes(const GradientSet& g) const;

  std::vector<Layer> layers_;
  std::uint64_t stamp_ = 0;
};

/// target <- tau * online + (1 - tau) * target.
void soft_update(Mlp& target, const Mlp& online, double tau);

/// Euclidean distance between two same-shaped parameter sets.
double parameter_distance(const Mlp& a, const Mlp& b);

struct OptimizerConfig {
  enum class Kind { kSgd, kMomentum, kAdam };
  Kind kind = Kind::kSgd;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

std::string optimizer_kind_name(OptimizerConfig::Kind k);
OptimizerConfig::Kind parse_optimizer_kind(const std::string& name);

/// Stateful update rule. kSgd is exactly Mlp::sgd_step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(Mlp& net, const GradientSet& g);
  const OptimizerConfig& config() const { return cfg_; }
  void set_lr(double lr);

 private:
  OptimizerConfig cfg_;
  GradientSet m_;
  GradientSet v_;
  long t_ = 0;
};

/// Checkpoint: JSON record {"format": "voltreg.mlp", "version": 1, "layers": [...]}
/// with shortest round-trip decimal encoding, so reload is bit-exact.
void save_mlp(const Mlp& net, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace voltreg
