#include "voltreg/mlp.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "mlp_json.hpp"
#include "voltreg/error.hpp"

namespace voltreg {

namespace {

std::atomic<std::uint64_t> g_stamp{0};

std::uint64_t next_stamp() { return ++g_stamp; }

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, const Layer& l) {
  switch (l.activation) {
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kIdentity: return z;
    case Activation::kScaledTanh: return (l.scale * z.array().tanh()).matrix();
  }
  return z;
}

// d(activation)/dz expressed through the activation output a.
Eigen::MatrixXd derivative_from_output(const Eigen::MatrixXd& a, const Layer& l) {
  switch (l.activation) {
    case Activation::kTanh: return (1.0 - a.array().square()).matrix();
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(a.rows(), a.cols());
    case Activation::kScaledTanh: return (l.scale * (1.0 - (a.array() / l.scale).square())).matrix();
  }
  return a;
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
    case Activation::kScaledTanh: return "scaled_tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  if (name == "scaled_tanh") return Activation::kScaledTanh;
  fail(ErrorCategory::kParse, "unknown activation '" + name + "'");
}

// ---------------------------------------------------------------------------
// GradientSet

double GradientSet::norm() const {
  double s = 0.0;
  for (const auto& w : dw) s += w.squaredNorm();
  for (const auto& b : db) s += b.squaredNorm();
  return std::sqrt(s);
}

bool GradientSet::all_finite() const {
  for (const auto& w : dw)
    if (!w.allFinite()) return false;
  for (const auto& b : db)
    if (!b.allFinite()) return false;
  return true;
}

void GradientSet::scale(double factor) {
  for (auto& w : dw) w *= factor;
  for (auto& b : db) b *= factor;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(int in_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  if (in_dim <= 0 || specs.empty()) fail(ErrorCategory::kConfig, "Mlp needs a positive input size and at least one layer");
  std::mt19937_64 rng(seed);
  int fan_in = in_dim;
  for (const LayerSpec& s : specs) {
    if (s.width <= 0) fail(ErrorCategory::kConfig, "Mlp layer width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l;
    l.w.resize(s.width, fan_in);
    l.b.resize(s.width);
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = dist(rng);
    l.activation = s.activation;
    l.scale = s.scale;
    layers_.push_back(std::move(l));
    fan_in = s.width;
  }
  touch();
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) fail(ErrorCategory::kConfig, "Mlp needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    if (l.b.size() != l.w.rows()) fail(ErrorCategory::kValidation, "layer " + std::to_string(k) + ": bias/weight size mismatch");
    if (k > 0 && l.w.cols() != layers_[k - 1].w.rows())
      fail(ErrorCategory::kValidation, "layer " + std::to_string(k) + ": input size does not chain");
  }
  touch();
}

Mlp::Mlp(const Mlp& other) : layers_(other.layers_), stamp_(next_stamp()) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    touch();
  }
  return *this;
}

void Mlp::touch() { stamp_ = next_stamp(); }

int Mlp::in_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().w.cols()); }
int Mlp::out_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().w.rows()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x).col(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  if (x.rows() != in_dim())
    fail(ErrorCategory::kValidation, "Mlp input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(in_dim()));
  Eigen::MatrixXd a = x;
  for (const Layer& l : layers_) {
    Eigen::MatrixXd z = l.w * a;
    z.colwise() += l.b;
    a = activate(z, l);
  }
  return a;
}

ForwardCache Mlp::forward_cached(const Eigen::MatrixXd& x) const {
  if (x.rows() != in_dim())
    fail(ErrorCategory::kValidation, "Mlp input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(in_dim()));
  ForwardCache c;
  c.stamp = stamp_;
  c.input = x;
  c.output.reserve(layers_.size());
  const Eigen::MatrixXd* a = &c.input;
  for (const Layer& l : layers_) {
    Eigen::MatrixXd z = l.w * *a;
    z.colwise() += l.b;
    c.output.push_back(activate(z, l));
    a = &c.output.back();
  }
  return c;
}

BackwardResult Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_out, bool param_grads) const {
  if (cache.stamp == 0 || cache.output.size() != layers_.size())
    fail(ErrorCategory::kState, "backward: missing forward cache");
  if (cache.stamp != stamp_) fail(ErrorCategory::kState, "backward: stale forward cache (network changed since forward)");
  if (grad_out.rows() != out_dim() || grad_out.cols() != cache.input.cols())
    fail(ErrorCategory::kValidation, "backward: grad_out shape mismatch");

  BackwardResult res;
  if (param_grads) {
    res.grads.dw.resize(layers_.size());
    res.grads.db.resize(layers_.size());
  }
  Eigen::MatrixXd delta = grad_out.cwiseProduct(derivative_from_output(cache.output.back(), layers_.back()));
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Eigen::MatrixXd& prev = k == 0 ? cache.input : cache.output[k - 1];
    if (param_grads) {
      res.grads.dw[k].noalias() = delta * prev.transpose();
      res.grads.db[k] = delta.rowwise().sum();
    }
    Eigen::MatrixXd back = layers_[k].w.transpose() * delta;
    if (k == 0) {
      res.grad_in = std::move(back);
    } else {
      delta = back.cwiseProduct(derivative_from_output(prev, layers_[k - 1]));
    }
  }
  return res;
}

void Mlp::check_shapes(const GradientSet& g) const {
  if (g.dw.size() != layers_.size() || g.db.size() != layers_.size())
    fail(ErrorCategory::kValidation, "gradient set does not match network depth");
  for (std::size_t k = 0; k < layers_.size(); ++k)
    if (g.dw[k].rows() != layers_[k].w.rows() || g.dw[k].cols() != layers_[k].w.cols() || g.db[k].size() != layers_[k].b.size())
      fail(ErrorCategory::kValidation, "gradient shape mismatch at layer " + std::to_string(k));
}

void Mlp::sgd_step(const GradientSet& g, double lr) {
  check_shapes(g);
  if (!(lr >= 0.0)) fail(ErrorCategory::kConfig, "learning rate must be non-negative");
  if (!g.all_finite()) fail(ErrorCategory::kNumerical, "sgd_step: non-finite gradient, step aborted");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].w -= lr * g.dw[k];
    layers_[k].b -= lr * g.db[k];
  }
  touch();
  if (!all_finite()) fail(ErrorCategory::kNumerical, "sgd_step: parameters became non-finite");
}

void Mlp::apply_delta(const GradientSet& delta) {
  check_shapes(delta);
  if (!delta.all_finite()) fail(ErrorCategory::kNumerical, "apply_delta: non-finite update, step aborted");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].w += delta.dw[k];
    layers_[k].b += delta.db[k];
  }
  touch();
  if (!all_finite()) fail(ErrorCategory::kNumerical, "apply_delta: parameters became non-finite");
}

GradientSet Mlp::zero_gradients() const {
  GradientSet g;
  for (const Layer& l : layers_) {
    g.dw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return g;
}

bool Mlp::all_finite() const {
  for (const Layer& l : layers_)
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  return true;
}

std::vector<double> Mlp::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) out.push_back(l.w(r, c));
    for (Eigen::Index r = 0; r < l.b.size(); ++r) out.push_back(l.b[r]);
  }
  return out;
}

void Mlp::assign(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) fail(ErrorCategory::kValidation, "assign: parameter count mismatch");
  std::size_t i = 0;
  for (Layer& l : layers_) {
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = flat[i++];
    for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = flat[i++];
  }
  touch();
}

namespace {

void check_same_architecture(const Mlp& a, const Mlp& b, const char* what) {
  if (a.layers().size() != b.layers().size()) fail(ErrorCategory::kValidation, std::string(what) + ": architecture mismatch");
  for (std::size_t k = 0; k < a.layers().size(); ++k) {
    const Layer& x = a.layers()[k];
    const Layer& y = b.layers()[k];
    if (x.w.rows() != y.w.rows() || x.w.cols() != y.w.cols() || x.activation != y.activation)
      fail(ErrorCategory::kValidation, std::string(what) + ": architecture mismatch at layer " + std::to_string(k));
  }
}

}  // namespace

void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorCategory::kConfig, "soft_update: tau must be in (0, 1]");
  check_same_architecture(target, online, "soft_update");
  if (tau == 1.0) {
    target = online;
    return;
  }
  GradientSet delta;
  for (std::size_t k = 0; k < online.layers().size(); ++k) {
    const Layer& t = target.layers()[k];
    const Layer& o = online.layers()[k];
    delta.dw.push_back(tau * (o.w - t.w));
    delta.db.push_back(tau * (o.b - t.b));
  }
  target.apply_delta(delta);
}

double parameter_distance(const Mlp& a, const Mlp& b) {
  check_same_architecture(a, b, "parameter_distance");
  double s = 0.0;
  for (std::size_t k = 0; k < a.layers().size(); ++k) {
    s += (a.layers()[k].w - b.layers()[k].w).squaredNorm();
    s += (a.layers()[k].b - b.layers()[k].b).squaredNorm();
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Optimizer

std::string optimizer_kind_name(OptimizerConfig::Kind k) {
  switch (k) {
    case OptimizerConfig::Kind::kSgd: return "sgd";
    case OptimizerConfig::Kind::kMomentum: return "momentum";
    case OptimizerConfig::Kind::kAdam: return "adam";
  }
  return "?";
}

OptimizerConfig::Kind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerConfig::Kind::kSgd;
  if (name == "momentum") return OptimizerConfig::Kind::kMomentum;
  if (name == "adam") return OptimizerConfig::Kind::kAdam;
  fail(ErrorCategory::kConfig, "unknown optimizer '" + name + "'");
}

void Optimizer::set_lr(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorCategory::kConfig, "learning rate must be finite and >= 0");
  cfg_.lr = lr;
}

void Optimizer::step(Mlp& net, const GradientSet& g) {
  using Kind = OptimizerConfig::Kind;
  if (cfg_.kind == Kind::kSgd) {
    net.sgd_step(g, cfg_.lr);
    return;
  }
  if (!g.all_finite()) fail(ErrorCategory::kNumerical, "optimizer: non-finite gradient, step aborted");
  if (m_.dw.empty()) {
    m_ = net.zero_gradients();
    v_ = net.zero_gradients();
  }
  ++t_;
  GradientSet delta = net.zero_gradients();
  for (std::size_t k = 0; k < g.dw.size(); ++k) {
    if (cfg_.kind == Kind::kMomentum) {
      m_.dw[k] = cfg_.momentum * m_.dw[k] + g.dw[k];
      m_.db[k] = cfg_.momentum * m_.db[k] + g.db[k];
      delta.dw[k] = -cfg_.lr * m_.dw[k];
      delta.db[k] = -cfg_.lr * m_.db[k];
    } else {
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      auto upd = [&](auto& m, auto& v, const auto& grad, auto& out) {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
        v = (cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * grad.array().square()).matrix();
        out = (-cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon)).matrix();
      };
      upd(m_.dw[k], v_.dw[k], g.dw[k], delta.dw[k]);
      upd(m_.db[k], v_.db[k], g.db[k], delta.db[k]);
    }
  }
  net.apply_delta(delta);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json j;
  j["format"] = "voltreg.mlp";
  j["version"] = kMlpFormatVersion;
  j["in_dim"] = net.in_dim();
  j["out_dim"] = net.out_dim();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const Layer& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.w.size()));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) w.push_back(l.w(r, c));
    layers.push_back({{"in", l.w.cols()},
                      {"out", l.w.rows()},
                      {"activation", activation_name(l.activation)},
                      {"scale", l.scale},
                      {"w", w},
                      {"b", vector_to_json(l.b)}});
  }
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "voltreg.mlp") fail(ErrorCategory::kParse, "not an mlp record");
    const int version = j.at("version").get<int>();
    if (version != kMlpFormatVersion)
      fail(ErrorCategory::kParse, "unsupported mlp checkpoint version " + std::to_string(version));
    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
      Layer l;
      const auto in = jl.at("in").get<Eigen::Index>();
      const auto out = jl.at("out").get<Eigen::Index>();
      auto w = jl.at("w").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != in * out) fail(ErrorCategory::kParse, "mlp checkpoint: weight count mismatch");
      l.w.resize(out, in);
      std::size_t i = 0;
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) l.w(r, c) = w[i++];
      l.b = vector_from_json(jl.at("b"));
      if (l.b.size() != out) fail(ErrorCategory::kParse, "mlp checkpoint: bias size mismatch");
      l.activation = parse_activation(jl.at("activation").get<std::string>());
      l.scale = jl.value("scale", 1.0);
      layers.push_back(std::move(l));
    }
    Mlp net(std::move(layers));
    if (net.in_dim() != j.at("in_dim").get<int>() || net.out_dim() != j.at("out_dim").get<int>())
      fail(ErrorCategory::kParse, "mlp checkpoint: declared dimensions do not match layers");
    return net;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, std::string("mlp checkpoint: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorCategory::kParse, e.what());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) fail(ErrorCategory::kIo, "write failed: " + path.string());
}

}  // namespace detail

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  detail::write_json_file(path, detail::mlp_to_json(net));
}

Mlp load_mlp(const std::filesystem::path& path) {
  try {
    return detail::mlp_from_json(detail::read_json_file(path));
  } catch (const Error& e) {
    fail(e.category(), path.string() + ": " + e.what());
  }
}

}  // namespace voltreg
