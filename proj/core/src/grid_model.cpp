#include "voltreg/grid_model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voltreg/error.hpp"

namespace voltreg {

using json = nlohmann::json;

char phase_letter(Phase p) noexcept { return static_cast<char>('a' + static_cast<int>(p)); }

std::optional<Phase> parse_phase(char c) noexcept {
  switch (c) {
    case 'a': case 'A': return Phase::kA;
    case 'b': case 'B': return Phase::kB;
    case 'c': case 'C': return Phase::kC;
    default: return std::nullopt;
  }
}

PhaseSet PhaseSet::parse(std::string_view letters) {
  PhaseSet set;
  for (char c : letters) {
    auto p = parse_phase(c);
    if (!p) fail(ErrorCategory::kParse, "bad phase letter '" + std::string(1, c) + "'");
    if (set.has(*p)) fail(ErrorCategory::kParse, "repeated phase '" + std::string(1, c) + "'");
    set.insert(*p);
  }
  if (set.empty()) fail(ErrorCategory::kParse, "empty phase set");
  return set;
}

std::string PhaseSet::str() const {
  std::string s;
  for (Phase p : kAllPhases)
    if (has(p)) s.push_back(phase_letter(p));
  return s;
}

// ---------------------------------------------------------------------------
// Feeder::build

namespace {

std::string bus_tag(int id) { return "bus " + std::to_string(id); }

std::string line_tag(std::size_t k, const LineDesc& l) {
  return "line #" + std::to_string(k) + " (" + std::to_string(l.from) + "-" + std::to_string(l.to) + ")";
}

}  // namespace

Feeder Feeder::build(const FeederDesc& desc) {
  auto invalid = [](const std::string& msg) { fail(ErrorCategory::kValidation, msg); };

  Feeder f;
  f.desc_ = desc;
  f.name_ = desc.name;
  if (!(desc.s_base_mva > 0.0)) invalid("s_base_mva must be positive");
  if (!(desc.v0_pu > 0.0)) invalid("v0_pu must be positive");
  f.base_.s_base_mva = desc.s_base_mva;
  f.v0_ = desc.v0_pu;

  if (desc.buses.empty()) invalid("feeder has no buses");

  // Buses and node-phase map.
  std::optional<std::size_t> slack;
  for (std::size_t k = 0; k < desc.buses.size(); ++k) {
    const BusDesc& b = desc.buses[k];
    if (b.id < 0) invalid(bus_tag(b.id) + ": negative id");
    if (f.bus_position(b.id)) invalid(bus_tag(b.id) + ": duplicate bus id");
    if (b.phases.empty()) invalid(bus_tag(b.id) + ": no phases");
    if (!(b.v_base_kv > 0.0)) invalid(bus_tag(b.id) + ": v_base_kv must be positive");
    if (b.slack) {
      if (slack) invalid(bus_tag(b.id) + ": duplicate slack (bus " + std::to_string(desc.buses[*slack].id) + " is already slack)");
      if (b.phases != PhaseSet::all()) invalid(bus_tag(b.id) + ": slack bus must carry phases abc");
      slack = k;
    }
    f.buses_.push_back(Bus{b.id, b.phases, b.slack, b.v_base_kv});
    std::array<std::optional<std::size_t>, 3> slots{};
    for (Phase p : kAllPhases) {
      if (!b.phases.has(p)) continue;
      slots[static_cast<int>(p)] = f.nodes_.size();
      f.nodes_.push_back(NodePhase{k, p});
    }
    f.bus_nodes_.push_back(slots);
  }
  if (!slack) invalid("feeder has no slack bus");
  f.slack_bus_ = *slack;
  for (std::size_t i = 0; i < f.nodes_.size(); ++i)
    (f.nodes_[i].bus == f.slack_bus_ ? f.slack_nodes_ : f.non_slack_nodes_).push_back(i);

  // Lines.
  for (std::size_t k = 0; k < desc.lines.size(); ++k) {
    const LineDesc& l = desc.lines[k];
    auto from = f.bus_position(l.from);
    auto to = f.bus_position(l.to);
    if (!from) invalid(line_tag(k, l) + ": unknown from-bus " + std::to_string(l.from));
    if (!to) invalid(line_tag(k, l) + ": unknown to-bus " + std::to_string(l.to));
    if (*from == *to) invalid(line_tag(k, l) + ": self loop");
    if (l.phases.empty()) invalid(line_tag(k, l) + ": no phases");
    if (!l.phases.subset_of(f.buses_[*from].phases) || !l.phases.subset_of(f.buses_[*to].phases))
      invalid(line_tag(k, l) + ": line phases " + l.phases.str() + " absent at an endpoint");
    double vb_from = f.buses_[*from].v_base_kv;
    double vb_to = f.buses_[*to].v_base_kv;
    if (std::abs(vb_from - vb_to) > 1e-9 * vb_from)
      invalid(line_tag(k, l) + ": endpoints have different v_base_kv (transformers unsupported)");

    std::vector<int> ph;
    for (Phase p : kAllPhases)
      if (l.phases.has(p)) ph.push_back(static_cast<int>(p));
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        bool present = l.phases.has(static_cast<Phase>(r)) && l.phases.has(static_cast<Phase>(c));
        if (!present && (l.z_ohm(r, c) != Complex{} || l.y_shunt_siemens(r, c) != Complex{}))
          invalid(line_tag(k, l) + ": nonzero impedance entry on absent phase");
        if (l.z_ohm(r, c) != l.z_ohm(c, r) || l.y_shunt_siemens(r, c) != l.y_shunt_siemens(c, r))
          invalid(line_tag(k, l) + ": impedance matrices must be symmetric");
      }

    double zb = f.base_.impedance_base_ohm(vb_from);
    const auto n = static_cast<Eigen::Index>(ph.size());
    Eigen::MatrixXcd zsub(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) zsub(r, c) = l.z_ohm(ph[r], ph[c]) / zb;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(zsub);
    Eigen::MatrixXcd ysub = lu.inverse();
    Eigen::MatrixXcd resid = zsub * ysub - Eigen::MatrixXcd::Identity(n, n);
    if (!ysub.allFinite() || resid.cwiseAbs().maxCoeff() > 1e-9)
      invalid(line_tag(k, l) + ": singular series impedance");
    // Reciprocity: make the inverse exactly symmetric.
    ysub = (0.5 * (ysub + ysub.transpose())).eval();

    Line line;
    line.from = *from;
    line.to = *to;
    line.phases = l.phases;
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) {
        line.y_series(ph[r], ph[c]) = ysub(r, c);
        line.y_shunt(ph[r], ph[c]) = l.y_shunt_siemens(ph[r], ph[c]) * zb;
      }
    f.lines_.push_back(line);
  }

  // Connectivity over buses.
  {
    std::vector<std::vector<std::size_t>> adj(f.buses_.size());
    for (const Line& l : f.lines_) {
      adj[l.from].push_back(l.to);
      adj[l.to].push_back(l.from);
    }
    std::vector<bool> seen(f.buses_.size(), false);
    std::queue<std::size_t> q;
    q.push(f.slack_bus_);
    seen[f.slack_bus_] = true;
    while (!q.empty()) {
      std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u])
        if (!seen[v]) {
          seen[v] = true;
          q.push(v);
        }
    }
    for (std::size_t k = 0; k < seen.size(); ++k)
      if (!seen[k]) invalid(bus_tag(f.buses_[k].id) + ": disconnected graph, not reachable from slack");
  }

  auto resolve = [&](const char* kind, std::size_t k, int bus, Phase p) -> std::size_t {
    std::string tag = std::string(kind) + " #" + std::to_string(k) + " at " + bus_tag(bus) + "." + phase_letter(p);
    auto pos = f.bus_position(bus);
    if (!pos) invalid(tag + ": unknown bus");
    auto idx = f.index_of(bus, p);
    if (!idx) invalid(tag + ": device on absent phase");
    if (*pos == f.slack_bus_) invalid(tag + ": device on slack bus");
    return *idx;
  };

  for (std::size_t k = 0; k < desc.pvs.size(); ++k) {
    const PvDesc& d = desc.pvs[k];
    std::size_t node = resolve("pv", k, d.bus, d.phase);
    if (!(d.p_rated_mw > 0.0)) invalid("pv #" + std::to_string(k) + ": p_rated_mw must be positive");
    if (!(d.s_rated_mva >= d.p_rated_mw)) invalid("pv #" + std::to_string(k) + ": s_rated_mva < p_rated_mw");
    f.pvs_.push_back(PvUnit{node, f.base_.power_to_pu(d.p_rated_mw), f.base_.power_to_pu(d.s_rated_mva)});
  }
  for (std::size_t k = 0; k < desc.svcs.size(); ++k) {
    const SvcDesc& d = desc.svcs[k];
    std::size_t node = resolve("svc", k, d.bus, d.phase);
    if (!(d.q_min_mvar <= 0.0 && 0.0 <= d.q_max_mvar && d.q_min_mvar < d.q_max_mvar))
      invalid("svc #" + std::to_string(k) + ": requires q_min <= 0 <= q_max and q_min < q_max");
    f.svcs_.push_back(SvcUnit{node, f.base_.power_to_pu(d.q_min_mvar), f.base_.power_to_pu(d.q_max_mvar)});
  }
  for (std::size_t k = 0; k < desc.loads.size(); ++k) {
    const LoadDesc& d = desc.loads[k];
    std::size_t node = resolve("load", k, d.bus, d.phase);
    if (!(d.p_mw >= 0.0)) invalid("load #" + std::to_string(k) + ": p_mw must be non-negative");
    f.loads_.push_back(LoadPoint{node, f.base_.power_to_pu(d.p_mw), f.base_.power_to_pu(d.q_mvar)});
  }
  return f;
}

std::optional<std::size_t> Feeder::bus_position(int bus_id) const {
  for (std::size_t k = 0; k < buses_.size(); ++k)
    if (buses_[k].id == bus_id) return k;
  return std::nullopt;
}

std::optional<std::size_t> Feeder::index_of(int bus_id, Phase phase) const {
  auto pos = bus_position(bus_id);
  if (!pos) return std::nullopt;
  return bus_nodes_[*pos][static_cast<int>(phase)];
}

Complex Feeder::slack_phasor(Phase phase) const {
  static constexpr double kDeg = std::numbers::pi / 180.0;
  static constexpr std::array<double, 3> kAngle{0.0, -120.0, 120.0};
  return std::polar(v0_, kAngle[static_cast<int>(phase)] * kDeg);
}

ComplexVector Feeder::flat_start() const {
  ComplexVector v(static_cast<Eigen::Index>(nodes_.size()));
  for (std::size_t i = 0; i < nodes_.size(); ++i) v[static_cast<Eigen::Index>(i)] = slack_phasor(nodes_[i].phase);
  return v;
}

std::string Feeder::label(std::size_t node_index) const {
  const NodePhase& n = nodes_.at(node_index);
  return std::to_string(buses_[n.bus].id) + "." + phase_letter(n.phase);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Matrix3c read_matrix3(const json& j, const std::string& what) {
  Matrix3c m = Matrix3c::Zero();
  if (!j.is_array() || j.size() != 3) fail(ErrorCategory::kParse, what + ": expected a 3x3 array of [re, im] pairs");
  for (std::size_t r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 3) fail(ErrorCategory::kParse, what + ": row " + std::to_string(r) + " must have 3 entries");
    for (std::size_t c = 0; c < 3; ++c) {
      const json& e = j[r][c];
      if (!e.is_array() || e.size() != 2) fail(ErrorCategory::kParse, what + ": entry must be a [re, im] pair");
      m(static_cast<int>(r), static_cast<int>(c)) = Complex(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

Phase read_phase(const json& j, const std::string& what) {
  std::string s = j.get<std::string>();
  if (s.size() != 1 || !parse_phase(s[0])) fail(ErrorCategory::kParse, what + ": bad phase '" + s + "'");
  return *parse_phase(s[0]);
}

}  // namespace

FeederDesc parse_feeder_json(std::string_view text, std::string_view source) {
  const std::string src(source);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCategory::kParse, src + ": " + e.what());
  }
  FeederDesc d;
  try {
    d.name = j.value("name", std::string{});
    d.s_base_mva = j.value("s_base_mva", 1.0);
    d.v0_pu = j.value("v0_pu", 1.0);
    for (const json& b : j.at("buses")) {
      BusDesc bus;
      bus.id = b.at("id").get<int>();
      bus.phases = PhaseSet::parse(b.value("phases", std::string("abc")));
      bus.slack = b.value("slack", false);
      bus.v_base_kv = b.at("v_base_kv").get<double>();
      d.buses.push_back(bus);
    }
    for (const json& l : j.at("lines")) {
      LineDesc line;
      line.from = l.at("from").get<int>();
      line.to = l.at("to").get<int>();
      std::string tag = "line " + std::to_string(line.from) + "-" + std::to_string(line.to);
      line.phases = PhaseSet::parse(l.value("phases", std::string("abc")));
      line.z_ohm = read_matrix3(l.at("z_ohm"), tag + " z_ohm");
      if (l.contains("y_shunt_siemens")) line.y_shunt_siemens = read_matrix3(l["y_shunt_siemens"], tag + " y_shunt_siemens");
      if (l.contains("length_km")) {
        double len = l["length_km"].get<double>();
        if (!(len > 0.0)) fail(ErrorCategory::kParse, tag + ": length_km must be positive");
        line.z_ohm *= len;
        line.y_shunt_siemens *= len;
      }
      d.lines.push_back(line);
    }
    if (j.contains("pvs"))
      for (const json& p : j["pvs"])
        d.pvs.push_back(PvDesc{p.at("bus").get<int>(), read_phase(p.at("phase"), "pv"),
                               p.at("p_rated_mw").get<double>(), p.at("s_rated_mva").get<double>()});
    if (j.contains("svcs"))
      for (const json& s : j["svcs"])
        d.svcs.push_back(SvcDesc{s.at("bus").get<int>(), read_phase(s.at("phase"), "svc"),
                                 s.at("q_min_mvar").get<double>(), s.at("q_max_mvar").get<double>()});
    if (j.contains("loads"))
      for (const json& s : j["loads"])
        d.loads.push_back(LoadDesc{s.at("bus").get<int>(), read_phase(s.at("phase"), "load"),
                                   s.at("p_mw").get<double>(), s.value("q_mvar", 0.0)});
  } catch (const json::exception& e) {
    fail(ErrorCategory::kParse, src + ": " + e.what());
  } catch (const Error& e) {
    fail(e.category(), src + ": " + e.what());
  }
  return d;
}

Feeder load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot open feeder file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  FeederDesc d = parse_feeder_json(ss.str(), path.string());
  try {
    return Feeder::build(d);
  } catch (const Error& e) {
    fail(e.category(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Network matrices

Eigen::MatrixXcd build_ybus(const Feeder& feeder) {
  const auto n = static_cast<Eigen::Index>(feeder.node_phase_count());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  const auto& buses = feeder.buses();
  for (const Line& l : feeder.lines()) {
    const int from_id = buses[l.from].id;
    const int to_id = buses[l.to].id;
    for (Phase a : kAllPhases) {
      if (!l.phases.has(a)) continue;
      const auto fa = static_cast<Eigen::Index>(*feeder.index_of(from_id, a));
      const auto ta = static_cast<Eigen::Index>(*feeder.index_of(to_id, a));
      for (Phase b : kAllPhases) {
        if (!l.phases.has(b)) continue;
        const auto fb = static_cast<Eigen::Index>(*feeder.index_of(from_id, b));
        const auto tb = static_cast<Eigen::Index>(*feeder.index_of(to_id, b));
        const Complex ys = l.y_series(static_cast<int>(a), static_cast<int>(b));
        const Complex half_shunt = 0.5 * l.y_shunt(static_cast<int>(a), static_cast<int>(b));
        y(fa, fb) += ys + half_shunt;
        y(ta, tb) += ys + half_shunt;
        y(fa, tb) -= ys;
        y(ta, fb) -= ys;
      }
    }
  }
  return y;
}

Eigen::MatrixXcd build_zbus(const Feeder& feeder) { return build_zbus(feeder, build_ybus(feeder)); }

Eigen::MatrixXcd build_zbus(const Feeder& feeder, const Eigen::MatrixXcd& ybus) {
  const auto ns = feeder.non_slack_nodes();
  const auto m = static_cast<Eigen::Index>(ns.size());
  Eigen::MatrixXcd ynn(m, m);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c)
      ynn(r, c) = ybus(static_cast<Eigen::Index>(ns[r]), static_cast<Eigen::Index>(ns[c]));

  auto singular = [&](Eigen::Index r, const std::string& why) {
    fail(ErrorCategory::kNumerical, "singular non-slack admittance partition at node-phase " +
                                        feeder.label(ns[static_cast<std::size_t>(r)]) + " (index " +
                                        std::to_string(ns[static_cast<std::size_t>(r)]) + "): " + why);
  };
  for (Eigen::Index r = 0; r < m; ++r)
    if (ynn.row(r).cwiseAbs().maxCoeff() == 0.0) singular(r, "isolated, zero row");

  // A node-phase group with no admittance path to the slack and no shunt
  // makes the partition singular even when no row is zero.
  {
    const auto n = ybus.rows();
    std::vector<bool> reach(static_cast<std::size_t>(n), false);
    std::queue<Eigen::Index> q;
    for (std::size_t s : feeder.slack_nodes()) {
      reach[s] = true;
      q.push(static_cast<Eigen::Index>(s));
    }
    while (!q.empty()) {
      Eigen::Index u = q.front();
      q.pop();
      for (Eigen::Index v = 0; v < n; ++v)
        if (!reach[static_cast<std::size_t>(v)] && ybus(u, v) != Complex{}) {
          reach[static_cast<std::size_t>(v)] = true;
          q.push(v);
        }
    }
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = static_cast<Eigen::Index>(ns[static_cast<std::size_t>(r)]);
      if (!reach[static_cast<std::size_t>(i)] && ybus.row(i).sum() == Complex{})
        singular(r, "islanded from the slack without shunt");
    }
  }

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(ynn);
  Eigen::MatrixXcd z = lu.inverse();
  if (!z.allFinite()) singular(0, "LU produced non-finite inverse");
  const double resid = (ynn * z - Eigen::MatrixXcd::Identity(m, m)).cwiseAbs().maxCoeff();
  if (resid >= 1e-10) {
    // Report the worst row of the residual as the offending index.
    Eigen::Index worst = 0;
    (ynn * z - Eigen::MatrixXcd::Identity(m, m)).cwiseAbs().rowwise().maxCoeff().maxCoeff(&worst);
    singular(worst, "inverse residual " + std::to_string(resid));
  }
  return z;
}

}  // namespace voltreg
