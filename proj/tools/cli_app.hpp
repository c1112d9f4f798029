#pragma once

// Batch front-end: one INI config per run, JSON/CSV artifacts in an output
// directory. Exit codes: 0 success, 2 bad input, 3 numerical failure.

#include "schrodctl/entropy.hpp"
#include "schrodctl/steering.hpp"

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace schrodctl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

using Section = std::map<std::string, std::string>;
using Schema = std::map<std::string, Section>;

/// Every accepted key with its default; anything else is rejected.
inline const Schema &schema() {
  static const Schema s = [] {
    const Section profile{{"kind", "zero"}, {"value", "0"},   {"a", "0"},     {"b", "0"},
                          {"amplitude", "0"}, {"frequency", "1"}, {"coeffs", ""}, {"file", ""}};
    Schema out;
    out["run"] = {{"seed", "7"}};
    out["potential"] = profile;
    out["potential"]["n_grid"] = "2048";
    out["potential"]["n_modes"] = "12";
    out["coupling"] = profile;
    out["coupling"]["kind"] = "polynomial";
    out["coupling"]["coeffs"] = "0,0,1";
    out["coupling"]["truncation"] = "0";
    out["coupling"]["threshold"] = "1e-4";
    out["coupling"]["gap"] = "1e-8";
    out["simulation"] = {{"initial", "1:1"},    {"tangent", ""},        {"t_final", "10"},
                         {"dt", "1e-3"},        {"stride", "100"},      {"control", "none"},
                         {"control_value", "0"}, {"control_atoms", "20"}, {"control_amplitude", "1"},
                         {"return_eps", "0.1"}, {"k_max", "1000000"},   {"return_modes", "0"}};
    out["moments"] = {{"base", "1:1"},   {"target", ""},      {"target_size", "0"}, {"horizon", "40"},
                      {"n_atoms", "200"}, {"rho", "1e-10"},   {"s_order", "1"},     {"sample_dt", "0.01"}};
    out["steering"] = {{"z0", "1:1"},       {"z1", ""},           {"direction", ""},  {"size", "1e-3"},
                       {"horizon", "40"},   {"n_atoms", "200"},   {"rho", "1e-10"},   {"dt", "1e-3"},
                       {"tol", "1e-10"},    {"rel_tol", "0"},     {"max_iter", "8"},  {"delta", "0.5"},
                       {"return_eps", "0.05"}, {"k_max", "1000000"}, {"s_order", "1"}, {"sample_dt", "0.01"}};
    out["entropy"] = {{"initial", "1:1"},   {"m", "1"},           {"count", "400"},   {"knots", "16"},
                      {"k", "0.5"},         {"ball_radius", "0.5"}, {"dt", "1e-3"},   {"n_eps", "8"},
                      {"lo_quantile", "0.1"}, {"hi_quantile", "0.6"}, {"bootstrap", "200"}, {"threads", "0"}};
    return out;
  }();
  return s;
}

/// git blob id: sha1("blob <size>\0" + content).
inline std::string git_blob_hash(const std::string &content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw NumericalError("SHA-1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

inline std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string &s, const std::string &what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception &) {
    throw ValidationError(what + ": not a number: '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v))
    throw ValidationError(what + ": not a finite number: '" + s + "'");
  return v;
}

class Config {
public:
  Config(const fs::path &path, const std::optional<std::uint64_t> &seed) : dir_(path.parent_path()) {
    text_ = read_file(path);
    boost::property_tree::ptree tree;
    std::istringstream in(text_);
    try {
      boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error &e) {
      throw ValidationError("malformed config " + path.string() + ": " + e.message());
    }
    values_ = schema();
    for (const auto &[section, body] : tree) {
      auto sec = values_.find(section);
      if (sec == values_.end() || body.empty())
        throw ValidationError("unknown config section or top-level key: '" + section + "'");
      for (const auto &[key, leaf] : body) {
        auto it = sec->second.find(key);
        if (it == sec->second.end())
          throw ValidationError("unknown config key: [" + section + "] " + key);
        it->second = trim(leaf.data());
      }
    }
    if (seed)
      values_["run"]["seed"] = std::to_string(*seed);
  }

  const std::string &text() const { return text_; }

  std::string str(const std::string &section, const std::string &key) const { return values_.at(section).at(key); }

  double num(const std::string &section, const std::string &key) const {
    return parse_double(str(section, key), "[" + section + "] " + key);
  }

  std::size_t count(const std::string &section, const std::string &key) const {
    const double v = num(section, key);
    if (v < 0.0 || v != std::floor(v) || v > 1e15)
      throw ValidationError("[" + section + "] " + key + ": expected a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  std::vector<double> list(const std::string &section, const std::string &key) const {
    std::vector<double> out;
    for (const auto &item : split(str(section, key), ','))
      out.push_back(parse_double(item, "[" + section + "] " + key));
    return out;
  }

  /// Path relative to the config file's directory.
  fs::path path(const std::string &section, const std::string &key) const {
    const fs::path p = str(section, key);
    return p.is_absolute() ? p : dir_ / p;
  }

  json resolved() const {
    json out = json::object();
    for (const auto &[section, body] : values_)
      for (const auto &[key, value] : body)
        out[section][key] = value;
    return out;
  }

  /// Hashes of the config and of every data file it references.
  json inputs() const {
    json out = json::object();
    out["config"] = git_blob_hash(text_);
    for (const char *section : {"potential", "coupling"})
      if (!str(section, "file").empty())
        out[std::string(section) + ".file"] = git_blob_hash(read_file(path(section, "file")));
    return out;
  }

private:
  fs::path dir_;
  std::string text_;
  Schema values_;
};

// --- pipeline pieces ------------------------------------------------------

inline Potential read_profile_csv(const fs::path &file) {
  std::istringstream in(read_file(file));
  std::vector<double> x, v;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty() || line[0] == '#')
      continue;
    const auto cols = split(line, ',');
    if (cols.size() != 2)
      throw ValidationError(file.string() + ":" + std::to_string(row) + ": expected two columns x,V");
    try {
      x.push_back(parse_double(cols[0], "x"));
      v.push_back(parse_double(cols[1], "V"));
    } catch (const ValidationError &) {
      if (x.empty() && v.empty() && row == 1)
        continue; // header row
      throw ValidationError(file.string() + ":" + std::to_string(row) + ": bad number");
    }
  }
  return Potential::from_samples(std::move(x), std::move(v));
}

inline Potential make_profile(const Config &cfg, const std::string &section, std::size_t n_grid) {
  const std::string kind = cfg.str(section, "kind");
  if (kind == "zero")
    return Potential::zero(n_grid);
  if (kind == "constant")
    return Potential::constant(cfg.num(section, "value"), n_grid);
  if (kind == "linear")
    return Potential::linear(cfg.num(section, "a"), cfg.num(section, "b"), n_grid);
  if (kind == "sine")
    return Potential::sine(cfg.num(section, "amplitude"), cfg.num(section, "frequency"), n_grid);
  if (kind == "polynomial")
    return Potential::polynomial(cfg.list(section, "coeffs"), n_grid);
  if (kind == "csv")
    return read_profile_csv(cfg.path(section, "file"));
  throw ValidationError("[" + section + "] kind: expected zero, constant, linear, sine, polynomial or csv");
}

/// "j:re[:im], ..." with 1-based j; normalized when `unit` is set.
inline StateCoeffs parse_state(const std::string &text, const BasisPtr &basis, const std::string &what,
                               bool unit = true) {
  auto z = StateCoeffs::zero(basis);
  const auto items = split(text, ',');
  if (text.empty() || items.empty())
    throw ValidationError(what + ": empty state");
  for (const auto &item : items) {
    const auto parts = split(item, ':');
    if (parts.size() < 2 || parts.size() > 3)
      throw ValidationError(what + ": expected j:re[:im], got '" + item + "'");
    const double j = parse_double(parts[0], what);
    if (j < 1.0 || j != std::floor(j) || j > static_cast<double>(basis->size()))
      throw ValidationError(what + ": mode index out of range: '" + parts[0] + "'");
    z[static_cast<std::size_t>(j) - 1] += cplx(parse_double(parts[1], what),
                                               parts.size() == 3 ? parse_double(parts[2], what) : 0.0);
  }
  if (unit) {
    detail::require(z.l2_norm() > 0.0, what + ": zero state");
    z = z.normalized();
  }
  return z;
}

struct Model {
  Potential potential;
  EigenSystem system;
  CouplingMatrix coupling;
};

inline Model build_model(const Config &cfg) {
  const std::size_t n_grid = cfg.count("potential", "n_grid");
  const std::size_t n_modes = cfg.count("potential", "n_modes");
  Model m{make_profile(cfg, "potential", n_grid), {}, {}};
  m.system = solve_sturm_liouville(m.potential, n_modes, n_grid);
  const Potential profile = make_profile(cfg, "coupling", n_grid);
  m.coupling = coupling_matrix(profile, m.system, cfg.count("coupling", "truncation"));
  return m;
}

// --- serialization ----------------------------------------------------------

inline json to_json(const std::vector<double> &v) { return json(v); }

inline json to_json(const StateCoeffs &z) {
  json re = json::array(), im = json::array();
  for (std::size_t j = 0; j < z.size(); ++j) {
    re.push_back(z[j].real());
    im.push_back(z[j].imag());
  }
  return {{"re", re}, {"im", im}};
}

inline json to_json(const ConditionReport &r) {
  json res = json::array();
  for (const auto &q : r.resonances)
    res.push_back({q[0], q[1], q[2], q[3]});
  return {{"truncation", r.truncation},
          {"thresholds", {{"coupling", r.threshold}, {"gap", r.gap}}},
          {"min_weighted_coupling", r.min_weighted_coupling},
          {"worst_pair", {r.worst_pair[0], r.worst_pair[1]}},
          {"pass_i", r.pass_i},
          {"resonances", res},
          {"pass_ii", r.pass_ii}};
}

inline json to_json(const MomentTable &t) {
  json rows = json::array();
  for (Eigen::Index m = 0; m < t.d.rows(); ++m)
    for (Eigen::Index k = 0; k < t.d.cols(); ++k)
      rows.push_back({m + 1, k + 1, t.d(m, k).real(), t.d(m, k).imag(), t.omega(m, k)});
  return {{"case", static_cast<int>(t.which)}, {"d0", t.d0}, {"roles", t.roles}, {"defect", t.defect}, {"table", rows}};
}

inline json to_json(const ControlSignal &u) {
  json atoms = json::array();
  for (const auto &a : u.atoms())
    atoms.push_back({{"center", a.center}, {"width", a.width}, {"weight", a.weight}});
  return {{"horizon", u.horizon()}, {"atoms", atoms}};
}

inline json to_json(const ThetaNorm &t) {
  return {{"b", t.b}, {"l1", t.l1}, {"moments", t.moments}, {"hs", t.hs}, {"s_order", t.s_order}, {"total", t.total()}};
}

inline json to_json(const ReturnTime &r) {
  return {{"k", r.k}, {"defect", r.defect}, {"found", r.found}, {"phase_errors", r.phase_errors}};
}

inline json to_json(const ChannelFit &c) {
  return {{"epsilons", c.epsilons}, {"counts", c.counts}, {"slope", c.slope}, {"ci95", {c.ci_low, c.ci_high}}};
}

class Output {
public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
      throw ValidationError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  std::ofstream open(const std::string &name) const {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out)
      throw ValidationError("cannot write " + (dir_ / name).string());
    out << std::setprecision(17);
    return out;
  }

  void write_json(const std::string &name, const json &j) const { open(name) << j.dump(2) << '\n'; }

  void write_trajectory(const std::string &name, const Trajectory &tr) const {
    auto out = open(name);
    out << "t";
    for (std::size_t j = 1; j <= tr.states.front().size(); ++j)
      out << ",re_c" << j << ",im_c" << j;
    out << '\n';
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      out << tr.times[i];
      for (std::size_t j = 0; j < tr.states[i].size(); ++j)
        out << ',' << tr.states[i][j].real() << ',' << tr.states[i][j].imag();
      out << '\n';
    }
  }

  void write_samples(const std::string &name, const ControlSignal &u, double dt) const {
    auto out = open(name);
    out << "t,u\n";
    for (const auto &[t, v] : u.samples(dt))
      out << t << ',' << v << '\n';
  }

private:
  fs::path dir_;
};

// --- subcommands --------------------------------------------------------------

struct Context {
  const Config &cfg;
  const Output &out;
  json result = json::object();
  std::vector<std::string> artifacts;
  int status = 0;
};

inline void cmd_eig(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  const auto &e = m.system;
  {
    auto f = ctx.out.open("eigenvalues.csv");
    f << "j,lambda\n";
    for (std::size_t j = 0; j < e.n_modes(); ++j)
      f << j + 1 << ',' << e.lambdas()[static_cast<Eigen::Index>(j)] << '\n';
  }
  {
    auto f = ctx.out.open("modes.csv");
    f << "x";
    for (std::size_t j = 1; j <= e.n_modes(); ++j)
      f << ",e" << j;
    f << '\n';
    for (Eigen::Index i = 0; i < e.modes.rows(); ++i) {
      f << e.grid[i];
      for (Eigen::Index j = 0; j < e.modes.cols(); ++j)
        f << ',' << e.modes(i, j);
      f << '\n';
    }
  }
  ctx.artifacts = {"eigenvalues.csv", "modes.csv"};
  std::vector<double> lambdas(e.lambdas().data(), e.lambdas().data() + e.lambdas().size());
  ctx.result = {{"n_modes", e.n_modes()}, {"n_grid", e.n_grid()}, {"gauge_shift", e.gauge_shift}, {"lambdas", lambdas}};
  if (e.n_modes() >= 8) {
    const auto a = check_asymptotics(e, m.potential);
    ctx.result["asymptotics"] = {{"remainders", a.remainders},
                                 {"last_quarter_fraction", a.last_quarter_fraction},
                                 {"plateau", a.plateau},
                                 {"scaled_sup_distance", a.scaled_sup_distance},
                                 {"growth_flag", a.growth_flag}};
  }
}

inline void cmd_coupling(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  const auto &c = m.coupling;
  auto f = ctx.out.open("coupling.csv");
  f << "m,k,q,omega\n";
  for (std::size_t a = 0; a < c.size(); ++a)
    for (std::size_t b = 0; b < c.size(); ++b)
      f << a + 1 << ',' << b + 1 << ',' << c.q(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) << ','
        << c.omega(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) << '\n';
  ctx.artifacts = {"coupling.csv"};
  ctx.result = {{"truncation", c.size()}, {"max_abs_q", c.q.cwiseAbs().maxCoeff()}};
}

inline void cmd_check(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  ctx.result = to_json(check_condition(m.coupling, ctx.cfg.num("coupling", "threshold"), ctx.cfg.num("coupling", "gap")));
}

inline ControlSignal simulation_control(const Config &cfg, double t_final) {
  const std::string kind = cfg.str("simulation", "control");
  if (kind == "none")
    return ControlSignal(t_final, {});
  if (kind == "bumps") {
    Rng rng(cfg.count("run", "seed"));
    const double amp = cfg.num("simulation", "control_amplitude");
    std::vector<double> w(cfg.count("simulation", "control_atoms"));
    for (auto &x : w)
      x = rng.uniform(-amp, amp);
    return ControlSignal::uniform(t_final, w);
  }
  throw ValidationError("[simulation] control: expected none, constant or bumps");
}

template <class Run> void with_control(const Config &cfg, double t_final, const Run &run) {
  if (cfg.str("simulation", "control") == "constant")
    run(ConstantControl{cfg.num("simulation", "control_value")});
  else
    run(simulation_control(cfg, t_final));
}

inline json norm_ledger(const Trajectory &tr) {
  return {{"step", tr.step},
          {"recorded", tr.times.size()},
          {"max_l2_drift", tr.max_l2_drift},
          {"sup_h3", tr.sup_h3},
          {"final_l2", tr.l2_norms.back()},
          {"final_h3", tr.h3_norms.back()},
          {"final_state", to_json(tr.final_state())}};
}

inline void cmd_simulate(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  const auto z0 = parse_state(ctx.cfg.str("simulation", "initial"), m.coupling.basis, "[simulation] initial");
  const double t_final = ctx.cfg.num("simulation", "t_final");
  with_control(ctx.cfg, t_final, [&](const auto &u) {
    const auto tr = propagate(z0, u, m.coupling, t_final, ctx.cfg.num("simulation", "dt"),
                              {.stride = std::max<std::size_t>(1, ctx.cfg.count("simulation", "stride"))});
    ctx.out.write_trajectory("trajectory.csv", tr);
    ctx.result = norm_ledger(tr);
  });
  ctx.artifacts = {"trajectory.csv"};
}

inline void cmd_linearize(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  const auto zt = parse_state(ctx.cfg.str("simulation", "initial"), m.coupling.basis, "[simulation] initial");
  std::optional<StateCoeffs> w0;
  if (!ctx.cfg.str("simulation", "tangent").empty())
    w0 = project_tangent(parse_state(ctx.cfg.str("simulation", "tangent"), m.coupling.basis, "[simulation] tangent", false), zt);
  const double t_final = ctx.cfg.num("simulation", "t_final");
  with_control(ctx.cfg, t_final, [&](const auto &u) {
    const auto tr = linearized_propagate(zt, u, m.coupling, t_final, ctx.cfg.num("simulation", "dt"), w0,
                                         {.stride = std::max<std::size_t>(1, ctx.cfg.count("simulation", "stride"))});
    double tangency = 0.0;
    for (std::size_t i = 0; i < tr.times.size(); ++i)
      tangency = std::max(tangency, std::abs(tangency_defect(tr.states[i], zt, tr.times[i])));
    ctx.out.write_trajectory("linearized.csv", tr);
    ctx.result = norm_ledger(tr);
    ctx.result["max_tangency_defect"] = tangency;
  });
  ctx.artifacts = {"linearized.csv"};
}

inline void cmd_return_time(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  std::size_t modes = ctx.cfg.count("simulation", "return_modes");
  if (modes == 0)
    modes = m.coupling.size();
  const auto r = find_return_time(*m.coupling.basis, modes, ctx.cfg.num("simulation", "return_eps"),
                                  static_cast<long long>(ctx.cfg.count("simulation", "k_max")));
  ctx.result = to_json(r);
  ctx.result["modes"] = modes;
  const auto z = parse_state(ctx.cfg.str("simulation", "initial"), m.coupling.basis, "[simulation] initial");
  const auto check = verify_return(z, r.k, 3.0, modes);
  ctx.result["verify"] = {{"value", check.value},
                          {"bound", check.bound},
                          {"head_phase_error", check.head_phase_error},
                          {"head_norm", check.head_norm},
                          {"tail_norm", check.tail_norm}};
}

struct MomentInputs {
  StateCoeffs base, target;
};

inline MomentInputs moment_inputs(const Config &cfg, const CouplingMatrix &c) {
  const auto zt = parse_state(cfg.str("moments", "base"), c.basis, "[moments] base");
  StateCoeffs y = StateCoeffs::zero(c.basis);
  if (!cfg.str("moments", "target").empty())
    y = project_tangent(parse_state(cfg.str("moments", "target"), c.basis, "[moments] target", false), zt);
  const double size = cfg.num("moments", "target_size");
  if (size > 0.0) {
    detail::require(hs_norm(y, 3.0) > 0.0, "[moments] target_size needs a non-zero target");
    y = cplx(size / hs_norm(y, 3.0)) * y;
  }
  return {zt, y};
}

inline void cmd_moments(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  const auto in = moment_inputs(ctx.cfg, m.coupling);
  const auto table = target_to_moments(in.base, in.target, m.coupling);
  ctx.result = to_json(table);
  ctx.result["identity_residual"] = moment_identity_residual(table, in.base, in.target, m.coupling);
  ctx.result["target"] = to_json(in.target);
}

inline void cmd_synth(Context &ctx) {
  const auto m = build_model(ctx.cfg);
  const auto in = moment_inputs(ctx.cfg, m.coupling);
  const auto table = target_to_moments(in.base, in.target, m.coupling);
  const auto syn = synthesize_control(table, ctx.cfg.num("moments", "horizon"), ctx.cfg.count("moments", "n_atoms"),
                                      ctx.cfg.num("moments", "rho"), ctx.cfg.num("coupling", "gap"));
  const auto endpoint = linearized_endpoint(in.base, syn.control, m.coupling);
  ctx.out.write_samples("control.csv", syn.control, ctx.cfg.num("moments", "sample_dt"));
  ctx.artifacts = {"control.csv"};
  ctx.result = {{"max_residual", syn.max_residual},
                {"l2_residual", syn.l2_residual},
                {"gram_condition", syn.gram_condition},
                {"n_frequencies", syn.n_frequencies},
                {"theta", to_json(theta_norm(syn.control, m.coupling, ctx.cfg.num("moments", "s_order")))},
                {"endpoint_error_h3", hs_norm(endpoint - in.target, 3.0)},
                {"endpoint_error_bound", endpoint_error_bound(in.base, m.coupling, syn.max_residual)},
                {"control", to_json(syn.control)}};
}

inline void cmd_steer(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const auto m = build_model(cfg);
  const auto z0 = parse_state(cfg.str("steering", "z0"), m.coupling.basis, "[steering] z0");
  StateCoeffs z1 = z0;
  const bool has_z1 = !cfg.str("steering", "z1").empty(), has_dir = !cfg.str("steering", "direction").empty();
  detail::require(!(has_z1 && has_dir), "[steering] give either z1 or direction, not both");
  if (has_z1)
    z1 = parse_state(cfg.str("steering", "z1"), m.coupling.basis, "[steering] z1");
  if (has_dir) {
    StateCoeffs w = project_tangent(parse_state(cfg.str("steering", "direction"), m.coupling.basis,
                                                "[steering] direction", false),
                                    z0);
    detail::require(hs_norm(w, 3.0) > 0.0, "[steering] direction has no tangent component");
    w = cplx(cfg.num("steering", "size") / hs_norm(w, 3.0)) * w;
    z1 = lift(w, z0, cfg.num("steering", "delta"));
  }
  SteeringConfig sc;
  sc.horizon = cfg.num("steering", "horizon");
  sc.n_atoms = cfg.count("steering", "n_atoms");
  sc.rho = cfg.num("steering", "rho");
  sc.dt = cfg.num("steering", "dt");
  sc.tol = cfg.num("steering", "tol");
  sc.rel_tol = cfg.num("steering", "rel_tol");
  sc.max_iter = cfg.count("steering", "max_iter");
  sc.delta = cfg.num("steering", "delta");
  sc.return_eps = cfg.num("steering", "return_eps");
  sc.k_max = static_cast<long long>(cfg.count("steering", "k_max"));
  sc.s_order = cfg.num("steering", "s_order");
  sc.gap = cfg.num("coupling", "gap");
  const auto run = newton_control(z0, z1, m.coupling, sc);

  json iterates = json::array();
  for (const auto &it : run.iterates)
    iterates.push_back(
        {{"error_h3", it.error_h3}, {"theta_norm", it.theta_norm}, {"residual", it.residual}, {"tangency", it.tangency}});
  ctx.result = {{"status", to_string(run.status)},
                {"iterations", run.iterates.size() - 1},
                {"initial_error", run.initial_error},
                {"final_error", run.final_error},
                {"outside_local_regime", run.outside_local_regime},
                {"return_time", to_json(run.return_time)},
                {"return_gap", run.return_gap},
                {"iterates", iterates},
                {"z1", to_json(run.z1)},
                {"endpoint", to_json(run.endpoint)},
                {"control", to_json(run.control)}};
  if (!run.control.atoms().empty()) {
    ctx.out.write_samples("control.csv", run.control, cfg.num("steering", "sample_dt"));
    ctx.artifacts = {"control.csv"};
  }
  if (run.status == SteeringStatus::diverged)
    ctx.status = 3;
}

inline void cmd_entropy(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const auto m = build_model(cfg);
  const auto z0 = parse_state(cfg.str("entropy", "initial"), m.coupling.basis, "[entropy] initial");
  EntropyConfig ec;
  ec.m = cfg.num("entropy", "m");
  ec.count = cfg.count("entropy", "count");
  ec.knots = cfg.count("entropy", "knots");
  ec.k = cfg.num("entropy", "k");
  ec.ball_radius = cfg.num("entropy", "ball_radius");
  ec.dt = cfg.num("entropy", "dt");
  ec.n_eps = cfg.count("entropy", "n_eps");
  ec.lo_quantile = cfg.num("entropy", "lo_quantile");
  ec.hi_quantile = cfg.num("entropy", "hi_quantile");
  ec.bootstrap = cfg.count("entropy", "bootstrap");
  ec.seed = cfg.count("run", "seed");
  ec.threads = cfg.count("entropy", "threads");
  const auto rep = entropy_report(z0, m.coupling, ec);
  {
    auto f = ctx.out.open("entropy.csv");
    f << "eps_reachable,N_reachable,eps_ball,N_ball\n";
    for (std::size_t i = 0; i < rep.reachable.epsilons.size(); ++i)
      f << rep.reachable.epsilons[i] << ',' << rep.reachable.counts[i] << ',' << rep.ball.epsilons[i] << ','
        << rep.ball.counts[i] << '\n';
  }
  ctx.artifacts = {"entropy.csv"};
  ctx.result = {{"metric_order", rep.metric_order},
                {"n_points", rep.n_points},
                {"n_modes", rep.n_modes},
                {"reachable", to_json(rep.reachable)},
                {"ball", to_json(rep.ball)},
                {"gap", rep.gap},
                {"gap_ci95", {rep.gap_ci_low, rep.gap_ci_high}},
                {"bootstrap_valid", rep.bootstrap_valid},
                {"holder_constant", rep.holder_constant},
                {"max_l2_drift", rep.max_l2_drift}};
}

using Command = void (*)(Context &);

inline const std::map<std::string, std::pair<Command, std::string>> &commands() {
  static const std::map<std::string, std::pair<Command, std::string>> c{
      {"eig", {cmd_eig, "eigenpairs of the Dirichlet problem"}},
      {"coupling", {cmd_coupling, "coupling matrix and frequency table"}},
      {"check", {cmd_check, "coupling and gap conditions"}},
      {"simulate", {cmd_simulate, "nonlinear propagation"}},
      {"return-time", {cmd_return_time, "integer return time of the free flow"}},
      {"linearize", {cmd_linearize, "linearized propagation"}},
      {"moments", {cmd_moments, "moment table for a tangent target"}},
      {"synth", {cmd_synth, "control synthesis for a moment table"}},
      {"steer", {cmd_steer, "Newton steering between nearby states"}},
      {"entropy", {cmd_entropy, "covering-number experiment"}},
  };
  return c;
}

/// Runs one subcommand; messages go to out/err, artifacts to --out.
inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  CLI::App app{"Bilinear Schrodinger control workbench"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  for (const auto &[name, entry] : commands()) {
    auto *sub = app.add_subcommand(name, entry.second);
    sub->add_option("-c,--config", config_path, "INI configuration file")->required();
    sub->add_option("-o,--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override [run] seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const Config cfg(config_path, seed);
    const Output output(out_dir);
    Context ctx{cfg, output};
    commands().at(name).first(ctx);
    json report = {{"command", name}, {"config", cfg.resolved()}, {"inputs", cfg.inputs()},
                   {"artifacts", ctx.artifacts}, {"result", ctx.result}};
    output.write_json("report.json", report);
    out << name << ": wrote " << (fs::path(out_dir) / "report.json").string() << '\n';
    return ctx.status;
  } catch (const ValidationError &e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError &e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  }
}

} // namespace schrodctl::cli
