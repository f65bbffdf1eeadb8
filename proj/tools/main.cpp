#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "t1mr/analysis.hpp"
#include "t1mr/constants.hpp"
#include "t1mr/dynamics.hpp"
#include "t1mr/gslac.hpp"
#include "t1mr/io.hpp"
#include "t1mr/kernels.hpp"
#include "t1mr/lindblad.hpp"
#include "t1mr/relaxation.hpp"
#include "t1mr/sensing.hpp"
#include "t1mr/transitions.hpp"

using nlohmann::json;
using namespace t1mr;

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kSolver = 3, kIo = 4 };

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(what + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw ValidationError(what + ": '" + s + "' is not a number");
  return v;
}

std::vector<double> number_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const auto& p : split(s, ',')) v.push_back(to_number(p, what));
  return v;
}

std::string fmt_sig(double x, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

// lo:hi:step, inclusive of hi when it falls on the grid
std::vector<double> linear_range(const std::string& s, const std::string& what) {
  const auto p = split(s, ':');
  if (p.size() != 3) throw ValidationError(what + " must be lo:hi:step");
  const double lo = to_number(p[0], what), hi = to_number(p[1], what),
               step = to_number(p[2], what);
  if (!(step > 0)) throw ValidationError(what + ": step must be > 0");
  if (!(hi > lo)) throw ValidationError(what + ": empty range");
  const long long n = (long long)std::floor((hi - lo) / step + 1e-9) + 1;
  if (n < 2) throw ValidationError(what + ": fewer than 2 points");
  if (n > 10000000) throw ValidationError(what + ": more than 1e7 points");
  std::vector<double> v(n);
  for (long long k = 0; k < n; ++k) v[k] = std::stod(fmt_sig(lo + double(k) * step, 15));
  return v;
}

// lo:hi:n, logarithmic
std::vector<double> log_range(const std::string& s, const std::string& what) {
  const auto p = split(s, ':');
  if (p.size() != 3) throw ValidationError(what + " must be lo:hi:n");
  const double lo = to_number(p[0], what), hi = to_number(p[1], what),
               nd = to_number(p[2], what);
  if (!(lo > 0) || !(hi > lo)) throw ValidationError(what + ": need 0 < lo < hi");
  if (nd != std::floor(nd) || nd < 2 || nd > 1e7) throw ValidationError(what + ": n must be an integer >= 2");
  const int n = int(nd);
  std::vector<double> v(n);
  for (int k = 0; k < n; ++k) {
    // 15 significant digits keeps exact decades exact
    const double x = lo * std::pow(hi / lo, double(k) / (n - 1));
    v[k] = std::stod(fmt_sig(x, 15));
  }
  v.back() = hi;
  return v;
}

std::string clean_cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// One subcommand: defaults, flags bound to config keys, and the handler.
struct Command {
  CLI::App* app = nullptr;
  json defaults;
  std::vector<std::function<void(json&)>> appliers;
  std::function<void(const json&)> run;

  template <class T>
  void option(const std::string& flags, const std::string& key, const std::string& help) {
    auto v = std::make_shared<T>();
    CLI::Option* o = app->add_option(flags, *v, help);
    if (defaults.contains(key)) o->default_str(defaults[key].dump());
    appliers.push_back([o, v, key](json& j) {
      if (o->count()) j[key] = *v;
    });
  }
  void flag(const std::string& flags, const std::string& key, const std::string& help) {
    auto v = std::make_shared<bool>(false);
    CLI::Option* o = app->add_flag(flags, *v, help);
    appliers.push_back([o, v, key](json& j) {
      if (o->count()) j[key] = *v;
    });
  }
};

struct Globals {
  std::string config_path;
  std::string output = "-";
  std::string format = "csv";
  std::string sidecar;
};

Globals g_globals;
const char* g_command = "";

const std::vector<std::string> kCommands{"resonances", "spectrum", "gslac-sim", "curve",
                                         "snr",        "map",      "fit"};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, 0, "cannot open config");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config " + path + ": top level must be an object");
  return j;
}

void merge_keys(json& cfg, const json& src, const std::string& where) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    if (it.key() == "constants") {
      if (!it->is_object()) throw ValidationError(where + ": constants must be an object");
      for (auto c = it->begin(); c != it->end(); ++c) cfg["constants"][c.key()] = *c;
      continue;
    }
    if (!cfg.contains(it.key()))
      throw ValidationError(where + ": unknown key '" + it.key() + "' for " + g_command);
    cfg[it.key()] = *it;
  }
}

// defaults < config file < flags
json effective_config(const Command& cmd) {
  json cfg = cmd.defaults;
  cfg["constants"] = to_json(PhysicalConstants::measured_probe());
  if (!g_globals.config_path.empty()) {
    const json file = load_config_file(g_globals.config_path);
    json flat = json::object();
    for (auto it = file.begin(); it != file.end(); ++it)
      if (std::find(kCommands.begin(), kCommands.end(), it.key()) == kCommands.end())
        flat[it.key()] = *it;
    merge_keys(cfg, flat, g_globals.config_path);
    if (file.contains(g_command)) merge_keys(cfg, file[g_command], g_globals.config_path);
  }
  for (const auto& a : cmd.appliers) a(cfg);
  return cfg;
}

PhysicalConstants constants_of(const json& cfg) {
  try {
    return constants_from_json(cfg.at("constants"), PhysicalConstants::measured_probe());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("constants: ") + e.what());
  }
}

template <class T>
T get(const json& cfg, const std::string& key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

// Writes the main output and, for file outputs, a JSON sidecar with the
// effective configuration.
void emit(const json& cfg, const std::string& csv, json doc) {
  std::string body;
  if (g_globals.format == "json") {
    doc["command"] = g_command;
    doc["config"] = cfg;
    body = doc.dump(2) + "\n";
  } else {
    body = csv;
  }
  if (g_globals.output == "-") {
    std::cout << body;
    std::cout.flush();
  } else {
    write_text(g_globals.output, body);
  }
  std::string side = g_globals.sidecar;
  if (side.empty() && g_globals.output != "-" && g_globals.format == "csv")
    side = g_globals.output + ".json";
  if (!side.empty()) {
    json s;
    s["command"] = g_command;
    s["config"] = cfg;
    s["isa"] = kernels::to_string(kernels::active_isa());
    write_text(side, s.dump(2) + "\n");
  }
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------- resonances

std::string ms_label(double ms) { return ms > 0 ? "+1/2" : "-1/2"; }

void run_resonances(const json& cfg) {
  const auto c = constants_of(cfg);
  TableOptions opt;
  opt.epr_single = opt.epr_double = opt.nmr = false;
  for (const auto& k : split(get<std::string>(cfg, "kinds"), ',')) {
    if (k == "epr-single") opt.epr_single = true;
    else if (k == "epr-double") opt.epr_double = true;
    else if (k == "nmr") opt.nmr = true;
    else throw ValidationError("unknown kind '" + k + "'");
  }
  const auto axis = get<std::string>(cfg, "axis");
  if (axis != "both") opt.axis = axis_from_string(axis);
  const auto nvm = get<std::string>(cfg, "nv_model");
  if (nvm == "conversion") opt.res.nv_model = NvModel::Conversion;
  else if (nvm == "first-order") opt.res.nv_model = NvModel::FirstOrder;
  else if (nvm == "exact") opt.res.nv_model = NvModel::Exact;
  else throw ValidationError("unknown nv model '" + nvm + "'");
  const auto tm = get<std::string>(cfg, "target_model");
  if (tm == "perturbative") opt.res.target_model = TargetModel::Perturbative;
  else if (tm == "exact") opt.res.target_model = TargetModel::Exact;
  else throw ValidationError("unknown target model '" + tm + "'");
  const auto qm = get<std::string>(cfg, "quadrupole");
  if (qm == "rotated") opt.res.qmode = OffAxisQuadrupole::Rotated;
  else if (qm == "printed") opt.res.qmode = OffAxisQuadrupole::Printed;
  else throw ValidationError("unknown quadrupole mode '" + qm + "'");
  if (get<std::string>(cfg, "system") != "p1") throw ValidationError("only --system p1 is tabulated");

  const auto rows = resonance_table(c, opt);
  std::string csv = csv_line({"system", "kind", "axis", "mS", "mI_initial", "mI_final", "branch",
                              "B_res_G", "omega_MHz", "residual_MHz"});
  json arr = json::array();
  for (const auto& r : rows) {
    const auto& s = r.spec;
    const std::string branch = s.kind == Kind::Nmr ? to_string(s.branch) : "na";
    csv += csv_line({to_string(s.system), to_string(s.kind), to_string(s.axis), ms_label(s.ms_i),
                     std::to_string(s.mi_i), std::to_string(s.mi_f), branch, fmt(r.b_res),
                     fmt(r.omega_target), fmt(r.residual)});
    arr.push_back({{"id", s.id()},
                   {"system", to_string(s.system)},
                   {"kind", to_string(s.kind)},
                   {"axis", to_string(s.axis)},
                   {"mS", ms_label(s.ms_i)},
                   {"mI_initial", s.mi_i},
                   {"mI_final", s.mi_f},
                   {"branch", branch},
                   {"B_res_G", r.b_res},
                   {"omega_MHz", r.omega_target},
                   {"omega_nv_MHz", r.omega_nv},
                   {"residual_MHz", r.residual}});
  }
  emit(cfg, csv, {{"rows", arr}});
}

// ------------------------------------------------------------------ spectrum

DampingRates damping_of(const json& cfg) {
  DampingRates d;
  d.gamma2_p = get<double>(cfg, "gamma2_p");
  d.gamma2_t = get<double>(cfg, "gamma2_t");
  d.gamma1_t = get<double>(cfg, "gamma1_t");
  d.gamma2_t_nuc = get<double>(cfg, "gamma2_t_nuc");
  return d;
}

void run_spectrum(const json& cfg) {
  const auto c = constants_of(cfg);
  const Channel ch = channel_from_string(get<std::string>(cfg, "channel"));
  const auto b = linear_range(get<std::string>(cfg, "b_range"), "b-range");
  for (double x : b)
    if (!(x > 0)) throw ValidationError("b-range must be > 0 G");
  const Geometry g{get<double>(cfg, "r_nm"), get<double>(cfg, "theta")};
  validate(g);
  const auto axis = get<std::string>(cfg, "axis");
  std::vector<Axis> axes;
  if (axis == "both") axes = {Axis::On, Axis::Off};
  else axes = {axis_from_string(axis)};

  std::vector<TransitionSpec> lines;
  for (Axis a : axes) {
    if (ch == Channel::EprSingle) {
      for (const auto& s : p1_line_specs(Kind::EprSingle, a)) lines.push_back(s);
    } else if (ch == Channel::EprDouble) {
      for (const auto& s : p1_line_specs(Kind::EprDouble, a)) lines.push_back(s);
    } else {
      for (Branch br : {Branch::Before, Branch::After})
        for (const auto& s : p1_line_specs(Kind::Nmr, a, br)) lines.push_back(s);
    }
  }
  SpectrumOptions so;
  so.apply_dilution = !get<bool>(cfg, "no_dilution");
  const auto sp = gamma1_spectrum(b, lines, g, ch, damping_of(cfg), c, so);

  std::vector<std::string> head{"B_G", "gamma1_s^-1"};
  for (const auto& l : sp.lines) head.push_back(l.spec.id());
  std::string csv = csv_line(head);
  for (std::size_t i = 0; i < sp.b.size(); ++i) {
    std::vector<std::string> row{fmt(sp.b[i]), fmt(sp.gamma1[i])};
    for (const auto& pl : sp.per_line) row.push_back(fmt(pl[i]));
    csv += csv_line(row);
  }
  json meta = json::array();
  for (std::size_t k = 0; k < sp.lines.size(); ++k) {
    const auto& l = sp.lines[k];
    meta.push_back({{"id", l.spec.id()},
                    {"channel", to_string(l.params.channel)},
                    {"kernel", to_string(l.params.kernel)},
                    {"B_res_G", std::isfinite(l.b_res) ? json(l.b_res) : json(nullptr)},
                    {"center_MHz", std::isfinite(l.center_mhz) ? json(l.center_mhz) : json(nullptr)},
                    {"half_width_s^-1", l.width},
                    {"amplitude_s^-1", l.amplitude},
                    {"dilution", l.dilution},
                    {"values", sp.per_line[k]}});
  }
  emit(cfg, csv, {{"B_G", sp.b}, {"gamma1_s^-1", sp.gamma1}, {"lines", meta}});
}

// ----------------------------------------------------------------- gslac-sim

GslacOptions gslac_options(const json& cfg) {
  GslacOptions o;
  o.geometry = {get<double>(cfg, "r_nm"), get<double>(cfg, "theta")};
  validate(o.geometry);
  o.gamma2_p = get<double>(cfg, "gamma2_p");
  o.gamma2_t = get<double>(cfg, "gamma2_t");
  o.gamma_ph = get<double>(cfg, "gamma_ph");
  o.n_times = get<int>(cfg, "n_times");
  o.t_min = get<double>(cfg, "t_min");
  o.jobs = get<int>(cfg, "jobs");
  o.c = constants_of(cfg);
  if (!(o.gamma_ph > 0)) throw ValidationError("gamma-ph must be > 0");
  if (o.gamma2_p < 0 || o.gamma2_t < 0) throw ValidationError("dephasing rates must be >= 0");
  if (o.n_times < 6) throw ValidationError("n-times must be >= 6");
  if (!(o.t_min > 0 && o.t_min < 3 / o.gamma_ph)) throw ValidationError("t-min must lie in (0, 3/gamma_ph)");
  if (o.jobs < 1) throw ValidationError("jobs must be >= 1");
  return o;
}

// Physics part of the configuration, used to match checkpoints to runs.
json checkpoint_key(const json& cfg) {
  json k;
  for (const char* f : {"species", "r_nm", "theta", "b_range", "gamma2_p", "gamma2_t", "gamma_ph",
                        "n_times", "t_min", "constants"})
    k[f] = cfg.at(f);
  return k;
}

std::vector<std::optional<GslacPoint>> read_checkpoint(const std::string& path, const json& key,
                                                       const std::vector<double>& grid) {
  std::vector<std::optional<GslacPoint>> done(grid.size());
  std::ifstream in(path);
  if (!in) return done;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    if (ln == 1) {
      if (line.rfind("# ", 0) != 0) throw IoError(path, ln, "missing checkpoint header");
      json head;
      try {
        head = json::parse(line.substr(2));
      } catch (const json::exception&) {
        throw IoError(path, ln, "unreadable checkpoint header");
      }
      if (head != key) throw ValidationError("checkpoint " + path + " belongs to a different run");
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() < 5) {
      // a record cut short by an interrupted run is recomputed
      if (in.eof()) break;
      throw IoError(path, ln, "expected index,B_G,gamma_res,rss,status");
    }
    std::size_t idx = 0;
    GslacPoint p;
    try {
      idx = std::stoul(cells[0]);
      p.b = std::stod(cells[1]);
      p.gamma_res = std::stod(cells[2]);
      p.rss = std::stod(cells[3]);
    } catch (const std::exception&) {
      throw IoError(path, ln, "malformed checkpoint record");
    }
    p.status = cells[4];
    if (cells.size() > 5) p.message = cells[5];
    if (idx >= grid.size() || std::abs(grid[idx] - p.b) > 1e-9 * std::max(1.0, grid[idx]))
      throw ValidationError("checkpoint " + path + " does not match the field grid");
    done[idx] = p;
  }
  return done;
}

void run_gslac(const json& cfg) {
  const Species s = species_from_string(get<std::string>(cfg, "species"));
  const GslacOptions o = gslac_options(cfg);

  if (!cfg.at("trace_b").is_null()) {
    const double b = get<double>(cfg, "trace_b");
    if (!(b > 0)) throw ValidationError("trace-b must be > 0 G");
    const auto tr = gslac_trace(b, s, o);
    const auto h = gslac_hamiltonian(b, s, o);
    std::vector<std::string> head{"t_s"};
    for (const auto& m : h.basis) {
      std::ostringstream l;
      l << "p(" << m[0] << ";" << m[1] << ";" << (m[2] > 0 ? "+1/2" : "-1/2") << ")";
      head.push_back(l.str());
    }
    std::string csv = csv_line(head);
    json rows = json::array();
    for (std::size_t q = 0; q < tr.trajectory.t.size(); ++q) {
      std::vector<std::string> row{fmt(tr.trajectory.t[q])};
      std::vector<double> pops;
      for (Eigen::Index i = 0; i < tr.trajectory.rho[q].rows(); ++i) {
        pops.push_back(std::real(tr.trajectory.rho[q](i, i)));
        row.push_back(fmt(pops.back()));
      }
      csv += csv_line(row);
      rows.push_back({{"t_s", tr.trajectory.t[q]}, {"populations", pops}});
    }
    json d{{"basis", head},
           {"trajectory", rows},
           {"dt_s", tr.trajectory.dt},
           {"max_trace_error", tr.trajectory.max_trace_error},
           {"max_herm_error", tr.trajectory.max_herm_error},
           {"min_eigenvalue", tr.trajectory.min_eigenvalue}};
    emit(cfg, csv, d);
    return;
  }

  const auto grid = linear_range(get<std::string>(cfg, "b_range"), "b-range");
  for (double b : grid)
    if (!(b > 0)) throw ValidationError("b-range must be > 0 G");
  const auto ck_path = get<std::string>(cfg, "checkpoint");
  const bool progress = get<bool>(cfg, "progress");
  const json key = checkpoint_key(cfg);

  std::vector<std::optional<GslacPoint>> done;
  std::unique_ptr<std::ofstream> ck;
  if (!ck_path.empty()) {
    done = read_checkpoint(ck_path, key, grid);
    std::ifstream probe(ck_path, std::ios::binary | std::ios::ate);
    const bool fresh = !probe.good() || probe.tellg() == 0;
    bool torn = false;
    if (!fresh) {
      probe.seekg(-1, std::ios::end);
      torn = probe.get() != '\n';
    }
    ck = std::make_unique<std::ofstream>(ck_path, std::ios::app);
    if (!*ck) throw IoError(ck_path, 0, "cannot open checkpoint");
    if (fresh) *ck << "# " << key.dump() << "\n" << std::flush;
    if (torn) *ck << "\n";
  }
  std::size_t resumed = 0;
  for (const auto& d : done) resumed += d.has_value();
  if (progress && resumed)
    std::cerr << "resumed " << resumed << " of " << grid.size() << " points from " << ck_path << "\n";

  std::size_t finished = resumed;
  auto on_point = [&](std::size_t i, const GslacPoint& p) {
    ++finished;
    if (ck) {
      *ck << i << "," << fmt(p.b) << "," << fmt(p.gamma_res) << "," << fmt(p.rss) << "," << p.status
          << "," << clean_cell(p.message) << "\n"
          << std::flush;
      if (!*ck) throw IoError(ck_path, 0, "checkpoint write failed");
    }
    if (progress)
      std::cerr << "[" << finished << "/" << grid.size() << "] B=" << fmt(p.b)
                << " G gamma_res=" << fmt(p.gamma_res) << " s^-1 " << p.status
                << (p.message.empty() ? "" : " (" + p.message + ")") << "\n";
  };
  const auto pts = gslac_nmr_spectrum(s, grid, o, done, on_point);

  std::string csv = csv_line({"B_G", "gamma1_s^-1", "rss", "status", "message"});
  json arr = json::array();
  int failed = 0;
  for (const auto& p : pts) {
    csv += csv_line({fmt(p.b), fmt(p.gamma_res), fmt(p.rss), p.status, clean_cell(p.message)});
    arr.push_back({{"B_G", p.b},
                   {"gamma1_s^-1", std::isfinite(p.gamma_res) ? json(p.gamma_res) : json(nullptr)},
                   {"rss", p.rss},
                   {"status", p.status},
                   {"message", p.message}});
    failed += p.status == "error";
  }
  emit(cfg, csv, {{"points", arr}, {"failed", failed}});
  if (failed) std::cerr << failed << " field point(s) failed; see the status column\n";
}

// --------------------------------------------------------------------- curve

void run_curve(const json& cfg) {
  const auto tau = log_range(get<std::string>(cfg, "tau_range"), "tau-range");
  const double g_ph = get<double>(cfg, "gamma_ph"), g_res = get<double>(cfg, "gamma_res");
  if (!(g_ph >= 0) || !(g_res >= 0)) throw ValidationError("rates must be >= 0");
  const auto model = get<std::string>(cfg, "model");
  std::string csv;
  json d;
  if (model == "populations") {
    Populations init;
    init.n0 = get<double>(cfg, "n0");
    init.nm1 = init.np1 = 0.5 * (1 - init.n0);
    if (!(init.n0 >= 0 && init.n0 <= 1)) throw ValidationError("n0 must be in [0, 1]");
    csv = csv_line({"tau_s", "n0", "n_minus1", "n_plus1"});
    std::vector<double> a, b2, c2;
    for (double t : tau) {
      const auto p = rate_equation_populations(t, g_ph / 3, g_res / 2, init);
      csv += csv_line({fmt(t), fmt(p.n0), fmt(p.nm1), fmt(p.np1)});
      a.push_back(p.n0);
      b2.push_back(p.nm1);
      c2.push_back(p.np1);
    }
    d = {{"tau_s", tau}, {"n0", a}, {"n_minus1", b2}, {"n_plus1", c2}};
  } else if (model == "pl") {
    const double i_inf = get<double>(cfg, "i_inf"), contrast = get<double>(cfg, "contrast");
    const double noise = get<double>(cfg, "noise");
    if (!(i_inf > 0)) throw ValidationError("i-inf must be > 0");
    if (!(noise >= 0)) throw ValidationError("noise must be >= 0");
    auto y = pl_curve(tau, i_inf, contrast, g_ph, g_res);
    std::vector<double> err;
    if (noise > 0) {
      std::mt19937_64 rng(get<std::uint64_t>(cfg, "seed"));
      std::normal_distribution<double> nd(0.0, 1.0);
      for (double& v : y) {
        const double s = noise * std::abs(v);
        v += s * nd(rng);
        err.push_back(s);
      }
    }
    csv = csv_line(noise > 0 ? std::vector<std::string>{"tau_s", "signal", "err"}
                             : std::vector<std::string>{"tau_s", "signal"});
    for (std::size_t i = 0; i < tau.size(); ++i) {
      std::vector<std::string> row{fmt(tau[i]), fmt(y[i])};
      if (noise > 0) row.push_back(fmt(err[i]));
      csv += csv_line(row);
    }
    d = {{"tau_s", tau}, {"signal", y}};
    if (noise > 0) d["err"] = err;
  } else {
    throw ValidationError("unknown curve model '" + model + "'");
  }
  emit(cfg, csv, d);
}

// ----------------------------------------------------------------------- snr

MeasurementBudget budget_of(const json& cfg) {
  MeasurementBudget b;
  b.count_rate = get<double>(cfg, "count_rate");
  b.t_ro = get<double>(cfg, "t_ro");
  b.contrast = get<double>(cfg, "contrast");
  b.gamma_ph = get<double>(cfg, "gamma_ph");
  b.t_total = get<double>(cfg, "t_total");
  validate(b);
  return b;
}

void run_snr(const json& cfg) {
  const auto b = budget_of(cfg);
  const double g = get<double>(cfg, "gamma_res");
  if (!(g > 0)) throw ValidationError("gamma-res must be > 0");
  const double tau = optimal_tau(g, b);
  const double s = snr(tau, g, b);
  const double tmin = min_acquisition_time(g, b);
  std::string csv = csv_line({"gamma_res_s^-1", "tau_opt_s", "snr", "t_min_s"});
  csv += csv_line({fmt(g), fmt(tau), fmt(s), fmt(tmin)});
  emit(cfg, csv, {{"gamma_res_s^-1", g}, {"tau_opt_s", tau}, {"snr", s}, {"t_min_s", tmin}});
}

// ----------------------------------------------------------------------- map

void run_map(const json& cfg) {
  const auto b = budget_of(cfg);
  const Species s = species_from_string(get<std::string>(cfg, "species"));
  const auto r = linear_range(get<std::string>(cfg, "r_range"), "r-range");
  const auto th = linear_range(get<std::string>(cfg, "theta_range"), "theta-range");
  for (double x : th)
    if (x < 0 || x > 3.14159265358979324) throw ValidationError("theta-range must lie in [0, pi]");
  MapOptions mo;
  mo.kernel = kernel_from_string(get<std::string>(cfg, "kernel"));
  mo.gamma2 = get<double>(cfg, "gamma2");
  mo.levels = number_list(get<std::string>(cfg, "levels"), "levels");
  mo.jobs = get<int>(cfg, "jobs");
  if (mo.jobs < 1) throw ValidationError("jobs must be >= 1");
  const auto m = detectability_map(s, r, th, b, constants_of(cfg), mo);

  std::string csv = csv_line({"r_nm", "theta_rad", "ratio"});
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < th.size(); ++j)
      csv += csv_line({fmt(r[i]), fmt(th[j]), fmt(m.ratio[i][j])});

  std::string ccsv = csv_line({"level", "piece", "index", "r_nm", "theta_rad"});
  json lines = json::array();
  std::map<double, int> piece;
  for (const auto& cl : m.contours) {
    const int pc = piece[cl.level]++;
    json pts = json::array();
    for (std::size_t k = 0; k < cl.points.size(); ++k) {
      ccsv += csv_line({fmt(cl.level), std::to_string(pc), std::to_string(k),
                        fmt(cl.points[k].first), fmt(cl.points[k].second)});
      pts.push_back({cl.points[k].first, cl.points[k].second});
    }
    lines.push_back({{"level", cl.level}, {"piece", pc}, {"points", pts}});
  }
  json reach = json::object();
  for (double lv : mo.levels) reach[fmt(lv)] = contour_reach(m, lv);
  const auto cpath = get<std::string>(cfg, "contours");
  if (!cpath.empty()) write_text(cpath, ccsv);
  emit(cfg, csv, {{"r_nm", r}, {"theta_rad", th}, {"ratio", m.ratio}, {"contours", lines},
                  {"reach_nm", reach}});
}

// ----------------------------------------------------------------------- fit

double nearest_index(const std::vector<double>& x, double c) {
  const auto it = std::lower_bound(x.begin(), x.end(), c);
  std::size_t i = std::min<std::size_t>(it - x.begin(), x.size() - 1);
  if (i > 0 && std::abs(x[i - 1] - c) < std::abs(x[i] - c)) --i;
  return double(i);
}

// Half width at half maximum around sample i, at least one grid step.
double local_half_width(const std::vector<double>& x, const std::vector<double>& y, std::size_t i,
                        double base) {
  const double half = base + 0.5 * (y[i] - base);
  std::size_t lo = i, hi = i;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi + 1 < y.size() && y[hi] > half) ++hi;
  return std::max(0.5 * (x[hi] - x[lo]) / 2, std::abs(x[1] - x[0]));
}

std::vector<PeakGuess> auto_guesses(const std::vector<double>& x, const std::vector<double>& y,
                                    std::size_t n) {
  const double base = *std::min_element(y.begin(), y.end());
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < y.size(); ++i)
    if (y[i] > y[i - 1] && y[i] >= y[i + 1]) peaks.push_back(i);
  std::sort(peaks.begin(), peaks.end(), [&](auto a, auto b) { return y[a] > y[b]; });
  if (peaks.size() < n) throw ValidationError("found only " + std::to_string(peaks.size()) + " local maxima");
  peaks.resize(n);
  std::sort(peaks.begin(), peaks.end());
  std::vector<PeakGuess> g;
  for (std::size_t i : peaks) g.push_back({x[i], local_half_width(x, y, i, base), y[i] - base});
  return g;
}

double value_at(const std::vector<double>& x, const std::vector<double>& y, double c) {
  return y[std::size_t(nearest_index(x, c))];
}

// Explicit width if given, else estimated from the data at c.
double guess_width(const std::vector<double>& x, const std::vector<double>& y, double c,
                   std::optional<double> hw) {
  if (hw) return *hw;
  return local_half_width(x, y, std::size_t(nearest_index(x, c)), *std::min_element(y.begin(), y.end()));
}

std::vector<PeakGuess> theory_guesses(const std::string& which, const std::vector<double>& x,
                                      const std::vector<double>& y, std::size_t n, std::optional<double> hw,
                                      const PhysicalConstants& c) {
  TableOptions to;
  to.epr_single = to.epr_double = to.nmr = false;
  std::optional<Branch> branch;
  if (which == "epr") to.epr_single = to.epr_double = true;
  else if (which == "nmr-before") to.nmr = true, branch = Branch::Before;
  else if (which == "nmr-after") to.nmr = true, branch = Branch::After;
  else throw ValidationError("unknown theory set '" + which + "'");
  const double lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
  const double base = *std::min_element(y.begin(), y.end());
  std::vector<PeakGuess> g;
  for (const auto& r : resonance_table(c, to)) {
    if (branch && r.spec.branch != *branch) continue;
    if (r.b_res < lo || r.b_res > hi) continue;
    g.push_back({r.b_res, guess_width(x, y, r.b_res, hw), std::max(value_at(x, y, r.b_res) - base, 1e-12)});
  }
  std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return a.amplitude > b.amplitude; });
  if (n > 0 && g.size() > n) g.resize(n);
  std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
  if (g.empty()) throw ValidationError("no theory lines fall inside the data range");
  return g;
}

void run_fit(const json& cfg) {
  const auto input = get<std::string>(cfg, "input");
  if (input.empty()) throw ValidationError("fit needs --input");
  const auto model = get<std::string>(cfg, "model");
  if (model == "lorentzians") {
    const auto d = read_spectrum(input);
    if (d.x.size() < 4) throw ValidationError("spectrum needs >= 4 points");
    const int n = get<int>(cfg, "n");
    const auto centers = get<std::string>(cfg, "centers");
    std::optional<double> hw;
    if (!cfg["half_width"].is_null()) {
      hw = get<double>(cfg, "half_width");
      if (!(*hw > 0)) throw ValidationError("half-width must be > 0");
    }
    std::vector<PeakGuess> init;
    if (!centers.empty()) {
      const double base = *std::min_element(d.y.begin(), d.y.end());
      for (double c0 : number_list(centers, "centers"))
        init.push_back({c0, guess_width(d.x, d.y, c0, hw), std::max(value_at(d.x, d.y, c0) - base, 1e-12)});
    } else if (!get<std::string>(cfg, "theory").empty()) {
      init = theory_guesses(get<std::string>(cfg, "theory"), d.x, d.y, std::max(n, 0), hw,
                            constants_of(cfg));
    } else {
      if (n < 1) throw ValidationError("give --n, --centers or --theory");
      init = auto_guesses(d.x, d.y, std::size_t(n));
    }
    LorentzianFitOptions lo;
    lo.max_iter = get<int>(cfg, "max_iter");
    const auto f = fit_lorentzian_sum(d.x, d.y, init, d.yerr, lo);
    std::string csv = csv_line({"peak", "center", "s_center", "half_width", "s_half_width",
                                "amplitude", "s_amplitude"});
    for (std::size_t k = 0; k < f.centers.size(); ++k)
      csv += csv_line({std::to_string(k), fmt(f.centers[k]), fmt(f.s_centers[k]),
                       fmt(f.half_widths[k]), fmt(f.s_half_widths[k]), fmt(f.amplitudes[k]),
                       fmt(f.s_amplitudes[k])});
    emit(cfg, csv, {{"fit", to_json(f)}});
    if (!f.converged) throw std::runtime_error("fit did not converge: " + f.message);
  } else if (model == "biexp") {
    const auto d = read_curve(input);
    RelaxationCurve rc{d.tau, d.signal, d.err, CurveModel::Pl};
    BiexpOptions bo;
    bo.max_iter = get<int>(cfg, "max_iter");
    if (!cfg.at("fixed_g_ph").is_null()) bo.fixed_g_ph = get<double>(cfg, "fixed_g_ph");
    const auto f = fit_biexponential(rc, bo);
    std::string csv = csv_line({"param", "value", "stderr"});
    csv += csv_line({"i_inf", fmt(f.i_inf), fmt(f.s_i_inf)});
    csv += csv_line({"contrast", fmt(f.contrast), fmt(f.s_contrast)});
    csv += csv_line({"g_ph_s^-1", fmt(f.g_ph), fmt(f.s_g_ph)});
    csv += csv_line({"g_res_s^-1", fmt(f.g_res), fmt(f.s_g_res)});
    json j{{"i_inf", f.i_inf},       {"contrast", f.contrast},   {"g_ph", f.g_ph},
           {"g_res", f.g_res},       {"s_i_inf", f.s_i_inf},     {"s_contrast", f.s_contrast},
           {"s_g_ph", f.s_g_ph},     {"s_g_res", f.s_g_res},     {"chi2", f.chi2},
           {"reduced_chi2", f.reduced_chi2}, {"iterations", f.iterations},
           {"converged", f.converged}, {"g_res_at_bound", f.g_res_at_bound}, {"message", f.message}};
    emit(cfg, csv, {{"fit", j}});
    if (!f.converged) throw FitError("fit did not converge: " + f.message);
  } else {
    throw ValidationError("unknown fit model '" + model + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"T1 magnetic resonance toolkit: resonances, relaxation spectra, GSLAC "
               "simulation, sensitivity maps and fits.\nUnits: G, MHz, MHz/G, s, s^-1, nm, rad."};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", g_globals.config_path,
                 "JSON config; flags override it, it overrides defaults. Keys match the long "
                 "flag names with '_' for '-'; 'constants' overrides physical constants");
  app.add_option("-o,--output", g_globals.output, "output path, '-' for stdout");
  app.add_option("--format", g_globals.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  app.add_option("--sidecar", g_globals.sidecar,
                 "path for the JSON config echo (default <output>.json for csv file output)");
  bool scalar = false;
  app.add_flag("--scalar", scalar, "use the scalar kernels even when AVX2 is available");

  std::map<std::string, Command> cmds;
  auto make = [&](const std::string& name, const std::string& help, json defaults) -> Command& {
    Command& c = cmds[name];
    c.app = app.add_subcommand(name, help);
    c.defaults = std::move(defaults);
    return c;
  };

  {
    auto& c = make("resonances", "Probe-target resonance table (Tables of EPR and NMR lines)",
                   {{"system", "p1"},
                    {"kinds", "epr-single,epr-double,nmr"},
                    {"axis", "both"},
                    {"nv_model", "conversion"},
                    {"target_model", "perturbative"},
                    {"quadrupole", "rotated"}});
    c.option<std::string>("--system", "system", "target system (p1)");
    c.option<std::string>("--kinds", "kinds", "comma list of epr-single, epr-double, nmr");
    c.option<std::string>("--axis", "axis", "on, off or both");
    c.option<std::string>("--nv-model", "nv_model", "probe frequency model: conversion, first-order, exact");
    c.option<std::string>("--target-model", "target_model", "target levels: perturbative or exact");
    c.option<std::string>("--quadrupole", "quadrupole", "off-axis quadrupole: rotated or printed");
    c.run = run_resonances;
  }
  {
    auto& c = make("spectrum", "Relaxation rate Gamma1(B) of the probe from a P1 bath",
                   {{"channel", "epr-single"},
                    {"b_range", "480:540:0.05"},
                    {"r_nm", 3.0},
                    {"theta", 0.78539816339744831},
                    {"axis", "both"},
                    {"gamma2_p", 1e6},
                    {"gamma2_t", 1e6},
                    {"gamma1_t", 1e6},
                    {"gamma2_t_nuc", 1e6},
                    {"no_dilution", false}});
    c.option<std::string>("--channel", "channel", "epr-single, epr-double, nmr-hyperfine, nmr-direct");
    c.option<std::string>("--b-range", "b_range", "field grid lo:hi:step in G");
    c.option<double>("--r", "r_nm", "probe-target distance in nm");
    c.option<double>("--theta", "theta", "polar angle of the separation in rad");
    c.option<std::string>("--axis", "axis", "P1 orientation: on, off or both");
    c.option<double>("--gamma2-p", "gamma2_p", "probe dephasing rate in s^-1");
    c.option<double>("--gamma2-t", "gamma2_t", "target electron dephasing rate in s^-1");
    c.option<double>("--gamma1-t", "gamma1_t", "target electron T1 rate in s^-1");
    c.option<double>("--gamma2-t-nuc", "gamma2_t_nuc", "target nuclear dephasing rate in s^-1");
    c.flag("--no-dilution", "no_dilution", "skip the orientation/occupancy dilution factor");
    c.run = run_spectrum;
  }
  {
    auto& c = make("gslac-sim", "Superoperator simulation of a single nuclear spin near the GSLAC",
                   {{"species", "h1"},
                    {"r_nm", 3.0},
                    {"theta", 0.78539816339744831},
                    {"b_range", "1019:1027.5:0.05"},
                    {"gamma2_p", 1e6},
                    {"gamma2_t", 0.0},
                    {"gamma_ph", 200.0},
                    {"n_times", 60},
                    {"t_min", 1e-6},
                    {"jobs", 1},
                    {"checkpoint", ""},
                    {"progress", false},
                    {"trace_b", nullptr}});
    c.option<std::string>("--species", "species", "h1 or c13");
    c.option<double>("--r", "r_nm", "distance in nm");
    c.option<double>("--theta", "theta", "polar angle in rad");
    c.option<std::string>("--b-range", "b_range", "field grid lo:hi:step in G");
    c.option<double>("--gamma2-p", "gamma2_p", "probe dephasing rate in s^-1");
    c.option<double>("--gamma2-t", "gamma2_t", "target dephasing rate in s^-1");
    c.option<double>("--gamma-ph", "gamma_ph", "background relaxation rate in s^-1");
    c.option<int>("--n-times", "n_times", "time samples per field point");
    c.option<double>("--t-min", "t_min", "first time sample in s");
    c.option<int>("--jobs", "jobs", "worker threads over field points");
    c.option<std::string>("--checkpoint", "checkpoint", "file of completed points; resumed if present");
    c.flag("--progress", "progress", "per-point status on stderr");
    c.option<double>("--trace-b", "trace_b", "dump the trajectory at this field in G instead of a spectrum");
    c.run = run_gslac;
  }
  {
    auto& c = make("curve", "PL or population relaxation curve",
                   {{"model", "pl"},
                    {"tau_range", "1e-6:0.1:200"},
                    {"gamma_ph", 200.0},
                    {"gamma_res", 200.0},
                    {"i_inf", 1.0},
                    {"contrast", 0.3},
                    {"n0", 1.0},
                    {"noise", 0.0},
                    {"seed", 1}});
    c.option<std::string>("--model", "model", "pl or populations");
    c.option<std::string>("--tau-range", "tau_range", "log grid lo:hi:n in s");
    c.option<double>("--gamma-ph", "gamma_ph", "phonon decay rate Gamma_ph = 3 k_ph in s^-1");
    c.option<double>("--gamma-res", "gamma_res", "resonant decay rate Gamma_res = 2 k_res in s^-1");
    c.option<double>("--i-inf", "i_inf", "long-time PL level");
    c.option<double>("--contrast", "contrast", "PL contrast");
    c.option<double>("--n0", "n0", "initial |0> population (populations model)");
    c.option<double>("--noise", "noise", "relative Gaussian noise on the PL signal");
    c.option<std::uint64_t>("--seed", "seed", "noise seed");
    c.run = run_curve;
  }
  const json budget{{"count_rate", 2e5}, {"t_ro", 300e-9}, {"contrast", 0.25},
                    {"gamma_ph", 200.0}, {"t_total", 1.0}};
  auto budget_flags = [](Command& c) {
    c.option<double>("--count-rate", "count_rate", "photon count rate in s^-1");
    c.option<double>("--t-ro", "t_ro", "readout window in s");
    c.option<double>("--contrast", "contrast", "readout contrast");
    c.option<double>("--gamma-ph", "gamma_ph", "background relaxation rate in s^-1");
    c.option<double>("--t-total", "t_total", "total acquisition time in s");
  };
  {
    json d = budget;
    d["gamma_res"] = 200.0;
    auto& c = make("snr", "Shot-noise SNR, optimal wait time and minimum acquisition time", d);
    c.option<double>("--gamma-res", "gamma_res", "resonant decay rate Gamma_res = 2 k_res in s^-1");
    budget_flags(c);
    c.run = run_snr;
  }
  {
    json d = budget;
    d.update({{"species", "h1"},
              {"kernel", "plus"},
              {"r_range", "0.5:10:0.05"},
              {"theta_range", "0:1.5707963267948966:0.01"},
              {"gamma2", 1e6},
              {"levels", "0.2,1,7"},
              {"contours", ""},
              {"jobs", 1}});
    auto& c = make("map", "Detectability map Gamma_res/Gamma_ph over (r, theta)", d);
    c.option<std::string>("--species", "species", "h1 or c13");
    c.option<std::string>("--kernel", "kernel", "plus or minus");
    c.option<std::string>("--r-range", "r_range", "distance grid lo:hi:step in nm, within (0, 10]");
    c.option<std::string>("--theta-range", "theta_range", "angle grid lo:hi:step in rad");
    c.option<double>("--gamma2", "gamma2", "total dephasing rate in s^-1");
    c.option<std::string>("--levels", "levels", "comma list of contour levels (ratio)");
    c.option<std::string>("--contours", "contours", "contour CSV path");
    c.option<int>("--jobs", "jobs", "worker threads over theta columns");
    budget_flags(c);
    c.run = run_map;
  }
  {
    auto& c = make("fit", "Lorentzian-sum or biexponential fit of a CSV data file",
                   {{"model", "lorentzians"},
                    {"input", ""},
                    {"n", 0},
                    {"centers", ""},
                    {"theory", ""},
                    {"half_width", nullptr},
                    {"fixed_g_ph", nullptr},
                    {"max_iter", 500}});
    c.option<std::string>("--model", "model", "lorentzians (x,y[,yerr]) or biexp (tau_s,signal[,err])");
    c.option<std::string>("--input", "input", "data CSV");
    c.option<int>("--n", "n", "number of peaks");
    c.option<std::string>("--centers", "centers", "comma list of initial centres (x units)");
    c.option<std::string>("--theory", "theory", "initial centres from theory fields in G: epr, nmr-before, nmr-after");
    c.option<double>("--half-width", "half_width", "initial half-width in x units (G or MHz) for listed or theory centres; default estimated from the data");
    c.option<double>("--fixed-g-ph", "fixed_g_ph", "hold the phonon rate (s^-1) fixed");
    c.option<int>("--max-iter", "max_iter", "iteration limit");
    c.run = run_fit;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }
  if (scalar) kernels::set_isa(kernels::Isa::Scalar);

  for (auto& [name, cmd] : cmds) {
    if (!cmd.app->parsed()) continue;
    g_command = name.c_str();
    try {
      const json cfg = effective_config(cmd);
      cmd.run(cfg);
      return kOk;
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kValidation;
    } catch (const std::invalid_argument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kValidation;
    } catch (const IoError& e) {
      std::cerr << "i/o error: " << e.what() << "\n";
      return kIo;
    } catch (const std::exception& e) {
      std::cerr << "solver error: " << e.what() << "\n";
      return kSolver;
    }
  }
  return kValidation;
}
