#include "nullwave/scenario.hpp"

#include "nullwave/diagnostics.hpp"
#include "nullwave/errors.hpp"
#include "nullwave/fdtd.hpp"
#include "nullwave/geoptics.hpp"
#include "nullwave/mode_solver.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace nullwave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Kind { Number, Integer, Bool, String, NumberList, IntList };

struct FieldSpec {
  std::string name;
  Kind kind;
  json def;  // null: optional without default
  double lo = -kInf, hi = kInf;
  bool lo_open = false;
  std::vector<std::string> choices;
};

FieldSpec num(std::string n, json d, double lo = -kInf, double hi = kInf, bool open = false) {
  return {std::move(n), Kind::Number, std::move(d), lo, hi, open, {}};
}
FieldSpec pos(std::string n, json d) { return num(std::move(n), std::move(d), 0.0, kInf, true); }
FieldSpec integer(std::string n, json d, double lo = -kInf, double hi = kInf) {
  return {std::move(n), Kind::Integer, std::move(d), lo, hi, false, {}};
}
FieldSpec boolean(std::string n, bool d) { return {std::move(n), Kind::Bool, d, -kInf, kInf, false, {}}; }
FieldSpec choice(std::string n, std::string d, std::vector<std::string> c) {
  return {std::move(n), Kind::String, std::move(d), -kInf, kInf, false, std::move(c)};
}
FieldSpec numbers(std::string n, json d, double lo = -kInf, bool open = false) {
  return {std::move(n), Kind::NumberList, std::move(d), lo, kInf, open, {}};
}
FieldSpec integers(std::string n, json d, double lo = -kInf) {
  return {std::move(n), Kind::IntList, std::move(d), lo, kInf, false, {}};
}

const std::vector<FieldSpec>& schema(Task t) {
  static const std::vector<FieldSpec> classify_s = {
      num("h", 1e-3, 0.0, 1e-2, true),
      integer("n_theta", 360, 8, 100000),
  };
  static const std::vector<FieldSpec> mode_s = {
      num("xi_y", 8.0),
      num("xi_z", 0.0),
      num("u_min", nullptr, -1.0, 1.0),
      num("u_max", 1.0, -1.0, 1.0),
      pos("h_u", 1.0 / 400),
      num("v_max", 200.0, 1.0, kInf, true),
      pos("h_v", 1.0 / 400),
      pos("time_bin", 0.25),
      pos("nodes_per_wavelength", 20.0),
      boolean("enforce_resolution", true),
      integer("field_stride_u", 0, 0),
      integer("field_stride_v", 0, 0),
      num("t_min", 5.0, 0.0),
      num("h", 1e-3, 0.0, 1e-2, true),
  };
  static const std::vector<FieldSpec> fdtd_s = {
      choice("coupling", "nonlinear", {"nonlinear", "linearized", "free"}),
      num("eps", 1e-2, 0.0),
      pos("half_width", 24.0),
      pos("h", 0.5),
      num("cfl", 0.45, 0.0, 1.0, true),
      num("t_max", 20.0, 0.0),
      pos("output_interval", 1.0),
      num("delta", 0.05, 0.0, 1.0, true),
      integer("weighted_order", -1, -1, 2),
      boolean("gamma", false),
      boolean("strip", false),
      integer("strip_ny", 16, 2),
      integer("strip_nz", 1, 1),
      num("mode_ky", 0.0, 0.0),
      integer("mode_component", 1, 1),
      integers("components", json::array(), 1),
      num("x_center", 0.0, -1.0, 1.0),
      num("width", 1.0, 0.0, 1.0, true),
      boolean("multiplier", false),
      pos("q0", 1.0),
      boolean("snapshot", true),
      num("fit_t_min", 5.0, 0.0),
      num("renorm_h", 1e-3, 0.0, 1e-2, true),
  };
  static const std::vector<FieldSpec> geoptics_s = {
      num("u1", nullptr, -1.0, 1.0),
      num("u2", nullptr, -1.0, 1.0),
      pos("T", 20.0),
      integer("M", 2, 0, 6),
      integer("na", 13, 1),
      integer("nb", 13, 1),
      integer("nc", 1, 1),
      pos("spacing", 0.5),
      integer("steps", 1000, 10),
      pos("width", 3.0),
      integer("component", 1, 1),
      pos("mu", nullptr),
      numbers("mu_list", json::array(), 0.0, true),
      boolean("comparison", true),
      integer("comparison_samples", 20, 0),
      pos("comparison_T", 1e4),
      pos("comparison_eps", 0.1),
      integer("comparison_steps", 100000, 10),
      num("h", 1e-3, 0.0, 1e-2, true),
  };
  static const std::vector<FieldSpec> geometry_s = {
      numbers("times", json::array({4, 16, 64, 256}), 1.0),
      integer("samples", 1000000, 100000),
      numbers("sigma_times", json::array({16, 32, 64, 128, 256, 512, 1024}), 2.0),
      integers("weight_k", json::array({1, 2}), 1),
      numbers("weight_times", json::array({4, 8, 16, 32, 64}), 1.0),
      integer("lattice", 9, 3),
      integer("commutator_points", 400, 1),
  };
  static const std::vector<FieldSpec> blowup_s = {
      numbers("deltas", json::array({1e-2, 1e-3, 1e-4}), 0.0, true),
      num("xi_y", 8.0),
      num("u_min", nullptr, -1.0, 1.0),
      num("u_max", 1.0, -1.0, 1.0),
      pos("h_u", 1.0 / 1600),
      num("v_max", 300.0, 1.0, kInf, true),
      pos("h_v", 1.0 / 128),
      pos("time_bin", 0.05),
      pos("nodes_per_wavelength", 20.0),
      boolean("enforce_resolution", true),
  };
  switch (t) {
    case Task::Classify: return classify_s;
    case Task::Mode: return mode_s;
    case Task::Fdtd: return fdtd_s;
    case Task::Geoptics: return geoptics_s;
    case Task::Geometry: return geometry_s;
    case Task::Blowup: return blowup_s;
  }
  return classify_s;
}

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Number: return "a number";
    case Kind::Integer: return "an integer";
    case Kind::Bool: return "a boolean";
    case Kind::String: return "a string";
    case Kind::NumberList: return "an array of numbers";
    case Kind::IntList: return "an array of integers";
  }
  return "?";
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

bool in_range(const FieldSpec& f, double x) {
  if (!std::isfinite(x)) return false;
  if (f.lo_open ? !(x > f.lo) : !(x >= f.lo)) return false;
  return x <= f.hi;
}

std::string range_text(const FieldSpec& f) {
  std::string s = "must be";
  if (f.lo > -kInf) s += (f.lo_open ? " > " : " >= ") + fmt(f.lo);
  if (f.lo > -kInf && f.hi < kInf) s += " and";
  if (f.hi < kInf) s += " <= " + fmt(f.hi);
  return s;
}

bool is_int(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

void check_field(const FieldSpec& f, const json& v, std::vector<std::string>& errs) {
  const std::string where = "params." + f.name;
  auto bad_type = [&] { errs.push_back(where + ": expected " + kind_name(f.kind)); };
  switch (f.kind) {
    case Kind::Number:
    case Kind::Integer: {
      if (f.kind == Kind::Integer ? !is_int(v) : !v.is_number()) return bad_type();
      if (!in_range(f, v.get<double>())) errs.push_back(where + ": " + range_text(f));
      return;
    }
    case Kind::Bool:
      if (!v.is_boolean()) bad_type();
      return;
    case Kind::String: {
      if (!v.is_string()) return bad_type();
      const auto s = v.get<std::string>();
      if (!f.choices.empty() && std::find(f.choices.begin(), f.choices.end(), s) == f.choices.end()) {
        std::string all;
        for (const auto& c : f.choices) all += (all.empty() ? "" : ", ") + c;
        errs.push_back(where + ": '" + s + "' is not one of " + all);
      }
      return;
    }
    case Kind::NumberList:
    case Kind::IntList: {
      if (!v.is_array()) return bad_type();
      for (std::size_t k = 0; k < v.size(); ++k) {
        const json& e = v[k];
        if (f.kind == Kind::IntList ? !is_int(e) : !e.is_number()) return bad_type();
        if (!in_range(f, e.get<double>()))
          errs.push_back(where + "[" + std::to_string(k) + "]: " + range_text(f));
      }
      return;
    }
  }
}

const std::vector<std::string> kTopKeys = {"task", "system", "profile", "params", "seed",
                                           "output_dir"};

bool needs_system(Task t) { return t != Task::Geometry; }
bool allows_scalar(Task t) {
  return t == Task::Classify || t == Task::Mode || t == Task::Geoptics || t == Task::Blowup;
}

std::string form_slot(int i, int j, int l) {
  return "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "," + std::to_string(l + 1) +
         ")";
}

/// Cross-field checks on params that passed the per-field pass.
void check_task_params(Task task, const json& p, int n, std::vector<std::string>& errs) {
  auto has = [&](const char* k) { return p.contains(k) && !p[k].is_null(); };
  switch (task) {
    case Task::Mode:
    case Task::Blowup:
      if (has("u_min") && !(p["u_min"].get<double>() < p["u_max"].get<double>()))
        errs.push_back("params.u_min: must be below u_max");
      if (task == Task::Blowup) {
        const auto d = p["deltas"].get<std::vector<double>>();
        if (d.empty()) errs.push_back("params.deltas: must not be empty");
        for (std::size_t k = 1; k < d.size(); ++k)
          if (!(d[k] < d[k - 1])) {
            errs.push_back("params.deltas: must be strictly decreasing");
            break;
          }
        if (n != 1) errs.push_back("blowup: needs a scalar (N = 1) system");
      }
      break;
    case Task::Fdtd: {
      GridSpec g;
      g.half_width = p["half_width"];
      g.h = p["h"];
      g.cfl = p["cfl"];
      g.t_max = p["t_max"];
      g.strip = p["strip"];
      g.strip_ny = p["strip_ny"];
      g.strip_nz = p["strip_nz"];
      try {
        g.validate();
      } catch (const ValidationError& e) {
        errs.push_back(std::string("params: ") + e.what());
      }
      if (p["mode_component"].get<int>() > n) errs.push_back("params.mode_component: exceeds N");
      for (int c : p["components"].get<std::vector<int>>())
        if (c > n) errs.push_back("params.components: index " + std::to_string(c) + " exceeds N");
      if (p["multiplier"].get<bool>() && !p["strip"].get<bool>())
        errs.push_back("params.multiplier: needs strip = true");
      if (p["mode_ky"].get<double>() > 0.0 && !p["strip"].get<bool>())
        errs.push_back("params.mode_ky: needs strip = true");
      if (p["strip"].get<bool>() &&
          std::abs(p["x_center"].get<double>()) + p["width"].get<double>() > 1.0)
        errs.push_back("params: strip data need |x_center| + width <= 1");
      break;
    }
    case Task::Geoptics: {
      if (has("u1") != has("u2")) errs.push_back("params: give both u1 and u2 or neither");
      if (has("u1") && has("u2")) {
        const double u1 = p["u1"], u2 = p["u2"];
        if (!(u2 > u1)) errs.push_back("params.u2: must exceed u1");
        if (!(p["T"].get<double>() > u2 - u1)) errs.push_back("params.T: must exceed u2 - u1");
        if (!(p["comparison_T"].get<double>() > u2 - u1))
          errs.push_back("params.comparison_T: must exceed u2 - u1");
      }
      for (const char* k : {"na", "nb", "nc"}) {
        const int c = p[k];
        if (c > 1 && c < 5) errs.push_back(std::string("params.") + k + ": use 1 or at least 5 rays");
      }
      if (p["component"].get<int>() > n) errs.push_back("params.component: exceeds N");
      break;
    }
    case Task::Geometry:
      for (double t : p["sigma_times"].get<std::vector<double>>())
        if (t < 2.0) errs.push_back("params.sigma_times: entries must be >= 2");
      for (int k : p["weight_k"].get<std::vector<int>>())
        if (k > 2) errs.push_back("params.weight_k: entries must be 1 or 2");
      if (p["times"].empty()) errs.push_back("params.times: must not be empty");
      if (p["weight_times"].size() < 2) errs.push_back("params.weight_times: need two or more");
      break;
    case Task::Classify:
      break;
  }
}

struct Parsed {
  std::vector<std::string> errors;
  Scenario sc;
};

Parsed parse(const json& doc) {
  Parsed out;
  auto& errs = out.errors;
  Scenario& sc = out.sc;
  sc.config = doc;
  if (!doc.is_object()) {
    errs.push_back("config: top level must be a JSON object");
    return out;
  }
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (std::find(kTopKeys.begin(), kTopKeys.end(), it.key()) == kTopKeys.end())
      errs.push_back(it.key() + ": unknown key");

  bool task_ok = false;
  if (!doc.contains("task")) {
    errs.push_back("task: required");
  } else if (!doc["task"].is_string()) {
    errs.push_back("task: expected a string");
  } else {
    try {
      sc.task = task_from_string(doc["task"].get<std::string>());
      task_ok = true;
    } catch (const ValidationError& e) {
      errs.push_back(e.what());
    }
  }

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() &&
        !(doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0))
      errs.push_back("seed: expected a non-negative integer");
    else
      sc.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty())
      errs.push_back("output_dir: expected a non-empty string");
    else
      sc.output_dir = doc["output_dir"].get<std::string>();
  }

  // System.
  int n = -1;
  if (!doc.contains("system")) {
    if (!task_ok || needs_system(sc.task)) errs.push_back("system: required");
  } else {
    const json& s = doc["system"];
    try {
      if (s.is_string() && s.get<std::string>() == "scalar") {
        sc.scalar = true;
        n = 1;
        if (task_ok && !allows_scalar(sc.task))
          errs.push_back("system: 'scalar' is not available for task " + to_string(sc.task));
      } else if (s.is_string()) {
        sc.system = fixture_system(s.get<std::string>());
      } else if (s.is_object()) {
        sc.system = system_from_json(s);
      } else {
        errs.push_back("system: expected a fixture name or an object");
      }
    } catch (const ValidationError& e) {
      errs.push_back(e.what());
    }
    if (sc.system) {
      n = sc.system->size();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int l = 0; l < n; ++l) {
            const NullForm& m = sc.system->tensor(i, j, l);
            if (m.matrix().isZero(0.0)) continue;
            const NullFormCheck c = is_null_form(m, 1e-10, 256);
            if (!c.is_null)
              errs.push_back("system: form " + form_slot(i, j, l) +
                             " is not a null form (symmetric part off the metric by " +
                             fmt(c.residual) + ")");
          }
    }
  }

  // Profile.
  if (!doc.contains("profile")) {
    if (!task_ok || needs_system(sc.task))
      errs.push_back("profile: required");
    else
      sc.profile = WaveProfile({1.0});
  } else {
    try {
      sc.profile = profile_from_json(doc["profile"]);
      if (n > 0 && sc.profile.size() != n)
        errs.push_back("profile: " + std::to_string(sc.profile.size()) +
                       " amplitudes for a system of size " + std::to_string(n));
    } catch (const ValidationError& e) {
      errs.push_back(e.what());
    } catch (const json::exception& e) {
      errs.push_back(std::string("profile: ") + e.what());
    }
  }

  // Params.
  json params = json::object();
  if (doc.contains("params")) {
    if (!doc["params"].is_object())
      errs.push_back("params: expected an object");
    else
      params = doc["params"];
  }
  if (task_ok && params.is_object()) {
    const auto& spec = schema(sc.task);
    const std::size_t before = errs.size();
    for (auto it = params.begin(); it != params.end(); ++it) {
      const bool known = std::any_of(spec.begin(), spec.end(),
                                     [&](const FieldSpec& f) { return f.name == it.key(); });
      if (!known) errs.push_back("params." + it.key() + ": unknown key for task " +
                                 to_string(sc.task));
    }
    for (const auto& f : spec) {
      if (params.contains(f.name))
        check_field(f, params[f.name], errs);
      else if (!f.def.is_null())
        params[f.name] = f.def;
    }
    if (errs.size() == before) check_task_params(sc.task, params, n > 0 ? n : 1, errs);
  }
  sc.params = params;
  return out;
}

std::string now_utc(std::chrono::system_clock::time_point tp) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(tp.time_since_epoch()) %
                  std::chrono::seconds(1);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<long long>(us.count()));
  return buf;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string());
  out << doc.dump(2) << '\n';
}

json fit_or_reason(const std::function<FitResult()>& f) {
  try {
    return to_json(f());
  } catch (const ValidationError& e) {
    return json{{"error", e.what()}};
  }
}

LinearizedCoefficients coefficients_for(const Scenario& sc, double h,
                                        std::optional<Renormalizer>* keep = nullptr) {
  if (sc.scalar) {
    const WaveProfile p = sc.profile;
    return LinearizedCoefficients::scalar([p](double u) { return p.eval(0, u, 1); });
  }
  const CouplingTensors ct = coupling_tensors(*sc.system);
  Renormalizer r = solve_renormalizer(ct, sc.profile, h);
  LinearizedCoefficients c = linearized_coefficients(r, ct, sc.profile);
  if (keep) *keep = std::move(r);
  return c;
}

json growth_json(const GrowthRateEstimate& g) {
  return {{"K", g.positive ? g.K : 0.0},
          {"positive", g.positive},
          {"theta", g.theta},
          {"u1", g.u1},
          {"u2", g.u2},
          {"method", g.method}};
}

GoursatGrid goursat_grid(const json& p, double u_min) {
  GoursatGrid g;
  g.u_min = u_min;
  g.u_max = p["u_max"];
  g.h_u = p["h_u"];
  g.v_max = p["v_max"];
  g.h_v = p["h_v"];
  return g;
}

GoursatOptions goursat_options(const json& p) {
  GoursatOptions o;
  o.enforce_resolution = p["enforce_resolution"];
  o.nodes_per_wavelength = p["nodes_per_wavelength"];
  o.time_bin = p["time_bin"];
  return o;
}

double witness_u_min(const json& p, const GrowthRateEstimate& g) {
  if (p.contains("u_min")) return p["u_min"];
  return g.positive ? g.u1 : -1.0;
}

using Outputs = std::vector<std::string>;

void run_classify(const Scenario& sc, const fs::path& dir, Outputs& out) {
  write_json(dir / "verdict.json", classify(sc));
  out.push_back("verdict.json");
}

void run_mode(const Scenario& sc, const fs::path& dir, Outputs& out) {
  const json& p = sc.params;
  const LinearizedCoefficients coeffs = coefficients_for(sc, p["h"]);
  const GrowthRateEstimate gr = growth_rate_estimate(coeffs);
  const GoursatGrid grid = goursat_grid(p, witness_u_min(p, gr));
  grid.validate();
  GoursatOptions opts = goursat_options(p);
  const std::size_t su = p["field_stride_u"], sv = p["field_stride_v"];
  opts.field_stride_u = su > 0 ? su : std::max<std::size_t>(1, grid.nu() / 100);
  opts.field_stride_v = sv > 0 ? sv : std::max<std::size_t>(1, grid.nv() / 400);
  const double xi_y = p["xi_y"], xi_z = p["xi_z"];
  const TransverseMode mode = goursat_solve(coeffs, xi_y, xi_z, grid, {}, opts);

  write_mode_csv((dir / "mode.csv").string(), mode);
  const GrowthSeries all = sup_growth_profile(mode);
  write_growth_csv((dir / "growth.csv").string(), all);
  out.insert(out.end(), {"mode.csv", "growth.csv"});

  // Bins past (u_min + v_max)/2 no longer see the whole u' range.
  GrowthSeries s;
  for (std::size_t k = 0; k < all.t.size(); ++k)
    if (all.t[k] <= 0.5 * (grid.u_min + grid.v_max)) {
      s.t.push_back(all.t[k]);
      s.log_max.push_back(all.log_max[k]);
    }
  json fit = fit_or_reason([&] { return fit_sqrt_exponential_log(s.t, s.log_max, p["t_min"]); });
  json rep = {{"xi_y", xi_y}, {"xi_z", xi_z}, {"u_min", grid.u_min}, {"v_max", grid.v_max},
              {"growth_rate", growth_json(gr)}, {"fit", fit}};
  if (fit.contains("exponent")) {
    const double kf = fit["exponent"];
    const double kp = gr.positive ? gr.K : 0.0;
    rep["K_fit"] = kf;
    rep["K_predicted"] = kp;
    rep["ratio"] = kp > 0.0 ? json(kf / kp) : json(nullptr);
    rep["upper_bound_ok"] = kf <= 10.0 * kp + 1e-12;
  }
  write_json(dir / "fit.json", rep);
  out.push_back("fit.json");
}

void run_fdtd(const Scenario& sc, const fs::path& dir, Outputs& out) {
  const json& p = sc.params;
  GridSpec spec;
  spec.half_width = p["half_width"];
  spec.h = p["h"];
  spec.cfl = p["cfl"];
  spec.t_max = p["t_max"];
  spec.strip = p["strip"];
  spec.strip_ny = p["strip_ny"];
  spec.strip_nz = p["strip_nz"];
  const FdtdModel model(*sc.system, sc.profile, coupling_from_string(p["coupling"]));
  const int n = model.size();

  std::vector<int> comps;
  for (int c : p["components"].get<std::vector<int>>()) comps.push_back(c - 1);
  const double eps = p["eps"], ky = p["mode_ky"];
  FieldState init = spec.strip ? initial_strip_mode(spec, eps, n, ky, comps, p["x_center"],
                                                    p["width"])
                               : initial_bump(spec, eps, n, comps);

  std::optional<Renormalizer> renorm;
  std::optional<MultiplierWeight> weight;
  const bool want_gamma = p["gamma"], want_mult = p["multiplier"];
  if (want_gamma || want_mult) {
    const LinearizedCoefficients co = coefficients_for(sc, p["renorm_h"], &renorm);
    if (want_mult) weight.emplace(co, p["q0"].get<double>());
  }
  EvolveOptions opts;
  opts.output_interval = p["output_interval"];
  opts.delta = p["delta"];
  opts.weighted_order = p["weighted_order"];
  opts.renorm = renorm ? &*renorm : nullptr;
  opts.multiplier = weight ? &*weight : nullptr;
  opts.mode_ky = ky;
  opts.mode_component = p["mode_component"].get<int>() - 1;

  const EvolveResult res = evolve(model, spec, std::move(init), opts);
  write_ledger_csv((dir / "ledger.csv").string(), res.ledger);
  out.push_back("ledger.csv");
  if (p["snapshot"].get<bool>()) {
    write_snapshot((dir / "snapshot").string(), res.final_state);
    out.insert(out.end(), {"snapshot.bin", "snapshot.json"});
  }

  const double t_min = p["fit_t_min"];
  const auto t = res.ledger.column("t");
  json summary = {{"coupling", p["coupling"]},
                  {"dt", res.dt},
                  {"steps", res.steps},
                  {"delta", res.ledger.delta},
                  {"delta_strict", res.ledger.delta < 0.01},
                  {"rows", res.ledger.rows.size()}};
  if (!spec.strip) {
    summary["decay_fit"] = fit_or_reason(
        [&] { return fit_power_decay(t, res.ledger.column("sup_dpsi"), t_min); });
    summary["support_leak_3h"] = support_leak(res.final_state, 3.0);
    summary["support_leak_15h"] = support_leak(res.final_state, 15.0);
  }
  if (res.ledger.has_mode)
    summary["growth_fit"] =
        fit_or_reason([&] { return fit_sqrt_exponential(t, res.ledger.column("mode_amplitude"), t_min); });
  if (res.ledger.has_multiplier)
    summary["multiplier_worst_relative_increase"] =
        worst_relative_increase(t, res.ledger.column("multiplier_energy"));
  if (res.ledger.has_gamma) {
    const auto g = res.ledger.column("gamma_energy");
    summary["gamma_energy_growth"] = g.front() > 0.0 ? json(g.back() / g.front() - 1.0) : json(nullptr);
  }
  write_json(dir / "summary.json", summary);
  out.push_back("summary.json");
}

void run_geoptics(const Scenario& sc, const fs::path& dir, Outputs& out) {
  const json& p = sc.params;
  const LinearizedCoefficients coeffs = coefficients_for(sc, p["h"]);
  double u1, u2;
  GrowthRateEstimate gr;
  if (p.contains("u1")) {
    u1 = p["u1"];
    u2 = p["u2"];
  } else {
    gr = growth_rate_estimate(coeffs);
    if (!gr.positive) throw ValidationError("geoptics: no growth window found; give u1 and u2");
    u1 = gr.u1;
    u2 = gr.u2;
  }
  RayBundle b;
  b.dir = null_vector(u1, u2, p["T"]);
  b.na = p["na"];
  b.nb = p["nb"];
  b.nc = p["nc"];
  b.spacing = p["spacing"];
  b.steps = p["steps"];
  const double w = p["width"];
  const int comp = p["component"].get<int>() - 1, n = coeffs.n;
  const InitialProfile phi0 = [=](double x, double y, double z) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
    v(comp) = std::exp(-((x + u1) * (x + u1) + y * y + z * z) / (2.0 * w * w));
    return v;
  };
  GeoOpticsSolution sol = transport_solve(coeffs, b, p["M"], phi0);
  if (p.contains("mu")) sol.mu = p["mu"];
  measure_remainder(sol, coeffs);
  write_ray_csv((dir / "ray.csv").string(), sol, b.na / 2, b.nb / 2, b.nc / 2);
  out.push_back("ray.csv");

  json rep = {{"u1", u1},
              {"u2", u2},
              {"T", b.dir.T},
              {"L", {b.dir.L(0), b.dir.L(1), b.dir.L(2), b.dir.L(3)}},
              {"null_norm", b.dir.minkowski_norm()},
              {"M", sol.M},
              {"mu", sol.mu},
              {"residual", sol.remainder_proxy}};
  json scan = json::array();
  for (double mu : p["mu_list"].get<std::vector<double>>())
    scan.push_back({{"mu", mu}, {"residual", ansatz_residual(sol, coeffs, mu)}});
  rep["residual_scan"] = scan;

  if (p["comparison"].get<bool>()) {
    const NullDirection cdir = null_vector(u1, u2, p["comparison_T"]);
    const MatrixFn P = [&coeffs, u1, u2](double a) { return coeffs.By(u1 + a * (u2 - u1)); };
    const ComparisonReport c = comparison_ode_check(P, cdir, p["comparison_samples"], sc.seed,
                                                    p["comparison_eps"], p["comparison_steps"]);
    rep["comparison"] = {{"T", cdir.T},
                         {"seed", sc.seed},
                         {"integral_lambda", c.integral_lambda},
                         {"rate_scale", c.rate_scale},
                         {"upper_ok", c.upper_ok},
                         {"worst_upper_margin", c.worst_upper_margin},
                         {"lower_ok", c.lower_ok},
                         {"achieved_log_growth", c.achieved_log_growth},
                         {"required_log_growth", c.required_log_growth},
                         {"min_gap", c.min_gap},
                         {"inconclusive", c.inconclusive}};
  }
  write_json(dir / "report.json", rep);
  out.push_back("report.json");
}

void run_geometry(const Scenario& sc, const fs::path& dir, Outputs& out) {
  const json& p = sc.params;
  json rep;
  json vols = json::array();
  for (double t : p["times"].get<std::vector<double>>()) {
    const VolumeEstimate v = region_volume(t, p["samples"], sc.seed);
    json e = to_json(v);
    e["t"] = t;
    e["bound"] = 100.0 * t;
    e["within_bound"] = v.value <= 100.0 * t;
    vols.push_back(e);
  }
  rep["volumes"] = vols;

  json sig = json::array();
  double lo = kInf, hi = 0.0;
  for (double t : p["sigma_times"].get<std::vector<double>>()) {
    const double ts = t * sphere_cap_measure(t, t);
    lo = std::min(lo, ts);
    hi = std::max(hi, ts);
    sig.push_back({{"t", t}, {"r", t}, {"t_sigma", ts}});
  }
  rep["sphere_sections"] = {{"entries", sig}, {"max_over_min", lo > 0.0 ? hi / lo : kInf}};

  const auto active = sc.profile.active();
  const int comp = active.empty() ? 0 : active.front();
  const WaveProfile prof = sc.profile;
  const auto F = [prof, comp](double u) { return prof.eval(comp, u, 0); };
  json wg = json::array();
  for (int k : p["weight_k"].get<std::vector<int>>())
    wg.push_back(to_json(
        weight_growth_check(F, k, p["weight_times"].get<std::vector<double>>(), {}, p["lattice"])));
  rep["weight_growth"] = wg;

  const CommutatorReport c = commutator_check(sc.seed, p["commutator_points"]);
  rep["commutator"] = {{"max_ratio", c.max_ratio}, {"points", c.points}, {"seed", sc.seed}};
  write_json(dir / "geometry.json", rep);
  out.push_back("geometry.json");
}

void run_blowup(const Scenario& sc, const fs::path& dir, Outputs& out) {
  const json& p = sc.params;
  const LinearizedCoefficients coeffs = coefficients_for(sc, 1e-3);
  const GrowthRateEstimate gr = growth_rate_estimate(coeffs);
  const GoursatGrid grid = goursat_grid(p, witness_u_min(p, gr));
  grid.validate();
  const auto deltas = p["deltas"].get<std::vector<double>>();
  const BlowupScan scan = nirenberg_blowup_scan(coeffs, p["xi_y"], deltas, grid, goursat_options(p));
  write_growth_csv((dir / "growth.csv").string(), scan.growth);
  out.push_back("growth.csv");

  json entries = json::array();
  std::vector<double> x, y;
  for (const auto& e : scan.entries) {
    entries.push_back({{"delta", e.delta}, {"t_blow", e.t_blow ? json(*e.t_blow) : json(nullptr)}});
    if (e.t_blow) {
      x.push_back(-std::log(e.delta));
      y.push_back(std::sqrt(*e.t_blow));
    }
  }
  json rep = {{"u_min", grid.u_min}, {"xi_y", p["xi_y"]}, {"growth_rate", growth_json(gr)},
              {"entries", entries}};
  if (x.size() >= 2) {
    rep["fit"] = fit_or_reason([&] { return linear_fit(x, y); });
    if (rep["fit"].contains("exponent") && gr.positive) {
      rep["inverse_K"] = 1.0 / gr.K;
      rep["slope_ratio"] = rep["fit"]["exponent"].get<double>() * gr.K;
    }
  }
  write_json(dir / "blowup.json", rep);
  out.push_back("blowup.json");
}

std::atomic<int> g_tmp_counter{0};

}  // namespace

Task task_from_string(const std::string& s) {
  if (s == "classify") return Task::Classify;
  if (s == "mode") return Task::Mode;
  if (s == "fdtd") return Task::Fdtd;
  if (s == "geoptics") return Task::Geoptics;
  if (s == "geometry") return Task::Geometry;
  if (s == "blowup") return Task::Blowup;
  throw ValidationError("task: unknown task '" + s +
                        "' (classify, mode, fdtd, geoptics, geometry, blowup)");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::Classify: return "classify";
    case Task::Mode: return "mode";
    case Task::Fdtd: return "fdtd";
    case Task::Geoptics: return "geoptics";
    case Task::Geometry: return "geometry";
    case Task::Blowup: return "blowup";
  }
  return "?";
}

std::vector<std::string> scenario_errors(const json& doc) { return parse(doc).errors; }

Scenario parse_scenario(const json& doc) {
  Parsed p = parse(doc);
  if (!p.errors.empty()) {
    std::string msg = std::to_string(p.errors.size()) + " configuration error(s):";
    for (const auto& e : p.errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  return std::move(p.sc);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return parse_scenario(doc);
}

std::string config_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json RunManifest::to_json() const {
  return {{"version", version},   {"task", task},           {"config_hash", config_hash},
          {"started", started},   {"wall_seconds", wall_seconds}, {"output_dir", output_dir},
          {"outputs", outputs},   {"ok", ok}};
}

json classify(const Scenario& sc) {
  const json& p = sc.params;
  const double h = p.contains("h") ? p["h"].get<double>() : 1e-3;
  const int n_theta = p.contains("n_theta") ? p["n_theta"].get<int>() : 360;
  const auto active = sc.profile.active();
  json v;
  v["system"] = sc.scalar ? "scalar" : sc.system->label;
  v["profile"] = profile_to_json(sc.profile);

  bool c1 = true;
  json viol = json::array();
  if (sc.scalar) {
    c1 = active.empty();
  } else {
    const ConditionOneResult r = check_condition_one(*sc.system, active);
    c1 = r.satisfied;
    for (const auto& x : r.violations)
      viol.push_back({{"i", x.i + 1}, {"j", x.j + 1}, {"l", x.l + 1}, {"b", x.b}, {"c", x.c}});
    std::vector<double> samples;
    for (int k = 0; k <= 200; ++k) samples.push_back(-1.0 + 0.01 * k);
    v["travelling_wave_residual"] = verify_travelling_wave(*sc.system, sc.profile, samples);
  }
  v["condition1"] = c1;
  v["condition1_vacuous"] = active.empty();
  v["condition1_violations"] = viol;

  const LinearizedCoefficients coeffs = coefficients_for(sc, h);
  const ConditionTwoResult c2 = check_condition_two(coeffs, n_theta);
  v["condition2"] = {{"satisfied", c2.satisfied},
                     {"u0", c2.u0},
                     {"theta", c2.theta},
                     {"eigenvalue_real", c2.eigenvalue_real}};
  const GrowthRateEstimate gr = growth_rate_estimate(coeffs);
  v["K"] = gr.positive ? gr.K : 0.0;
  v["witnesses"] = {{"u0", c2.u0}, {"theta", c2.theta}, {"u1", gr.u1}, {"u2", gr.u2},
                    {"method", gr.method}};
  v["predicted"] = c1 ? "stable" : (c2.satisfied ? "unstable" : "undetermined");
  return v;
}

std::string resolve_output_dir(const Scenario& sc, const std::string& out_override) {
  std::string d = out_override;
  if (d.empty()) d = sc.output_dir;
  if (d.empty()) d = "nullwave-" + to_string(sc.task) + "-" + config_hash(sc.config);
  fs::path path(d);
  if (path.is_relative()) {
    if (const char* root = std::getenv("NULLWAVE_OUTPUT_ROOT"); root && *root)
      path = fs::path(root) / path;
  }
  return path.lexically_normal().string();
}

RunManifest run_scenario(const Scenario& sc, const std::string& out_override) {
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest man;
  man.task = to_string(sc.task);
  man.config_hash = config_hash(sc.config);
  man.started = now_utc(started);

  fs::path final_dir = resolve_output_dir(sc, out_override);
  if (final_dir.filename().empty()) final_dir = final_dir.parent_path();
  man.output_dir = final_dir.string();
  if (fs::exists(final_dir)) {
    if (!fs::is_directory(final_dir) || (!fs::is_empty(final_dir) &&
                                         !fs::exists(final_dir / "manifest.json")))
      throw ValidationError("output directory " + final_dir.string() +
                            " exists and does not hold an earlier run");
  }
  if (final_dir.has_parent_path()) fs::create_directories(final_dir.parent_path());
  const fs::path tmp = final_dir.string() + ".tmp-" + std::to_string(::getpid()) + "-" +
                       std::to_string(g_tmp_counter++);
  fs::remove_all(tmp);
  fs::create_directory(tmp);

  auto finish = [&](const fs::path& dir) {
    man.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(dir / "manifest.json", man.to_json());
    if (fs::exists(final_dir)) fs::remove_all(final_dir);
    fs::rename(dir, final_dir);
  };

  try {
    switch (sc.task) {
      case Task::Classify: run_classify(sc, tmp, man.outputs); break;
      case Task::Mode: run_mode(sc, tmp, man.outputs); break;
      case Task::Fdtd: run_fdtd(sc, tmp, man.outputs); break;
      case Task::Geoptics: run_geoptics(sc, tmp, man.outputs); break;
      case Task::Geometry: run_geometry(sc, tmp, man.outputs); break;
      case Task::Blowup: run_blowup(sc, tmp, man.outputs); break;
    }
  } catch (const NumericalError& e) {
    fs::remove_all(tmp);
    fs::create_directory(tmp);
    write_json(tmp / "failure.json", {{"task", man.task},
                                      {"config_hash", man.config_hash},
                                      {"error", e.what()},
                                      {"time", e.time()}});
    man.ok = false;
    man.outputs = {"failure.json"};
    finish(tmp);
    throw;
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  finish(tmp);
  return man;
}

}  // namespace nullwave
