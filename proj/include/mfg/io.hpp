#pragma once

// Experiment configuration, measurement records and result serialization.
// Configs are JSON with a schema version; unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfg/cost_model.hpp"
#include "mfg/errors.hpp"
#include "mfg/inversion.hpp"
#include "mfg/mfg_forward.hpp"

namespace mfg {

using Json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  // grid
  int n_cells = 128;
  int n_steps = 256;
  double horizon = 1.0;
  // running cost
  std::vector<double> cost{1.0, 0.5, 0.25};
  // perturbation: initial density for `forward`, stencil settings for `invert`
  std::vector<int> frequencies;
  std::vector<double> amplitudes;
  double stencil_amplitude = 0.01;
  int max_order = 4;
  bool richardson = true;
  // Picard coupling; tolerance defaults depend on the command when unset
  double damping = 0.5;
  std::optional<double> tolerance;
  int max_iterations = 200;
  Scheme scheme = Scheme::kCrankNicolson;
  // invert: read measurements from here instead of simulating `cost`
  std::optional<std::string> data_dir;
  bool record_measurements = false;
  // linearize: transfer-ratio table
  std::vector<int> table_modes{1, 2, 3};
  double table_f1_min = 1e-3;
  double table_f1_max = 1e3;
  int table_points = 200;

  std::string output_dir = "out";
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline std::string scheme_name(Scheme s) {
  return s == Scheme::kSemiImplicit ? "semi_implicit" : "crank_nicolson";
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "semi_implicit") return Scheme::kSemiImplicit;
  if (name == "crank_nicolson") return Scheme::kCrankNicolson;
  throw ConfigError("unknown scheme '" + name + "' (expected crank_nicolson or semi_implicit)");
}

namespace detail {

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) throw ConfigError(where + ": unknown field '" + key + "'");
  }
}

template <class T>
void read_field(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace detail

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::read_field;
  using detail::reject_unknown;
  ExperimentConfig c;
  reject_unknown(j,
                 {"schema_version", "grid", "cost", "perturbation", "picard", "data_dir",
                  "record_measurements", "transfer_table", "output_dir", "seed"},
                 "config");
  read_field(j, "schema_version", c.schema_version, "config");
  detail::require(c.schema_version == kConfigSchemaVersion,
                  "config: unsupported schema_version " + std::to_string(c.schema_version));
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    reject_unknown(g, {"n_cells", "n_steps", "T"}, "grid");
    read_field(g, "n_cells", c.n_cells, "grid");
    read_field(g, "n_steps", c.n_steps, "grid");
    read_field(g, "T", c.horizon, "grid");
  }
  read_field(j, "cost", c.cost, "config");
  if (j.contains("perturbation")) {
    const auto& p = j.at("perturbation");
    reject_unknown(p, {"frequencies", "amplitudes", "h", "max_order", "richardson"},
                   "perturbation");
    read_field(p, "frequencies", c.frequencies, "perturbation");
    read_field(p, "amplitudes", c.amplitudes, "perturbation");
    read_field(p, "h", c.stencil_amplitude, "perturbation");
    read_field(p, "max_order", c.max_order, "perturbation");
    read_field(p, "richardson", c.richardson, "perturbation");
  }
  if (j.contains("picard")) {
    const auto& p = j.at("picard");
    reject_unknown(p, {"damping", "tolerance", "max_iterations", "scheme"}, "picard");
    read_field(p, "damping", c.damping, "picard");
    if (p.contains("tolerance")) {
      double tol = 0.0;
      read_field(p, "tolerance", tol, "picard");
      c.tolerance = tol;
    }
    read_field(p, "max_iterations", c.max_iterations, "picard");
    if (p.contains("scheme")) {
      std::string name;
      read_field(p, "scheme", name, "picard");
      c.scheme = parse_scheme(name);
    }
  }
  if (j.contains("data_dir") && !j.at("data_dir").is_null()) {
    std::string dir;
    read_field(j, "data_dir", dir, "config");
    c.data_dir = dir;
  }
  read_field(j, "record_measurements", c.record_measurements, "config");
  if (j.contains("transfer_table")) {
    const auto& t = j.at("transfer_table");
    reject_unknown(t, {"modes", "f1_min", "f1_max", "points"}, "transfer_table");
    read_field(t, "modes", c.table_modes, "transfer_table");
    read_field(t, "f1_min", c.table_f1_min, "transfer_table");
    read_field(t, "f1_max", c.table_f1_max, "transfer_table");
    read_field(t, "points", c.table_points, "transfer_table");
  }
  read_field(j, "output_dir", c.output_dir, "config");
  read_field(j, "seed", c.seed, "config");

  using detail::require;
  require(c.n_cells >= 2, "grid.n_cells must be >= 2");
  require(c.n_steps >= 1, "grid.n_steps must be >= 1");
  require(c.horizon > 0.0 && std::isfinite(c.horizon), "grid.T must be positive");
  require(!c.cost.empty(), "cost must list at least F(1)");
  for (double v : c.cost) require(std::isfinite(v), "cost coefficients must be finite");
  require(c.frequencies.size() == c.amplitudes.size(),
          "perturbation.frequencies and perturbation.amplitudes differ in length");
  for (int k : c.frequencies) require(k >= 1, "perturbation.frequencies must be >= 1");
  require(c.stencil_amplitude > 0.0, "perturbation.h must be positive");
  require(c.max_order >= 0, "perturbation.max_order must be >= 0");
  require(c.damping > 0.0 && c.damping <= 1.0, "picard.damping must lie in (0, 1]");
  require(!c.tolerance || *c.tolerance > 0.0, "picard.tolerance must be positive");
  require(c.max_iterations >= 1, "picard.max_iterations must be >= 1");
  require(c.table_f1_min > 0.0 && c.table_f1_max > c.table_f1_min,
          "transfer_table needs 0 < f1_min < f1_max");
  require(c.table_points >= 2, "transfer_table.points must be >= 2");
  for (int k : c.table_modes) require(k >= 1, "transfer_table.modes must be >= 1");
  return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json picard = {{"damping", c.damping},
                 {"max_iterations", c.max_iterations},
                 {"scheme", scheme_name(c.scheme)}};
  if (c.tolerance) picard["tolerance"] = *c.tolerance;
  Json j = {
      {"schema_version", c.schema_version},
      {"grid", {{"n_cells", c.n_cells}, {"n_steps", c.n_steps}, {"T", c.horizon}}},
      {"cost", c.cost},
      {"perturbation",
       {{"frequencies", c.frequencies},
        {"amplitudes", c.amplitudes},
        {"h", c.stencil_amplitude},
        {"max_order", c.max_order},
        {"richardson", c.richardson}}},
      {"picard", picard},
      {"record_measurements", c.record_measurements},
      {"transfer_table",
       {{"modes", c.table_modes},
        {"f1_min", c.table_f1_min},
        {"f1_max", c.table_f1_max},
        {"points", c.table_points}}},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
  };
  if (c.data_dir) j["data_dir"] = *c.data_dir;
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

/// Forward model for a command; `default_tolerance` applies when the config
/// leaves picard.tolerance unset.
inline ForwardModel model_from_config(const ExperimentConfig& c, double default_tolerance) {
  ForwardModel model{Grid1D(c.n_cells), TimeGrid(c.horizon, c.n_steps), SolverConfig{}};
  model.solver.damping = c.damping;
  model.solver.tolerance = c.tolerance.value_or(default_tolerance);
  model.solver.max_iterations = c.max_iterations;
  model.solver.scheme = c.scheme;
  return model;
}

// ---------------------------------------------------------------------------
// Measurement records on disk: one JSON object per initial density,
//   {"frequencies": [k...], "epsilon": [e...], "V": v, "W": w}.

inline Json measurement_to_json(std::span<const int> freqs, std::span<const double> eps,
                                const MeasurementRecord& r) {
  return {{"frequencies", std::vector<int>(freqs.begin(), freqs.end())},
          {"epsilon", std::vector<double>(eps.begin(), eps.end())},
          {"V", r.V},
          {"W", r.W}};
}

inline std::string measurement_key(std::span<const int> freqs, std::span<const double> eps) {
  std::ostringstream os;
  os.precision(17);
  os << "k=";
  for (int k : freqs) os << k << ',';
  os << ";e=";
  for (double e : eps) os << e << ',';
  return os.str();
}

class MissingMeasurement : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Read-only table of recorded measurements keyed by (frequencies, epsilon).
class MeasurementStore {
 public:
  static MeasurementStore load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("data_dir " + dir.string() + " is not a directory");
    MeasurementStore store;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      std::ifstream in(file);
      Json j;
      try {
        j = Json::parse(in);
        detail::reject_unknown(j, {"frequencies", "epsilon", "V", "W"}, file.string());
        const auto freqs = j.at("frequencies").get<std::vector<int>>();
        const auto eps = j.at("epsilon").get<std::vector<double>>();
        if (freqs.size() != eps.size()) throw ConfigError(file.string() + ": length mismatch");
        store.records_[measurement_key(freqs, eps)] = {j.at("V").get<double>(),
                                                       j.at("W").get<double>()};
      } catch (const Json::exception& e) {
        throw ConfigError(file.string() + ": " + e.what());
      }
    }
    return store;
  }

  std::size_t size() const noexcept { return records_.size(); }

  MeasurementRecord at(std::span<const int> freqs, std::span<const double> eps) const {
    const auto it = records_.find(measurement_key(freqs, eps));
    if (it == records_.end()) {
      std::ostringstream os;
      os << "no recorded measurement for frequencies (";
      for (std::size_t i = 0; i < freqs.size(); ++i) os << (i ? ", " : "") << freqs[i];
      os << ") at epsilon = " << format_vector(eps);
      throw MissingMeasurement(os.str());
    }
    return it->second;
  }

  MeasureFn as_measure_fn() const {
    return [store = *this](std::span<const int> freqs, std::span<const double> eps) {
      return Observation{store.at(freqs, eps), std::nullopt};
    };
  }

 private:
  std::map<std::string, MeasurementRecord> records_;
};

/// Wraps a measure function and keeps every observation it returns.
class RecordingMeasureFn {
 public:
  explicit RecordingMeasureFn(MeasureFn inner) : inner_(std::move(inner)) {}

  MeasureFn fn() {
    return [this](std::span<const int> freqs, std::span<const double> eps) {
      auto obs = inner_(freqs, eps);
      std::lock_guard lock(mutex_);
      log_[measurement_key(freqs, eps)] = measurement_to_json(freqs, eps, obs.record);
      return obs;
    };
  }

  /// Records in key order.
  std::vector<Json> records() const {
    std::lock_guard lock(mutex_);
    std::vector<Json> out;
    for (const auto& [_, j] : log_) out.push_back(j);
    return out;
  }

 private:
  MeasureFn inner_;
  mutable std::mutex mutex_;
  std::map<std::string, Json> log_;
};

// ---------------------------------------------------------------------------
// Results

inline Json report_to_json(const SolverReport& r) {
  return {{"picard_iterations", r.picard_iterations},
          {"final_residual", r.final_residual},
          {"converged", r.converged},
          {"mass_error", r.mass_error},
          {"min_density", r.min_density}};
}

inline Json derivative_to_json(const DerivativeEstimate& d) {
  return {{"value", d.value},
          {"order", d.order},
          {"stencil_amplitude", d.stencil_amplitude},
          {"richardson_used", d.richardson_used},
          {"spread", d.spread}};
}

inline Json diagnostics_to_json(const ForwardDiagnostics& d) {
  Json j = {{"forward_solves", d.forward_solves},
            {"recorded_points", d.recorded_points},
            {"max_picard_iterations", d.max_picard_iterations},
            {"max_final_residual", d.max_final_residual},
            {"max_mass_error", d.max_mass_error}};
  j["min_density"] = std::isfinite(d.min_density) ? Json(d.min_density) : Json(nullptr);
  return j;
}

/// Relative tolerance used to flag a recovered coefficient of this order.
inline double acceptance_tolerance(int order) {
  switch (order) {
    case 0: return 1e-3;
    case 1: return 1e-2;
    case 2: return 5e-2;
    default: return 1e-1;
  }
}

/// Absolute tolerance for coefficients whose true value is zero.
inline constexpr double kNullCoefficientTolerance = 1e-3;

inline Json reconstruction_to_json(const ReconstructionResult& r,
                                   const std::optional<std::vector<double>>& truth) {
  Json orders = Json::array();
  for (const auto& o : r.orders) {
    Json entry = {{"order", o.order},
                  {"value", o.value},
                  {"uncertainty", o.uncertainty},
                  {"residual", o.residual},
                  {"resolved", o.resolved},
                  {"frequencies", o.frequencies},
                  {"denominator", o.denominator},
                  {"diagnostics", diagnostics_to_json(o.diagnostics)}};
    if (o.order >= 1) entry["data_derivative"] = derivative_to_json(o.data_derivative);
    if (o.trial_derivative) entry["trial_derivative"] = derivative_to_json(*o.trial_derivative);
    if (!o.note.empty()) entry["note"] = o.note;
    orders.push_back(entry);
  }
  Json j = {{"complete", r.complete},
            {"coefficients", r.coefficients},
            {"uncertainties", r.uncertainties},
            {"residuals", r.residuals},
            {"orders", orders}};
  if (!r.failure.empty()) j["failure"] = r.failure;
  if (truth) {
    j["ground_truth"] = *truth;
    Json checks = Json::array();
    bool all_pass = true;
    for (std::size_t k = 0; k < r.coefficients.size(); ++k) {
      const double t = k < truth->size() ? (*truth)[k] : 0.0;
      const double err = std::abs(r.coefficients[k] - t);
      const bool relative = t != 0.0;
      const double tol = relative ? acceptance_tolerance(static_cast<int>(k)) * std::abs(t)
                                  : std::max(kNullCoefficientTolerance, r.uncertainties[k]);
      const bool pass = err <= tol;
      all_pass = all_pass && pass;
      checks.push_back({{"order", k},
                        {"truth", t},
                        {"error", err},
                        {"tolerance", tol},
                        {"relative", relative},
                        {"pass", pass}});
    }
    j["checks"] = checks;
    j["pass"] = all_pass && r.complete;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Files

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

/// One row per time level: t, then the nodal values.
inline std::string field_to_csv(const SpaceTimeField& f, const Grid1D& grid, const TimeGrid& tgrid) {
  std::ostringstream os;
  os.precision(17);
  os << 't';
  for (double x : grid.nodes()) os << ",x=" << x;
  os << '\n';
  for (int level = 0; level < tgrid.n_levels(); ++level) {
    os << tgrid.time(level);
    for (double v : f.row(level)) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace mfg
