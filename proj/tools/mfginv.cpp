// mfginv: forward solves, transfer-ratio tables, cost reconstruction and
// invariant self-tests for the mean-field game inverse problem.
//
// Exit codes: 0 success, 1 numeric failure, 2 config error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mfg/io.hpp"
#include "mfg/selftest.hpp"

namespace fs = std::filesystem;
using namespace mfg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 1;
constexpr int kExitConfig = 2;

constexpr double kForwardTolerance = 1e-10;
constexpr double kInversionTolerance = 1e-13;

struct Overrides {
  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  std::optional<int> max_order;
  std::optional<double> amplitude;
};

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.max_order) {
    if (*o.max_order < 0) throw ConfigError("--max-order must be >= 0");
    cfg.max_order = *o.max_order;
  }
  if (o.amplitude) {
    if (!(*o.amplitude > 0.0)) throw ConfigError("--amplitude must be positive");
    cfg.stencil_amplitude = *o.amplitude;
  }
  if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
  return cfg;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int cmd_forward(const ExperimentConfig& cfg) {
  const auto model = model_from_config(cfg, kForwardTolerance);
  const auto cost = CostFunction::polynomial(cfg.cost);
  const auto m0 = InitialDensity::perturbed(model.grid, cfg.frequencies, cfg.amplitudes);
  const auto sol = solve_mfg(cost, m0, model.tgrid, model.grid, model.solver);
  const auto record = measurement_from(sol.u, m0, model.grid);
  const fs::path out = cfg.output_dir;
  write_text(out / "u.csv", field_to_csv(sol.u, model.grid, model.tgrid));
  write_text(out / "m.csv", field_to_csv(sol.m, model.grid, model.tgrid));
  write_json(out / "measurement.json", measurement_to_json(cfg.frequencies, cfg.amplitudes, record));
  write_json(out / "report.json", report_to_json(sol.report));
  std::cout << "V = " << record.V << "  W = " << record.W << "  (picard iterations "
            << sol.report.picard_iterations << ", mass error " << sol.report.mass_error << ")\n";
  return kExitOk;
}

int cmd_linearize(const ExperimentConfig& cfg) {
  std::ostringstream csv;
  csv.precision(17);
  csv << "mode,lambda,F1,T,ratio\n";
  for (int k : cfg.table_modes) {
    for (double f1 : selftest::log_grid(cfg.table_f1_min, cfg.table_f1_max, cfg.table_points)) {
      csv << k << ',' << eigenvalue(k) << ',' << f1 << ',' << cfg.horizon << ','
          << transfer_ratio(eigenvalue(k), f1, cfg.horizon) << '\n';
    }
  }
  write_text(fs::path(cfg.output_dir) / "transfer_ratio.csv", csv.str());
  std::cout << "wrote " << (fs::path(cfg.output_dir) / "transfer_ratio.csv").string() << "\n";
  return kExitOk;
}

int cmd_invert(const ExperimentConfig& cfg, int jobs) {
  const auto model = model_from_config(cfg, kInversionTolerance);
  InversionOptions opts;
  opts.amplitude = cfg.stencil_amplitude;
  opts.richardson = cfg.richardson;
  opts.jobs = jobs;
  opts.data_noise = model.solver.tolerance;

  std::optional<std::vector<double>> truth;
  MeasureFn measure;
  if (cfg.data_dir) {
    measure = MeasurementStore::load(*cfg.data_dir).as_measure_fn();
  } else {
    truth = cfg.cost;
    measure = simulated_measurements(CostFunction::polynomial(cfg.cost), model);
  }
  RecordingMeasureFn recorder(measure);
  if (cfg.record_measurements) measure = recorder.fn();

  const auto result = reconstruct(measure, cfg.max_order, model, opts);
  Json j = reconstruction_to_json(result, truth);
  j["config"] = config_to_json(cfg);
  j["generated_at"] = timestamp();
  const fs::path out = cfg.output_dir;
  write_json(out / "reconstruction.json", j);
  if (cfg.record_measurements) {
    int index = 0;
    for (const auto& rec : recorder.records()) {
      std::ostringstream name;
      name << "measurement_" << std::setw(4) << std::setfill('0') << index++ << ".json";
      write_json(out / "measurements" / name.str(), rec);
    }
  }
  for (std::size_t k = 0; k < result.coefficients.size(); ++k) {
    std::cout << "F^(" << k << ") = " << result.coefficients[k] << " +- "
              << result.uncertainties[k] << "\n";
  }
  if (!result.complete) {
    std::cerr << "reconstruction stopped: " << result.failure << "\n";
    return kExitNumeric;
  }
  if (truth && !j.at("pass").get<bool>()) {
    std::cerr << "recovered coefficients outside tolerance of the ground truth\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_selftest(const ExperimentConfig& cfg, bool write_file) {
  const auto groups = run_selftest(cfg.seed);
  Json j = Json::array();
  bool ok = true;
  for (const auto& g : groups) {
    ok = ok && g.passed;
    j.push_back({{"group", g.name},
                 {"passed", g.passed},
                 {"metric", g.metric},
                 {"threshold", g.threshold},
                 {"detail", g.detail}});
  }
  Json report = {{"passed", ok}, {"groups", j}};
  std::cout << report.dump(2) << "\n";
  if (write_file) write_json(fs::path(cfg.output_dir) / "selftest.json", report);
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field game forward solver and running-cost reconstruction"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Experiment config (JSON)");
    sub->add_option("--out", o.out_dir, "Output directory (overrides config)");
    sub->add_option("--jobs", o.jobs, "Maximum concurrent forward solves");
  };
  auto* forward = app.add_subcommand("forward", "Solve the coupled system and write u, m, (V, W)");
  auto* linearize = app.add_subcommand("linearize", "Write transfer-ratio tables as CSV");
  auto* invert = app.add_subcommand("invert", "Reconstruct Taylor coefficients of F");
  auto* self = app.add_subcommand("selftest", "Run the invariant groups");
  for (auto* sub : {forward, linearize, invert, self}) add_common(sub);
  invert->add_option("--max-order", o.max_order, "Highest coefficient order to recover");
  invert->add_option("--amplitude", o.amplitude, "Stencil amplitude h");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto cfg = resolve_config(o);
    if (forward->parsed()) return cmd_forward(cfg);
    if (linearize->parsed()) return cmd_linearize(cfg);
    if (invert->parsed()) return cmd_invert(cfg, o.jobs);
    return cmd_selftest(cfg, !o.out_dir.empty() || !o.config_path.empty());
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
