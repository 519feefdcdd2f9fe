#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mfg/io.hpp"

using namespace mfg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mfginv_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig c;
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(config_from_json(Json::object()), c);
}

TEST(Config, FullRoundTrip) {
  ExperimentConfig c;
  c.n_cells = 96;
  c.n_steps = 300;
  c.horizon = 0.75;
  c.cost = {0.5, 2.0, -1.0, 0.6};
  c.frequencies = {1, 3};
  c.amplitudes = {0.02, -0.01};
  c.stencil_amplitude = 0.015;
  c.max_order = 3;
  c.richardson = false;
  c.damping = 0.7;
  c.tolerance = 1e-12;
  c.max_iterations = 99;
  c.scheme = Scheme::kSemiImplicit;
  c.data_dir = "/tmp/data";
  c.record_measurements = true;
  c.table_modes = {2, 5};
  c.table_f1_min = 0.1;
  c.table_f1_max = 10.0;
  c.table_points = 7;
  c.output_dir = "results";
  c.seed = 42;
  const auto text = config_to_json(c).dump();
  EXPECT_EQ(config_from_json(Json::parse(text)), c);
}

TEST(Config, UnknownFieldsRejected) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"grid": {"n_cells": 64, "dx": 0.1}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"costs": [1, 2]})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"picard": {"theta": 0.5}})")), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"schema_version": 2})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"grid": {"n_cells": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"grid": {"T": -1}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"cost": []})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"cost": "one"})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"perturbation": {"frequencies": [1], "amplitudes": []}})")),
               ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"picard": {"damping": 1.5}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"picard": {"scheme": "rk4"}})")), ConfigError);
}

TEST(Config, LoadFromFile) {
  const auto dir = scratch_dir("load");
  std::ofstream(dir / "good.json") << R"({"grid": {"n_cells": 40}, "cost": [2.0]})";
  std::ofstream(dir / "bad.json") << R"({"grid": )";
  const auto c = load_config(dir / "good.json");
  EXPECT_EQ(c.n_cells, 40);
  EXPECT_EQ(c.cost, std::vector<double>{2.0});
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
}

TEST(Config, ToleranceDefaultDependsOnCommand) {
  ExperimentConfig c;
  EXPECT_EQ(model_from_config(c, 1e-10).solver.tolerance, 1e-10);
  c.tolerance = 1e-9;
  EXPECT_EQ(model_from_config(c, 1e-13).solver.tolerance, 1e-9);
}

TEST(MeasurementStore, RecordAndReplay) {
  const auto model = ForwardModel::for_inversion(32, 64);
  RecordingMeasureFn recorder(simulated_measurements(CostFunction({1.0, 0.5}), model));
  auto fn = recorder.fn();
  const std::vector<int> k{1, 1};
  const std::vector<double> e{0.01, -0.005};
  const auto live = fn(k, e).record;
  fn({}, {});

  const auto dir = scratch_dir("store");
  int index = 0;
  for (const auto& j : recorder.records()) write_json(dir / ("m" + std::to_string(index++) + ".json"), j);
  const auto store = MeasurementStore::load(dir);
  EXPECT_EQ(store.size(), 2u);
  const auto replay = store.as_measure_fn()(k, e);
  EXPECT_EQ(replay.record.V, live.V);
  EXPECT_EQ(replay.record.W, live.W);
  EXPECT_FALSE(replay.report.has_value());
}

TEST(MeasurementStore, MissingPointNamesEpsilon) {
  const auto dir = scratch_dir("missing");
  const std::vector<int> k{1, 1};
  const std::vector<double> e{0.01, 0.01};
  write_json(dir / "a.json", measurement_to_json(k, e, {1.0, 1.0}));
  const auto store = MeasurementStore::load(dir);
  const std::vector<double> other{0.01, -0.01};
  try {
    store.at(k, other);
    FAIL() << "expected MissingMeasurement";
  } catch (const MissingMeasurement& err) {
    EXPECT_NE(std::string(err.what()).find("(0.01, -0.01)"), std::string::npos) << err.what();
  }
}

TEST(MeasurementStore, RejectsMalformedFiles) {
  const auto dir = scratch_dir("malformed");
  std::ofstream(dir / "a.json") << R"({"frequencies": [1], "epsilon": [0.1], "V": 1, "W": 1, "extra": 0})";
  EXPECT_THROW(MeasurementStore::load(dir), ConfigError);
  EXPECT_THROW(MeasurementStore::load(dir / "nowhere"), ConfigError);
}

TEST(MeasurementKey, FullPrecision) {
  const std::vector<int> k{1};
  const std::vector<double> a{0.01}, b{0.01 + 1e-15};
  EXPECT_NE(measurement_key(k, a), measurement_key(k, b));
}

TEST(ReconstructionJson, PassFlags) {
  ReconstructionResult r;
  r.coefficients = {1.0004, 0.503, 0.26};
  r.uncertainties = {1e-13, 1e-6, 1e-4};
  r.residuals = {0.0, 0.0, 0.0};
  r.orders.resize(3);
  r.complete = true;
  auto j = reconstruction_to_json(r, std::vector<double>{1.0, 0.5, 0.25});
  EXPECT_TRUE(j.at("pass").get<bool>());
  r.coefficients[1] = 0.51;
  j = reconstruction_to_json(r, std::vector<double>{1.0, 0.5, 0.25});
  EXPECT_FALSE(j.at("pass").get<bool>());
  EXPECT_FALSE(j.at("checks")[1].at("pass").get<bool>());
  EXPECT_FALSE(reconstruction_to_json(r, std::nullopt).contains("pass"));
}

TEST(FieldCsv, Shape) {
  const Grid1D grid(4);
  const TimeGrid tgrid(1.0, 2);
  const auto text = field_to_csv(SpaceTimeField(grid, tgrid, 0.5), grid, tgrid);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(text.substr(0, 9), "t,x=0.125");
}
