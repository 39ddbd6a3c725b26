#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "liad/config.hpp"
#include "liad/io.hpp"

using namespace liad;

namespace {

std::string key_of(const std::string& yaml) {
  try {
    parse_config_text(yaml);
  } catch (const ConfigError& e) {
    return e.key_path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  for (const char* text : {"", "\n", "# nothing\n", "{}"}) {
    const auto rc = parse_config_text(text);
    const SimulationConfig d;
    EXPECT_EQ(rc.simulation.particle.radius(), 150e-9);
    EXPECT_EQ(rc.simulation.trap.wavelength(), 1550e-9);
    EXPECT_EQ(rc.simulation.trap.waist(), 6e-6);
    EXPECT_EQ(rc.simulation.trap.total_power(), 0.2);
    EXPECT_EQ(rc.simulation.substrate_distance, 8e-3);
    EXPECT_EQ(rc.simulation.gas.pressure_mbar(), d.gas.pressure_mbar());
    EXPECT_EQ(rc.simulation.master_seed, d.master_seed);
    EXPECT_EQ(rc.events, 1000u);
    EXPECT_TRUE(std::holds_alternative<LogNormalSpeed>(rc.simulation.launch.speed));
  }
}

TEST(Config, EmptyFileGivesDefaults) {
  const auto path = std::filesystem::temp_directory_path() / "liad_empty_config.yaml";
  { std::ofstream(path) << ""; }
  const auto rc = load_config(path.string());
  EXPECT_EQ(rc.simulation.trap.waist(), 6e-6);
  std::filesystem::remove(path);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/liad.yaml"), ConfigError);
}

TEST(Config, NegativePressureNamesKey) {
  EXPECT_EQ(key_of("gas: {pressure_mbar: -1}"), "gas.pressure_mbar");
  try {
    parse_config_text("gas:\n  pressure_mbar: -1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("gas.pressure_mbar"), std::string::npos);
  }
}

TEST(Config, InvalidValuesNameTheirKeys) {
  EXPECT_EQ(key_of("particle: {radius_m: 0}"), "particle.radius_m");
  EXPECT_EQ(key_of("particle: {refractive_index: 0.9}"), "particle.refractive_index");
  EXPECT_EQ(key_of("gas: {temperature_K: 0}"), "gas.temperature_K");
  EXPECT_EQ(key_of("gas: {pressure_mbar: abc}"), "gas.pressure_mbar");
  EXPECT_EQ(key_of("trap: {waist_m: -6e-6}"), "trap.waist_m");
  EXPECT_EQ(key_of("trap: {power_W: -0.1}"), "trap.power_W");
  EXPECT_EQ(key_of("launch: {kind: delta, speed_mps: -1}"), "launch.speed_mps");
  EXPECT_EQ(key_of("launch: {kind: lognormal, geometric_sigma: 0.5}"), "launch.geometric_sigma");
  EXPECT_EQ(key_of("launch: {kind: maxwell}"), "launch.kind");
  EXPECT_EQ(key_of("launch: {spread_rad: 2.0}"), "launch.spread_rad");
  EXPECT_EQ(key_of("launch: {direction: [0, 0]}"), "launch.direction");
  EXPECT_EQ(key_of("launch: {distance_m: 0}"), "launch.distance_m");
  EXPECT_EQ(key_of("launch: {kind: empirical, bin_edges_mps: [1, 2], weights: [-1]}"),
            "launch.weights");
  EXPECT_EQ(key_of("sim: {t_max_s: 0}"), "sim.t_max_s");
  EXPECT_EQ(key_of("sim: {events: 0}"), "sim.events");
  EXPECT_EQ(key_of("sim: {dt_fine_s: 1e-3}"), "sim.dt_fine_s");
  EXPECT_EQ(key_of("schema_version: 2"), "schema_version");
  EXPECT_EQ(key_of("gas: 3"), "gas");
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_EQ(key_of("gas: {presure_mbar: 1}"), "gas.presure_mbar");
  EXPECT_EQ(key_of("lasers: {}"), "lasers");
  EXPECT_EQ(key_of("launch: {kind: delta, median_mps: 3}"), "launch.median_mps");
  EXPECT_EQ(key_of("sim: {workers: 4}"), "sim.workers");
}

TEST(Config, ParseErrorIsConfigError) {
  EXPECT_THROW(parse_config_text("gas: {pressure_mbar: [1"), ConfigError);
}

TEST(Config, ReadsEveryKind) {
  auto rc = parse_config_text("launch: {kind: delta, speed_mps: 3.5}");
  EXPECT_EQ(std::get<DeltaSpeed>(rc.simulation.launch.speed).speed, 3.5);
  rc = parse_config_text("launch: {kind: gamma, shape: 2, scale_mps: 7}");
  EXPECT_EQ(std::get<GammaSpeed>(rc.simulation.launch.speed).scale, 7.0);
  rc = parse_config_text("launch: {kind: empirical, bin_edges_mps: [1, 2, 4], weights: [1, 3]}");
  EXPECT_EQ(std::get<EmpiricalSpeed>(rc.simulation.launch.speed).weights.size(), 2u);
  rc = parse_config_text("gas: {pressure_mbar: 2.5}\nsim: {seed: 99, events: 7, gravity: false}");
  EXPECT_DOUBLE_EQ(rc.simulation.gas.pressure_mbar(), 2.5);
  EXPECT_EQ(rc.simulation.master_seed, 99u);
  EXPECT_EQ(rc.events, 7u);
  EXPECT_FALSE(rc.simulation.gravity);
}

TEST(Config, WaistRoundTripsBitIdentically) {
  const auto rc = parse_config_text("trap: {waist_m: 6e-6}");
  const auto back = parse_config_text(dump_config(rc));
  EXPECT_EQ(back.simulation.trap.waist(), 6e-6);
  EXPECT_EQ(dump_config(back), dump_config(rc));
}

TEST(Config, AwkwardValuesRoundTrip) {
  RunConfig rc;
  rc.simulation.gas = rc.simulation.gas.with_pressure(0.1 * 100.0 / 3.0);
  rc.simulation.trap = TrapConfig(1550e-9 + 1e-21, 6e-6 * (1.0 + 1e-15), 0.1 + 0.2);
  rc.simulation.launch.speed = EmpiricalSpeed{{0.1, 0.7, 1.3}, {1.0 / 3.0, 2.0 / 3.0}};
  rc.simulation.launch.transverse_spread = 0.01;
  rc.simulation.master_seed = 0xFFFFFFFFFFFFFFFFull;
  const auto back = parse_config_text(dump_config(rc));
  EXPECT_EQ(back.simulation.gas.pressure(), rc.simulation.gas.pressure());
  EXPECT_EQ(back.simulation.trap.wavelength(), rc.simulation.trap.wavelength());
  EXPECT_EQ(back.simulation.trap.waist(), rc.simulation.trap.waist());
  EXPECT_EQ(back.simulation.trap.total_power(), rc.simulation.trap.total_power());
  EXPECT_EQ(std::get<EmpiricalSpeed>(back.simulation.launch.speed).weights,
            std::get<EmpiricalSpeed>(rc.simulation.launch.speed).weights);
  EXPECT_EQ(back.simulation.master_seed, rc.simulation.master_seed);
  EXPECT_EQ(io::config_to_json(back).dump(), io::config_to_json(rc).dump());
}

TEST(SweepFiles, JsonFollowsSchema) {
  SweepResult r;
  r.parameter = SweepParameter::Pressure;
  r.master_seed = 42;
  r.events_per_point = 10;
  SweepPoint a;
  a.value = 1.0;
  a.n = 10;
  a.trapped = 3;
  a.escaped = 6;
  a.timeouts = 1;
  a.p = 0.3;
  a.mean_capture_time = 0.02;
  SweepPoint b = a;
  b.value = 2.0;
  b.trapped = 0;
  b.p = 0.0;
  b.mean_capture_time = std::numeric_limits<double>::quiet_NaN();
  r.points = {a, b};
  const auto j = io::sweep_to_json(r);
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_EQ(j.at("parameter"), "pressure");
  EXPECT_EQ(j.at("unit"), "mbar");
  EXPECT_EQ(j.at("seed"), 42u);
  EXPECT_TRUE(j.at("config").contains("trap"));
  ASSERT_EQ(j.at("points").size(), 2u);
  for (const char* k : {"value", "n", "trapped", "p", "ci_lo", "ci_hi", "mean_capture_time_s", "timeouts"})
    EXPECT_TRUE(j["points"][0].contains(k)) << k;
  EXPECT_EQ(j["points"][0]["mean_capture_time_s"], 0.02);
  EXPECT_TRUE(j["points"][1]["mean_capture_time_s"].is_null());
}

TEST(SweepFiles, CsvHasSameColumns) {
  SweepResult r;
  SweepPoint a;
  a.value = 0.1;
  a.n = 5;
  a.trapped = 1;
  a.p = 0.2;
  r.points = {a};
  std::ostringstream os;
  io::write_sweep_csv(os, r);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "value,n,trapped,p,ci_lo,ci_hi,mean_capture_time_s,timeouts");
  EXPECT_EQ(io::detail::split_csv(row).size(), 8u);
  EXPECT_EQ(row.substr(0, 4), "0.10");
}

TEST(TraceFiles, RoundTripExactly) {
  std::vector<KineticState> trace(3);
  for (int i = 0; i < 3; ++i) {
    trace[i].time = i * 1e-7 / 3.0;
    trace[i].position = Vec3(1.0 / 3.0 * i, -8e-3 + 1e-19, std::nextafter(1e-6, 1.0));
    trace[i].velocity = Vec3(-0.1, 20.0 / 7.0, 1e-300);
  }
  std::stringstream ss;
  io::write_trace_csv(ss, trace);
  const auto back = io::read_trace_csv(ss);
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].time, trace[i].time);
    EXPECT_EQ(back[i].position, trace[i].position);
    EXPECT_EQ(back[i].velocity, trace[i].velocity);
  }
}

TEST(TraceFiles, RejectsMalformedInput) {
  std::istringstream wrong_header("t,x\n1,2\n");
  EXPECT_THROW(io::read_trace_csv(wrong_header), std::runtime_error);
  std::istringstream short_row(std::string(io::kTraceHeader) + "\n1,2,3\n");
  EXPECT_THROW(io::read_trace_csv(short_row), std::runtime_error);
  std::istringstream bad_number(std::string(io::kTraceHeader) + "\n1,2,3,4,5,6,x7\n");
  EXPECT_THROW(io::read_trace_csv(bad_number), std::runtime_error);
  std::istringstream empty("");
  EXPECT_THROW(io::read_trace_csv(empty), std::runtime_error);
}

TEST(OutcomeFiles, RoundTrip) {
  std::vector<TrajectoryOutcome> outs(3);
  outs[0].kind = OutcomeKind::Trapped;
  outs[0].capture_time = 0.0123;
  outs[0].site_index = -4;
  outs[0].site_intensity_fraction = 0.97;
  outs[0].arrival_time = 1e-3 / 7.0;
  outs[0].final_energy = -1e-20;
  outs[1].kind = OutcomeKind::Escaped;
  outs[1].arrival_time = 4e-4;
  outs[2].kind = OutcomeKind::TimedOut;
  std::stringstream ss;
  io::write_outcomes_csv(ss, outs);
  const auto back = io::read_outcomes_csv(ss);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].kind, OutcomeKind::Trapped);
  EXPECT_EQ(back[0].capture_time, outs[0].capture_time);
  EXPECT_EQ(back[0].site_index, -4);
  EXPECT_EQ(back[0].arrival_time, outs[0].arrival_time);
  EXPECT_EQ(back[0].final_energy, outs[0].final_energy);
  EXPECT_EQ(back[1].kind, OutcomeKind::Escaped);
  EXPECT_TRUE(std::isnan(back[1].capture_time));
  EXPECT_EQ(back[2].kind, OutcomeKind::TimedOut);
  EXPECT_TRUE(std::isnan(back[2].arrival_time));
}

TEST(OutcomeFiles, RejectsUnknownKind) {
  std::istringstream is(std::string(io::kOutcomeHeader) + "\n0,stuck,1,1,0,1,0\n");
  EXPECT_THROW(io::read_outcomes_csv(is), std::runtime_error);
}

TEST(PsdFiles, HeaderDescribesEstimate) {
  std::vector<double> x(64);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.3 * static_cast<double>(i));
  const auto psd = welch_psd(TimeSeries(100.0, x), 16);
  std::ostringstream os;
  io::write_psd_csv(os, psd);
  const auto text = os.str();
  EXPECT_EQ(text.rfind("# window=hann segment_length=16 overlap=0.5 segments=7 sample_rate_hz=100", 0), 0u);
  EXPECT_NE(text.find("\nf_hz,psd\n0,"), std::string::npos);
}

TEST(Format, SeventeenDigits) {
  EXPECT_EQ(io::fmt(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(io::fmt(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(io::fmt(2.0), "2");
}
