// liad: command-line front end. Data goes to files in the output directory,
// progress to stderr, and a one-line summary to stdout.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "liad/analysis.hpp"
#include "liad/config.hpp"
#include "liad/io.hpp"
#include "liad/montecarlo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace liad;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> events;
  unsigned workers = 1;
  std::string format;  // "", "csv" or "json"
};

struct Run {
  RunConfig config;
  std::uint64_t seed = 1;
  fs::path out_dir;
  std::vector<std::string> artifacts;
  json options = json::object();

  fs::path path(const std::string& name) {
    artifacts.push_back((out_dir / name).string());
    return out_dir / name;
  }
};

Run prepare(const Globals& g) {
  Run run;
  if (!g.config_path.empty()) run.config = load_config(g.config_path);
  if (g.seed) run.config.simulation.master_seed = *g.seed;
  if (g.events) {
    if (*g.events < 1) throw ConfigError("must be >= 1", "--events");
    run.config.events = *g.events;
  }
  run.seed = run.config.simulation.master_seed;
  if (g.workers < 1) throw ConfigError("must be >= 1", "--workers");
  if (!g.out_dir.empty()) {
    run.out_dir = g.out_dir;
  } else if (const char* env = std::getenv("LIAD_OUT_DIR"); env && *env) {
    run.out_dir = env;
  } else {
    run.out_dir = "liad_out";
  }
  fs::create_directories(run.out_dir);
  return run;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

void write_manifest(Run& run, const std::string& command, const std::vector<std::string>& argv,
                    double wall_s) {
  const json manifest = {{"command", command},
                         {"argv", argv},
                         {"version", LIAD_VERSION},
                         {"seed", run.seed},
                         {"config", io::config_to_json(run.config)},
                         {"options", run.options},
                         {"artifacts", run.artifacts},
                         {"wall_time_s", wall_s}};
  write_json(run.out_dir / (command + ".manifest.json"), manifest);
}

/// "a:b:log:n", "a:b:lin:n" or a comma-separated list.
std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  const char sep = text.find(':') != std::string::npos ? ':' : ',';
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, sep);) parts.push_back(p);
  auto num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("not a number: '" + s + "'", "--grid");
  };
  std::vector<double> grid;
  if (sep == ',') {
    for (const auto& p : parts) grid.push_back(num(p));
    return grid;
  }
  if (parts.size() != 4 || (parts[2] != "log" && parts[2] != "lin"))
    throw ConfigError("expected a:b:log:n, a:b:lin:n or a comma list", "--grid");
  const double a = num(parts[0]), b = num(parts[1]);
  const double nd = num(parts[3]);
  if (!(nd >= 1.0) || nd != std::floor(nd)) throw ConfigError("point count must be >= 1", "--grid");
  const auto n = static_cast<std::size_t>(nd);
  const bool log = parts[2] == "log";
  if (log && !(a > 0.0 && b > 0.0)) throw ConfigError("log grid needs positive ends", "--grid");
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    grid.push_back(log ? a * std::pow(b / a, f) : a + (b - a) * f);
  }
  // Pin the end points exactly.
  if (n > 1) grid.back() = b;
  return grid;
}

template <class F>
std::vector<TrajectoryOutcome> run_events(const SimulationConfig& cfg, std::uint64_t first,
                                          std::size_t count, unsigned workers, F&& progress) {
  std::vector<TrajectoryOutcome> outs(count);
  std::atomic<std::size_t> next{0}, done{0};
  auto work = [&]() {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      outs[i] = simulate_launch_event(cfg, first + i);
      progress(++done);
    }
  };
  if (workers <= 1 || count <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, count); ++w) pool.emplace_back(work);
  }
  return outs;
}

std::string cmd_trajectory(Run& run, const Globals& g, std::uint64_t event_index, bool trace,
                           std::size_t decimation, double hold, double sample_rate) {
  const SimulationConfig& sc = run.config.simulation;
  run.options = {{"event_index", event_index}, {"trace", trace}, {"trace_decimation", decimation}};

  if (hold > 0.0) {
    // Thermal motion about the central antinode, sampled on a uniform grid.
    if (!(sample_rate > 0.0)) throw ConfigError("must be > 0", "--sample-rate");
    run.options["hold_s"] = hold;
    run.options["sample_rate_hz"] = sample_rate;
    const auto sys = ParticleSystem::make(sc.particle, sc.gas, sc.trap, sc.gravity);
    if (!(sys.field.depth() > 0.0)) throw ConfigError("--hold needs a trap with power > 0", "trap.power_W");
    const auto freq = trap_frequencies(sc.trap, sc.particle);
    const double period = 2.0 * constants::kPi / freq.axial;
    const auto stride = static_cast<std::size_t>(std::ceil(50.0 / (sample_rate * period)));
    const double dt = 1.0 / (sample_rate * static_cast<double>(stride));
    const auto samples = static_cast<std::size_t>(std::llround(hold * sample_rate));
    if (samples < 2) throw ConfigError("shorter than two samples", "--hold");
    Rng rng(event_seed(run.seed, event_index));
    std::normal_distribution<double> normal(0.0, std::sqrt(sys.thermal_velocity_variance()));
    KineticState init;
    init.position = sc.trap.center();
    init.velocity = Vec3(normal(rng), normal(rng), normal(rng));
    std::cerr << "trajectory: " << samples << " samples at " << sample_rate << " Hz (dt " << dt
              << " s)\n";
    const auto states = sample_motion(init, sys, dt, samples, stride, rng);
    auto os = open_out(run.path("trace.csv"));
    io::write_trace_csv(os, states);
    return "trajectory: held " + io::fmt(hold) + " s, " + std::to_string(states.size()) +
           " samples -> " + run.out_dir.string();
  }

  const std::size_t count = g.events.value_or(1);
  SimulationConfig cfg = sc;
  if (trace) cfg.propagation.trace_decimation = std::max<std::size_t>(1, decimation);
  auto outs = run_events(cfg, event_index, count, g.workers, [&](std::size_t done) {
    if (count >= 100 && done % (count / 10) == 0)
      std::cerr << "trajectory: " << done << "/" << count << " events\n";
  });
  std::size_t trapped = 0;
  for (const auto& o : outs) trapped += o.kind == OutcomeKind::Trapped;

  if (trace) {
    auto os = open_out(run.path("trace.csv"));
    io::write_trace_csv(os, outs.front().trace);
  }
  if (g.format == "json") {
    json rows = json::array();
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const auto& o = outs[i];
      rows.push_back({{"event", event_index + i},
                      {"kind", to_string(o.kind)},
                      {"arrival_time_s", io::nullable(o.arrival_time)},
                      {"capture_time_s", io::nullable(o.capture_time)},
                      {"site_index", o.site_index},
                      {"site_intensity_fraction", io::nullable(o.site_intensity_fraction)},
                      {"final_energy_J", o.final_energy}});
    }
    write_json(run.path("outcomes.json"), rows);
  } else {
    auto os = open_out(run.path("outcomes.csv"));
    io::write_outcomes_csv(os, outs);
  }
  if (count == 1) {
    const auto& o = outs.front();
    std::string s = std::string("trajectory: ") + to_string(o.kind);
    if (o.kind == OutcomeKind::Trapped) s += " at t=" + io::fmt(o.capture_time) + " s";
    return s + " (" + std::to_string(o.steps) + " steps) -> " + run.out_dir.string();
  }
  return "trajectory: " + std::to_string(trapped) + "/" + std::to_string(count) + " trapped -> " +
         run.out_dir.string();
}

SweepParameter parse_param(const std::string& s) {
  if (s == "pressure") return SweepParameter::Pressure;
  if (s == "power") return SweepParameter::Power;
  if (s == "launch-speed") return SweepParameter::LaunchSpeed;
  if (s == "distance") return SweepParameter::SubstrateDistance;
  throw ConfigError("must be pressure, power, launch-speed or distance", "--param");
}

std::string cmd_sweep(Run& run, const Globals& g, const std::string& param, const std::string& grid_text,
                      double cap) {
  SweepSpec spec;
  spec.parameter = parse_param(param);
  spec.grid = parse_grid(grid_text);
  spec.events_per_point = run.config.events;
  spec.base = run.config.simulation;
  spec.master_seed = run.seed;
  spec.workers = g.workers;
  spec.wall_clock_cap_s = cap;
  run.options = {{"param", param}, {"grid", spec.grid}, {"wall_clock_cap_s", cap}};
  spec.on_point = [&](std::size_t i, const SweepPoint& p) {
    char line[160];
    std::snprintf(line, sizeof line, "sweep: [%zu/%zu] %s=%g %s  p=%.4f (%zu/%zu)%s\n", i + 1,
                  spec.grid.size(), to_string(spec.parameter), p.value, unit_of(spec.parameter), p.p,
                  p.trapped, p.n, p.complete ? "" : " incomplete");
    std::cerr << line;
  };
  const auto r = run_sweep(spec);
  if (g.format != "csv") write_json(run.path("sweep.json"), io::sweep_to_json(r));
  if (g.format != "json") {
    auto os = open_out(run.path("sweep.csv"));
    io::write_sweep_csv(os, r);
  }
  const auto best = std::max_element(r.points.begin(), r.points.end(),
                                     [](const auto& a, const auto& b) { return a.p < b.p; });
  char line[200];
  std::snprintf(line, sizeof line, "sweep: %zu points x %zu events, max p=%.4f at %s=%g %s -> %s",
                r.points.size(), r.events_per_point, best->p, to_string(r.parameter), best->value,
                unit_of(r.parameter), run.out_dir.string().c_str());
  return line;
}

std::string cmd_psd(Run& run, const std::string& input, const std::string& axis, std::size_t segment,
                    double overlap, const std::string& band) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot read " + input);
  const auto trace = io::read_trace_csv(in);
  if (trace.size() < 16) throw std::runtime_error(input + ": need at least 16 samples");
  const int ax = axis == "x" ? 0 : axis == "y" ? 1 : 2;
  const double dt = (trace.back().time - trace.front().time) / static_cast<double>(trace.size() - 1);
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (std::abs(trace[i].time - trace[i - 1].time - dt) > 1e-6 * dt)
      throw std::runtime_error(input + ": samples are not evenly spaced (line " + std::to_string(i + 2) +
                               "); record with trajectory --hold");
  std::vector<double> x(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) x[i] = trace[i].position[ax];
  if (segment == 0) {
    segment = 16;
    while (segment * 2 <= trace.size() / 8 && segment < (1u << 16)) segment *= 2;
  }
  const auto psd = welch_psd(TimeSeries(1.0 / dt, std::move(x)), segment, overlap);

  double f_lo = 0.0, f_hi = 0.0;
  if (!band.empty()) {
    const auto colon = band.find(':');
    if (colon == std::string::npos) throw ConfigError("expected lo:hi in Hz", "--band");
    try {
      f_lo = std::stod(band.substr(0, colon));
      f_hi = std::stod(band.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("expected lo:hi in Hz", "--band");
    }
  } else {
    // Around the strongest line, skipping the bins a mean offset leaks into.
    std::size_t peak = 2;
    for (std::size_t i = 2; i < psd.densities.size(); ++i)
      if (psd.densities[i] > psd.densities[peak]) peak = i;
    f_lo = psd.frequencies[peak] / 4.0;
    f_hi = std::min(psd.frequencies[peak] * 4.0, psd.frequencies.back());
  }
  const auto fit = lorentzian_fit(psd, f_lo, f_hi);
  run.options = {{"input", input}, {"axis", axis}, {"segment_length", segment}, {"overlap", overlap},
                 {"band_hz", {f_lo, f_hi}}};

  {
    auto os = open_out(run.path("psd.csv"));
    io::write_psd_csv(os, psd);
  }
  json report = io::fit_to_json(fit);
  report["band_hz"] = {f_lo, f_hi};
  report["axis"] = axis;
  const auto& sc = run.config.simulation;
  if (sc.trap.total_power() > 0.0) {
    const auto freq = trap_frequencies(sc.trap, sc.particle);
    report["expected_f0_hz"] = (axis == "z" ? freq.axial : freq.radial) / (2.0 * constants::kPi);
    report["expected_linewidth_hz"] = damping_rate(sc.particle, sc.gas) / (2.0 * constants::kPi);
  }
  write_json(run.path("fit.json"), report);
  char line[200];
  std::snprintf(line, sizeof line, "psd: f0=%.6g Hz linewidth=%.6g Hz%s -> %s", fit.center_frequency,
                fit.linewidth, fit.converged ? "" : " (not converged)", run.out_dir.string().c_str());
  return line;
}

std::string cmd_shots(Run& run, double lambda, double p) {
  ShotModel m{lambda, p};
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), "--lambda/--p");
  }
  const auto s = shot_outcome_statistics(m);
  run.options = {{"lambda", lambda}, {"p", p}};
  write_json(run.path("shots.json"),
             {{"lambda", lambda}, {"p", p}, {"p_none", s.none}, {"p_single", s.single},
              {"p_multiple", s.multiple}, {"p_any", -std::expm1(-lambda * p)}});
  return "shots: P_none=" + io::fmt(s.none) + " P_single=" + io::fmt(s.single) +
         " P_multiple=" + io::fmt(s.multiple);
}

std::string cmd_velocity(Run& run, const Globals& g, const std::string& input, double bin_width) {
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot read " + input);
  const auto outs = io::read_outcomes_csv(in);
  const double d = run.config.simulation.substrate_distance;
  std::vector<double> times;
  for (const auto& o : outs)
    if (o.arrival_time > 0.0) times.push_back(o.arrival_time);
  if (times.empty()) throw std::runtime_error(input + ": no recorded arrivals");
  if (bin_width <= 0.0) {
    const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
    const double span = *hi - *lo;
    bin_width = span > 0.0 ? span / std::ceil(std::sqrt(static_cast<double>(times.size())))
                           : std::max(*lo, 1e-12) * 1e-3;
  }
  const auto summary = arrival_histogram(outs, d, bin_width);
  run.options = {{"input", input}, {"bin_width_s", bin_width}, {"distance_m", d}};

  if (g.format == "json") {
    write_json(run.path("velocities.json"),
               {{"distance_m", d},
                {"arrival_time_s", summary.arrival_times},
                {"velocity_mps", summary.implied_velocities},
                {"histogram", {{"edges_s", summary.histogram.edges}, {"counts", summary.histogram.counts}}}});
  } else {
    auto vs = open_out(run.path("velocities.csv"));
    vs << "arrival_time_s,velocity_mps\n";
    for (std::size_t i = 0; i < summary.arrival_times.size(); ++i)
      vs << io::fmt(summary.arrival_times[i]) << ',' << io::fmt(summary.implied_velocities[i]) << '\n';
    auto hs = open_out(run.path("arrival_histogram.csv"));
    hs << "t_lo_s,t_hi_s,count\n";
    const auto& h = summary.histogram;
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      hs << io::fmt(h.edges[i]) << ',' << io::fmt(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
  }
  auto v = summary.implied_velocities;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return "velocity: " + std::to_string(summary.arrival_times.size()) + " arrivals, median " +
         io::fmt(v[v.size() / 2]) + " m/s -> " + run.out_dir.string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optical-trap loading simulator"};
  app.set_version_flag("--version", LIAD_VERSION);
  app.require_subcommand(1, 1);

  Globals g;
  app.add_option("--config", g.config_path, "YAML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed (overrides sim.seed)");
  app.add_option("--out-dir", g.out_dir, "Output directory (default $LIAD_OUT_DIR, else ./liad_out)");
  app.add_option("--events", g.events, "Events (per sweep point; trajectory default 1)");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Table format (sweep writes both unless given)")
      ->check(CLI::IsMember({"csv", "json"}));

  std::uint64_t event_index = 0;
  bool trace = false;
  std::size_t decimation = 10;
  double hold = 0.0, sample_rate = 1e6;
  auto* traj = app.add_subcommand("trajectory", "Simulate launch events; optionally record a trace");
  traj->add_option("--event-index", event_index, "First event index");
  traj->add_flag("--trace", trace, "Write the first event's trace");
  traj->add_option("--trace-decimation", decimation, "Keep every n-th step in the trace");
  traj->add_option("--hold", hold, "Instead record this many seconds of trapped motion");
  traj->add_option("--sample-rate", sample_rate, "Sample rate for --hold, Hz");

  std::string param, grid;
  double cap = 0.0;
  auto* sweep = app.add_subcommand("sweep", "Capture probability across a parameter grid");
  sweep->add_option("--param", param, "pressure (mbar), power (W), launch-speed (m/s) or distance (m)")
      ->required();
  sweep->add_option("--grid", grid, "a:b:log:n, a:b:lin:n or v1,v2,...")->required();
  sweep->add_option("--wall-clock-cap", cap, "Seconds per point before stopping early");

  std::string input, axis = "z", band;
  std::size_t segment = 0;
  double overlap = 0.5;
  auto* psd = app.add_subcommand("psd", "Welch spectrum and line fit of a recorded trace");
  psd->add_option("--input", input, "Trace CSV")->required()->check(CLI::ExistingFile);
  psd->add_option("--axis", axis, "Coordinate to analyse")->check(CLI::IsMember({"x", "y", "z"}));
  psd->add_option("--segment-length", segment, "Welch segment length (default: auto)");
  psd->add_option("--overlap", overlap, "Segment overlap fraction");
  psd->add_option("--band", band, "Fit band lo:hi in Hz (default: around the strongest line)");

  double lambda = 0.0, p = 0.0;
  auto* shots = app.add_subcommand("shots", "Outcome probabilities for multi-particle shots");
  shots->add_option("--lambda", lambda, "Mean particles per shot")->required();
  shots->add_option("--p", p, "Per-particle capture probability")->required();

  std::string outcomes;
  double bin_width = 0.0;
  auto* velocity = app.add_subcommand("velocity", "Launch velocities from arrival times");
  velocity->add_option("--input", outcomes, "Outcomes CSV")->required()->check(CLI::ExistingFile);
  velocity->add_option("--bin-width", bin_width, "Arrival histogram bin width, s (default: auto)");

  for (auto* sub : {traj, sweep, psd, shots, velocity}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::vector<std::string> args(argv, argv + argc);
  const auto start = std::chrono::steady_clock::now();
  std::string command;
  try {
    Run run = prepare(g);
    std::string summary;
    if (traj->parsed()) {
      command = "trajectory";
      summary = cmd_trajectory(run, g, event_index, trace, decimation, hold, sample_rate);
    } else if (sweep->parsed()) {
      command = "sweep";
      summary = cmd_sweep(run, g, param, grid, cap);
    } else if (psd->parsed()) {
      command = "psd";
      summary = cmd_psd(run, input, axis, segment, overlap, band);
    } else if (shots->parsed()) {
      command = "shots";
      summary = cmd_shots(run, lambda, p);
    } else {
      command = "velocity";
      summary = cmd_velocity(run, g, outcomes, bin_width);
    }
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    write_manifest(run, command, args, wall.count());
    std::cout << summary << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << (command.empty() ? "error" : command) << ": " << e.what() << '\n';
    return kExitRuntime;
  }
}
