// Command-line front end: sweep, synthesize, fit, report, emulate.
//
// Every command reads a JSON config, writes its outputs into --out, and drops
// a manifest.json recording the command, a digest of everything that
// influenced the run (config bytes, explicit flag overrides, data files), the
// output files, and the resolved configuration.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 computation failure.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ringloop/ringloop.hpp"

namespace fs = std::filesystem;
using ringloop::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitComputation = 3;

// Explicitly provided flag overrides, folded into the run digest in a
// canonical (sorted, name=value) form so the digest changes exactly when an
// input changes.
class OverrideRecorder {
 public:
  void add(const std::string& name, const std::string& value) {
    overrides_[name] = value;
  }
  void add(const std::string& name, double value) {
    overrides_[name] = ringloop::format_double(value);
  }
  void add(const std::string& name, std::uint64_t value) {
    overrides_[name] = std::to_string(value);
  }
  std::string canonical() const {
    std::string out;
    for (const auto& [name, value] : overrides_) out += name + "=" + value + ";";
    return out;
  }

 private:
  std::map<std::string, std::string> overrides_;
};

std::string run_digest(const std::string& config_bytes, const OverrideRecorder& overrides,
                       const std::string& data_bytes = {}) {
  std::uint64_t hash = ringloop::fnv1a64(config_bytes);
  hash = ringloop::fnv1a64("\x1f", hash);
  hash = ringloop::fnv1a64(overrides.canonical(), hash);
  if (!data_bytes.empty()) {
    hash = ringloop::fnv1a64("\x1f", hash);
    hash = ringloop::fnv1a64(data_bytes, hash);
  }
  return ringloop::digest_hex(hash);
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& digest, const std::vector<std::string>& outputs,
                    const Json& resolved_config) {
  ringloop::RunManifest manifest;
  manifest.command = command;
  manifest.config_digest = digest;
  manifest.outputs = outputs;
  manifest.config = resolved_config;
  ringloop::write_file((out_dir / "manifest.json").string(),
                       ringloop::to_pretty_json(ringloop::to_json(manifest)));
}

Json plant_to_json(const ringloop::PlantModel& plant) {
  return Json{{"gamma_p", plant.gamma_p()}, {"k1", plant.k1()}, {"k4", plant.k4()}};
}

struct SweepGridArgs {
  double grid_min = 0.0;
  double grid_max = 0.0;
  std::size_t grid_points = 0;
  bool min_set = false, max_set = false, points_set = false;
};

// --- sweep ---------------------------------------------------------------

int cmd_sweep(const std::string& config_path, const std::string& out,
              const SweepGridArgs& flags) {
  const std::string config_bytes = ringloop::read_file(config_path);
  const Json config = Json::parse(config_bytes);

  const ringloop::PlantModel plant = ringloop::plant_from_json(config.at("plant"));
  const ringloop::CompensatorModel comp =
      ringloop::compensator_from_json(config.at("compensator"), plant);
  const ringloop::LoopEnvironment env =
      ringloop::environment_from_json(config.at("loop"));

  const Json sweep_block = config.value("sweep", Json::object());
  double grid_min = sweep_block.value("grid_min", -5.0 * plant.gamma_p());
  double grid_max = sweep_block.value("grid_max", 5.0 * plant.gamma_p());
  std::size_t grid_points = sweep_block.value("grid_points", std::size_t{1001});

  OverrideRecorder overrides;
  if (flags.min_set) {
    grid_min = flags.grid_min;
    overrides.add("grid_min", grid_min);
  }
  if (flags.max_set) {
    grid_max = flags.grid_max;
    overrides.add("grid_max", grid_max);
  }
  if (flags.points_set) {
    grid_points = flags.grid_points;
    overrides.add("grid_points", static_cast<std::uint64_t>(grid_points));
  }

  const std::vector<double> grid = ringloop::linspace(grid_min, grid_max, grid_points);
  const ringloop::SweepResult result =
      ringloop::frequency_sweep(plant, comp, env, grid, true);

  std::vector<ringloop::Complex> closed(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    closed[i] = result.ratio.real_value(i) * result.open_loop->real_value(i);
  const ringloop::FrequencyTrace closed_trace(grid, std::move(closed),
                                              ringloop::TraceKind::power);

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  ringloop::write_trace_csv((out_dir / "open_loop.csv").string(), *result.open_loop);
  ringloop::write_trace_csv((out_dir / "closed_loop.csv").string(), closed_trace);
  ringloop::write_trace_csv((out_dir / "ratio.csv").string(), result.ratio);

  Json resolved = config;
  resolved["plant"] = plant_to_json(plant);
  resolved["sweep"] = Json{{"grid_min", grid_min},
                           {"grid_max", grid_max},
                           {"grid_points", grid_points}};
  write_manifest(out_dir, "sweep", run_digest(config_bytes, overrides),
                 {"open_loop.csv", "closed_loop.csv", "ratio.csv"}, resolved);
  return kExitOk;
}

// --- synthesize ----------------------------------------------------------

int cmd_synthesize(const std::string& config_path, const std::string& out,
                   double band_flag, bool band_set) {
  const std::string config_bytes = ringloop::read_file(config_path);
  const Json config = Json::parse(config_bytes);

  const ringloop::PlantModel plant = ringloop::plant_from_json(config.at("plant"));
  const double eta_gamma = config.at("compensator").at("eta_gamma").get<double>();
  const double mu = config.at("loop").at("mu").get<double>();

  const Json synth_block = config.value("synthesize", Json::object());
  std::string target_name = synth_block.value("target", std::string("at_zero"));
  std::transform(target_name.begin(), target_name.end(), target_name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  ringloop::OptimizeTarget target;
  if (target_name == "at_zero")
    target = ringloop::OptimizeTarget::at_zero;
  else if (target_name == "band")
    target = ringloop::OptimizeTarget::band;
  else
    throw ringloop::ValidationError("synthesize target must be at_zero or band, got '" +
                                    target_name + "'");

  double band_edge = synth_block.value("band_edge", 0.0);
  OverrideRecorder overrides;
  if (band_set) {
    band_edge = band_flag;
    overrides.add("band", band_edge);
  }

  const ringloop::SynthesisResult result =
      ringloop::optimize_gain(plant, eta_gamma, mu, target, band_edge);

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  ringloop::write_file((out_dir / "synthesis.json").string(),
                       ringloop::to_pretty_json(ringloop::to_json(result)));

  Json resolved = config;
  resolved["plant"] = plant_to_json(plant);
  resolved["synthesize"] = Json{{"target", target_name}, {"band_edge", band_edge}};
  write_manifest(out_dir, "synthesize", run_digest(config_bytes, overrides),
                 {"synthesis.json"}, resolved);
  return kExitOk;
}

// --- fit -----------------------------------------------------------------

int cmd_fit(const std::string& config_path, const std::string& data_path,
            const std::string& out) {
  const std::string config_bytes = ringloop::read_file(config_path);
  const Json config = Json::parse(config_bytes);
  const std::string data_bytes = ringloop::read_file(data_path);

  const Json fit_block = config.at("fit");
  const double gamma_p = fit_block.contains("gamma_p")
                             ? fit_block.at("gamma_p").get<double>()
                             : config.at("plant").at("gamma_p").get<double>();

  const ringloop::ParametricDataset dataset(ringloop::read_parametric_csv(data_path),
                                            gamma_p);
  const ringloop::FitBounds bounds =
      ringloop::fit_bounds_from_json(fit_block.at("bounds"));
  ringloop::FitOptions options;
  options.equal_couplers = fit_block.value("equal_couplers", false);
  options.max_iterations = fit_block.value("max_iterations", 200);
  if (fit_block.contains("initial")) {
    const Json& initial = fit_block.at("initial");
    if (!initial.is_array() || initial.size() != 4)
      throw ringloop::ValidationError(
          "fit initial guess must be [eta_gamma, mu, k1, k4]");
    options.initial_guess = {initial.at(0).get<double>(), initial.at(1).get<double>(),
                             initial.at(2).get<double>(), initial.at(3).get<double>()};
  }

  const ringloop::FitResult fit = ringloop::fit_parameters(dataset, bounds, options);
  if (fit.rank_deficient) std::cerr << "warning: " << fit.note << "\n";

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  ringloop::write_file(
      (out_dir / "fit.json").string(),
      ringloop::to_pretty_json(ringloop::to_json(fit, gamma_p, options.equal_couplers)));

  OverrideRecorder overrides;
  write_manifest(out_dir, "fit", run_digest(config_bytes, overrides, data_bytes),
                 {"fit.json"}, config);
  return kExitOk;
}

// --- report --------------------------------------------------------------

int cmd_report(const std::string& config_path, const std::string& fit_path,
               const std::string& out) {
  const std::string config_bytes = ringloop::read_file(config_path);
  const Json config = Json::parse(config_bytes);
  const std::string fit_bytes = ringloop::read_file(fit_path);
  const Json fit_json = Json::parse(fit_bytes);

  ringloop::FitResult fit;
  fit.eta_gamma = fit_json.at("eta_gamma").get<double>();
  fit.mu = fit_json.at("mu").get<double>();
  fit.k1 = fit_json.at("k1").get<double>();
  fit.k4 = fit_json.at("k4").get<double>();

  const Json& m = config.at("measured");
  ringloop::MeasuredReference measured;
  measured.gamma_p = m.at("gamma_p").get<double>();
  measured.gamma_c = m.at("gamma_c").get<double>();
  measured.t1_sq = m.at("t1_sq").get<double>();
  measured.t4_sq = m.at("t4_sq").get<double>();
  measured.length_m = m.at("length_m").get<double>();
  measured.mu_bound = m.at("mu_bound").get<double>();

  const ringloop::ConsistencyReport report = ringloop::consistency_report(fit, measured);

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  ringloop::write_file((out_dir / "report.txt").string(), report.to_text());
  ringloop::write_file((out_dir / "report.json").string(),
                       ringloop::to_pretty_json(ringloop::to_json(report)));
  std::cout << report.to_text();

  OverrideRecorder overrides;
  write_manifest(out_dir, "report", run_digest(config_bytes, overrides, fit_bytes),
                 {"report.txt", "report.json"}, config);
  return kExitOk;  // a failed check is a finding, not a tool failure
}

// --- emulate ---------------------------------------------------------------

int cmd_emulate(const std::string& config_path, const std::string& out,
                const std::string& scenario_flag, std::uint64_t seed_flag,
                bool seed_set) {
  const std::string config_bytes = ringloop::read_file(config_path);
  const Json config = Json::parse(config_bytes);

  std::string scenario = scenario_flag;
  std::transform(scenario.begin(), scenario.end(), scenario.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (scenario != "SWEPT_SINE" && scenario != "PHASE_SCAN" && scenario != "LOCK" &&
      scenario != "PARAMETRIC")
    throw ringloop::ValidationError(
        "scenario must be SWEPT_SINE, PHASE_SCAN, LOCK, or PARAMETRIC; got '" +
        scenario_flag + "'");

  const ringloop::PlantModel plant = ringloop::plant_from_json(config.at("plant"));
  const ringloop::CompensatorModel comp =
      ringloop::compensator_from_json(config.at("compensator"), plant);
  const ringloop::LoopEnvironment env =
      ringloop::environment_from_json(config.at("loop"));

  const Json emu_block = config.value("emulate", Json::object());
  ringloop::EmulationConfig cfg = ringloop::emulation_config_from_json(emu_block);

  OverrideRecorder overrides;
  overrides.add("scenario", scenario);
  if (seed_set) {
    cfg.detector_noise_seed = seed_flag;
    overrides.add("seed", seed_flag);
  }

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  std::vector<std::string> outputs;

  if (scenario == "SWEPT_SINE") {
    const ringloop::SweptSineEmulation traces =
        ringloop::emulate_swept_sine(plant, comp, env, cfg);
    ringloop::write_trace_csv((out_dir / "open_loop.csv").string(), traces.open);
    ringloop::write_trace_csv((out_dir / "closed_loop.csv").string(), traces.closed);
    ringloop::write_trace_csv((out_dir / "ratio.csv").string(), traces.ratio);
    outputs = {"open_loop.csv", "closed_loop.csv", "ratio.csv"};
  } else if (scenario == "PHASE_SCAN") {
    ringloop::PhaseRamp ramp;
    ramp.phi_start = emu_block.value("phi_start", 0.0);
    ramp.phi_end = emu_block.value("phi_end", 2.0 * M_PI);
    const ringloop::PhaseScanEmulation scan =
        ringloop::emulate_phase_scan(plant, comp, env.mu(), cfg, ramp);
    std::vector<std::vector<double>> rows;
    rows.reserve(scan.time_frac.size());
    for (std::size_t i = 0; i < scan.time_frac.size(); ++i)
      rows.push_back({scan.time_frac[i], scan.phi[i], scan.power[i],
                      scan.open_loop_reference[i], scan.noise_floor_reference[i]});
    ringloop::write_csv(
        (out_dir / "phase_scan.csv").string(),
        {"time_frac", "phi_rad", "power", "open_loop_power", "noise_floor"}, rows);
    outputs = {"phase_scan.csv"};
  } else if (scenario == "LOCK") {
    const ringloop::LockScan scan = ringloop::lock_scan(plant, comp, env.mu(), cfg);
    std::vector<std::vector<double>> rows;
    rows.reserve(scan.phi.size());
    for (std::size_t i = 0; i < scan.phi.size(); ++i)
      rows.push_back({scan.phi[i], scan.power[i], scan.error[i]});
    ringloop::write_csv((out_dir / "lock.csv").string(),
                        {"phi_rad", "power", "error_signal"}, rows);
    outputs = {"lock.csv"};
  } else {  // PARAMETRIC
    const Json par_block = emu_block.value("parametric", Json::object());
    const double eta_k_min = par_block.value("eta_K_min", 0.06);
    const double eta_k_max = par_block.value("eta_K_max", 2.2);
    const std::size_t points = par_block.value("points", std::size_t{12});
    const std::vector<double> eta_k_grid =
        ringloop::linspace(eta_k_min, eta_k_max, points);
    const std::vector<ringloop::ParametricPoint> dataset =
        ringloop::emulate_parametric_dataset(plant, comp.eta_gamma(), env.mu(),
                                             eta_k_grid, cfg.detector_noise_rel,
                                             cfg.detector_noise_seed);
    ringloop::write_parametric_csv((out_dir / "parametric.csv").string(), dataset);
    outputs = {"parametric.csv"};
  }

  Json resolved = config;
  resolved["plant"] = plant_to_json(plant);
  resolved["emulate_resolved"] =
      Json{{"scenario", scenario},
           {"noise_floor", cfg.noise_floor},
           {"sideband_offset", cfg.sideband_offset},
           {"sideband_depth", cfg.sideband_depth},
           {"detector_noise_rel", cfg.detector_noise_rel},
           {"seed", cfg.detector_noise_seed},
           {"sample_count", cfg.sample_count}};
  write_manifest(out_dir, "emulate", run_digest(config_bytes, overrides), outputs,
                 resolved);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coherent-feedback ring-resonator loop toolkit"};
  app.set_version_flag("--version", ringloop::version);
  app.require_subcommand(1);

  std::string config_path, out = ".", data_path, fit_path, scenario;
  SweepGridArgs grid_flags;
  double band_edge = 0.0;
  std::uint64_t seed = 0;

  CLI::App* sweep = app.add_subcommand("sweep", "closed/open-loop response vs detuning");
  sweep->add_option("--config", config_path, "JSON config file")->required();
  sweep->add_option("--out", out, "output directory");
  CLI::Option* opt_min = sweep->add_option("--grid-min", grid_flags.grid_min,
                                           "lowest detuning (MHz)");
  CLI::Option* opt_max = sweep->add_option("--grid-max", grid_flags.grid_max,
                                           "highest detuning (MHz)");
  CLI::Option* opt_pts = sweep->add_option("--grid-points", grid_flags.grid_points,
                                           "number of grid points");

  CLI::App* synthesize =
      app.add_subcommand("synthesize", "pick the feedback gain and phase");
  synthesize->add_option("--config", config_path, "JSON config file")->required();
  synthesize->add_option("--out", out, "output directory");
  CLI::Option* opt_band =
      synthesize->add_option("--band", band_edge, "band edge for the band target (MHz)");

  CLI::App* fit = app.add_subcommand("fit", "estimate loop parameters from data");
  fit->add_option("--config", config_path, "JSON config file")->required();
  fit->add_option("--data", data_path, "parametric dataset CSV")->required();
  fit->add_option("--out", out, "output directory");

  CLI::App* report =
      app.add_subcommand("report", "check a fit against measured references");
  report->add_option("--config", config_path, "JSON config file")->required();
  report->add_option("--fit", fit_path, "fit result JSON")->required();
  report->add_option("--out", out, "output directory");

  CLI::App* emulate = app.add_subcommand("emulate", "generate synthetic traces");
  emulate->add_option("--config", config_path, "JSON config file")->required();
  emulate->add_option("--scenario", scenario,
                      "SWEPT_SINE, PHASE_SCAN, LOCK, or PARAMETRIC")
      ->required();
  emulate->add_option("--out", out, "output directory");
  CLI::Option* opt_seed =
      emulate->add_option("--seed", seed, "detector noise seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(sweep)) {
      grid_flags.min_set = opt_min->count() > 0;
      grid_flags.max_set = opt_max->count() > 0;
      grid_flags.points_set = opt_pts->count() > 0;
      return cmd_sweep(config_path, out, grid_flags);
    }
    if (app.got_subcommand(synthesize))
      return cmd_synthesize(config_path, out, band_edge, opt_band->count() > 0);
    if (app.got_subcommand(fit)) return cmd_fit(config_path, data_path, out);
    if (app.got_subcommand(report)) return cmd_report(config_path, fit_path, out);
    if (app.got_subcommand(emulate))
      return cmd_emulate(config_path, out, scenario, seed, opt_seed->count() > 0);
    std::cerr << "error: no subcommand selected\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {  // ValidationError and kin
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {  // domain, convergence, runtime failures
    std::cerr << "error: " << e.what() << "\n";
    return kExitComputation;
  }
}
