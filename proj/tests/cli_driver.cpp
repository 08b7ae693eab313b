// End-to-end exercise of the command-line tool: every subcommand runs as a
// child process against real config files, and the outputs are parsed back
// and checked.  Usage: cli_driver <path-to-cli-binary>.

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ringloop/cavity.hpp"
#include "ringloop/io.hpp"

namespace fs = std::filesystem;
using ringloop::Json;

namespace {

int failures = 0;
std::string cli;
fs::path root;

void check(bool ok, const std::string& label) {
  std::cout << (ok ? "ok   " : "FAIL ") << label << "\n";
  if (!ok) ++failures;
}

// Runs the tool with the given arguments, capturing both streams.
int run_cli(const std::string& args, const std::string& tag) {
  const fs::path out_log = root / (tag + ".out");
  const fs::path err_log = root / (tag + ".err");
  const std::string cmd =
      cli + " " + args + " > " + out_log.string() + " 2> " + err_log.string();
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  return fs::exists(path) ? ringloop::read_file(path.string()) : std::string();
}

fs::path make_dir(const std::string& name) {
  const fs::path dir = root / name;
  fs::create_directories(dir);
  return dir;
}

std::string benchmark_config() {
  Json config = {
      {"plant", {{"gamma_p", 9.3}, {"k1", 0.3387}, {"k4", 0.3387}}},
      {"compensator", {{"eta_K", 0.92}, {"eta_gamma", 9.3 / 14.0}}},
      {"loop", {{"mu", 0.84}, {"phi", 0.0}}},
      {"sweep", {{"grid_min", -9.3}, {"grid_max", 9.3}, {"grid_points", 201}}}};
  return ringloop::to_pretty_json(config);
}

std::size_t nearest_row(const ringloop::CsvTable& table, double x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (std::abs(table.rows[i][0] - x) < std::abs(table.rows[best][0] - x)) best = i;
  return best;
}

void test_sweep() {
  const fs::path dir = make_dir("sweep");
  const fs::path config = dir / "config.json";
  ringloop::write_file(config.string(), benchmark_config());
  const fs::path out = dir / "out";

  const int rc = run_cli("sweep --config " + config.string() + " --out " + out.string(),
                         "sweep");
  check(rc == 0, "sweep exits cleanly");
  check(fs::exists(out / "open_loop.csv") && fs::exists(out / "closed_loop.csv") &&
            fs::exists(out / "ratio.csv"),
        "sweep writes all three traces");

  const ringloop::CsvTable ratio = ringloop::read_csv((out / "ratio.csv").string());
  const ringloop::CsvTable open = ringloop::read_csv((out / "open_loop.csv").string());
  const ringloop::CsvTable closed =
      ringloop::read_csv((out / "closed_loop.csv").string());
  check(ratio.rows.size() == 201, "sweep honors the configured grid size");

  const std::size_t center = nearest_row(ratio, 0.0);
  check(std::abs(ratio.rows[center][1] - 0.18291454439723015) < 1e-6,
        "on-resonance ratio matches the loop algebra");

  double worst = 0.0;
  double lo = 2.0, hi = 0.0;
  for (std::size_t i = 0; i < ratio.rows.size(); ++i) {
    worst = std::max(worst, std::abs(closed.rows[i][1] -
                                     ratio.rows[i][1] * open.rows[i][1]));
    lo = std::min(lo, ratio.rows[i][1]);
    hi = std::max(hi, ratio.rows[i][1]);
  }
  check(worst < 1e-12, "closed trace is the ratio times the open trace");
  check(lo > 0.15 && hi < 0.19, "rejection is broadband across the linewidth");

  const Json manifest = Json::parse(slurp(out / "manifest.json"));
  check(manifest.at("command") == "sweep" && manifest.at("outputs").size() == 3,
        "sweep manifest lists the command and outputs");
  check(manifest.at("config_digest").get<std::string>().size() == 16,
        "sweep manifest carries a 16-digit digest");
  check(manifest.at("config").at("sweep").at("grid_points") == 201,
        "sweep manifest records the resolved grid");

  // Same inputs, same digest; an explicit override changes it.
  const fs::path out2 = dir / "out_repeat";
  run_cli("sweep --config " + config.string() + " --out " + out2.string(),
          "sweep_repeat");
  const Json repeat = Json::parse(slurp(out2 / "manifest.json"));
  check(repeat.at("config_digest") == manifest.at("config_digest"),
        "digest is stable across reruns");

  const fs::path out3 = dir / "out_override";
  run_cli("sweep --config " + config.string() + " --out " + out3.string() +
              " --grid-points 51",
          "sweep_override");
  const Json override_manifest = Json::parse(slurp(out3 / "manifest.json"));
  check(override_manifest.at("config_digest") != manifest.at("config_digest"),
        "flag override changes the digest");
  check(override_manifest.at("config").at("sweep").at("grid_points") == 51,
        "flag override lands in the resolved config");
}

void test_sweep_zero_gain() {
  const fs::path dir = make_dir("sweep_zero_gain");
  Json config = Json::parse(benchmark_config());
  config["compensator"]["eta_K"] = 0.0;
  const fs::path path = dir / "config.json";
  ringloop::write_file(path.string(), ringloop::to_pretty_json(config));
  const fs::path out = dir / "out";

  const int rc =
      run_cli("sweep --config " + path.string() + " --out " + out.string(), "zero_gain");
  check(rc == 0, "zero-gain sweep exits cleanly");
  const ringloop::CsvTable ratio = ringloop::read_csv((out / "ratio.csv").string());
  bool all_unity = true;
  for (const auto& row : ratio.rows) all_unity = all_unity && row[1] == 1.0;
  check(all_unity, "zero gain leaves the power ratio at exactly one");
}

void test_error_paths() {
  const fs::path dir = make_dir("errors");

  const fs::path missing_key = dir / "missing_key.json";
  ringloop::write_file(missing_key.string(),
                       R"({"plant": {"k1": 0.3, "k4": 0.3},
                           "compensator": {"eta_K": 1.0, "eta_gamma": 0.0},
                           "loop": {"mu": 1.0}})");
  int rc = run_cli("sweep --config " + missing_key.string() + " --out " +
                       (dir / "out1").string(),
                   "missing_key");
  check(rc == 2, "missing plant key exits with the usage code");
  check(slurp(root / "missing_key.err").find("gamma_p") != std::string::npos,
        "missing key is named on stderr");

  const fs::path malformed = dir / "malformed.json";
  ringloop::write_file(malformed.string(), "{ nope");
  rc = run_cli("sweep --config " + malformed.string() + " --out " +
                   (dir / "out2").string(),
               "malformed");
  check(rc == 2, "malformed JSON exits with the usage code");

  rc = run_cli("sweep", "no_config");
  check(rc == 2, "missing required flag exits with the usage code");

  rc = run_cli("nonsense", "bad_subcommand");
  check(rc == 2, "unknown subcommand exits with the usage code");

  // Positive feedback at exactly unit loop gain: the loop algebra denominator
  // vanishes at resonance, which is a computation failure, not a usage error.
  const fs::path singular = dir / "singular.json";
  Json config = {{"plant", {{"gamma_p", 9.0}, {"k1", 2.0}, {"k4", 2.0}}},
                 {"compensator", {{"eta_K", 81.0 / 256.0}, {"eta_gamma", 0.0}}},
                 {"loop", {{"mu", 1.0}, {"phi", M_PI}}},
                 {"sweep", {{"grid_min", -1.0}, {"grid_max", 1.0}, {"grid_points", 9}}}};
  ringloop::write_file(singular.string(), ringloop::to_pretty_json(config));
  rc = run_cli("sweep --config " + singular.string() + " --out " +
                   (dir / "out3").string(),
               "singular");
  check(rc == 3, "singular loop exits with the computation code");
  check(slurp(root / "singular.err").find("singular feedback loop") != std::string::npos,
        "singular loop failure is described on stderr");

  rc = run_cli("--version", "version");
  check(rc == 0, "--version exits cleanly");
}

void test_synthesize() {
  const fs::path dir = make_dir("synthesize");

  Json ideal = {{"plant", {{"gamma_p", 9.3}, {"k1", 0.3387}, {"k4", 0.3387}}},
                {"compensator", {{"eta_K", 1.0}, {"eta_gamma", 0.0}}},
                {"loop", {{"mu", 1.0}}}};
  const fs::path ideal_path = dir / "ideal.json";
  ringloop::write_file(ideal_path.string(), ringloop::to_pretty_json(ideal));
  const fs::path ideal_out = dir / "ideal_out";
  int rc = run_cli("synthesize --config " + ideal_path.string() + " --out " +
                       ideal_out.string(),
                   "synth_ideal");
  check(rc == 0, "ideal synthesis exits cleanly");
  const Json ideal_result = Json::parse(slurp(ideal_out / "synthesis.json"));
  check(ideal_result.at("rejection_db").is_string() &&
            ideal_result.at("rejection_db") == "inf",
        "perfect cancellation reports infinite rejection");
  check(std::abs(ideal_result.at("eta_K_opt").get<double>() - 1.0) < 1e-4,
        "ideal optimum sits at unit gain efficiency");

  Json bench = Json::parse(benchmark_config());
  const fs::path bench_path = dir / "bench.json";
  ringloop::write_file(bench_path.string(), ringloop::to_pretty_json(bench));
  const fs::path bench_out = dir / "bench_out";
  rc = run_cli("synthesize --config " + bench_path.string() + " --out " +
                   bench_out.string(),
               "synth_bench");
  check(rc == 0, "benchmark synthesis exits cleanly");
  const Json bench_result = Json::parse(slurp(bench_out / "synthesis.json"));
  const double rejection = bench_result.at("rejection_db").get<double>();
  check(rejection > 6.9 && rejection < 7.9,
        "benchmark rejection lands in the expected band");
  const double phi_opt = bench_result.at("phi_opt").get<double>();  // in [0, 2 pi)
  check(std::min(phi_opt, 2.0 * M_PI - phi_opt) < 1e-5,
        "negative feedback phase is the optimum");

  // The band target reports the in-band worst case instead of the
  // on-resonance value.
  bench["synthesize"] = Json{{"target", "band"}, {"band_edge", 9.3}};
  const fs::path band_path = dir / "band.json";
  ringloop::write_file(band_path.string(), ringloop::to_pretty_json(bench));
  const fs::path band_out = dir / "band_out";
  rc = run_cli("synthesize --config " + band_path.string() + " --out " +
                   band_out.string(),
               "synth_band");
  check(rc == 0, "band synthesis exits cleanly");
  const Json band_result = Json::parse(slurp(band_out / "synthesis.json"));
  check(band_result.at("band_metric").get<double>() >=
            band_result.at("ratio_at_zero").get<double>() - 1e-12,
        "band metric dominates the on-resonance ratio");
}

void test_fit_chain() {
  const fs::path dir = make_dir("fit_chain");

  // Generate a noiseless parametric dataset, fit it, and check the fit
  // against consistent measured references: the full workflow.
  const double k_witness = 0.33839327370474764;  // coupler rate at t^2 = 0.002
  const double t_sq = 1.2 / k_witness * 0.002;   // witness transmission for k = 1.2
  Json config = {
      {"plant", {{"gamma_p", 9.3}, {"k1", 1.2}, {"k4", 1.2}}},
      {"compensator", {{"eta_K", 1.0}, {"eta_gamma", -2.0}}},
      {"loop", {{"mu", 0.84}}},
      {"fit",
       {{"gamma_p", 9.3},
        {"equal_couplers", true},
        {"bounds",
         {{"eta_gamma", {-5.0, 2.0}},
          {"mu", {0.4, 0.99}},
          {"k1", {0.3, 2.0}},
          {"k4", {0.3, 2.0}}}}}},
      {"measured",
       {{"gamma_p", 9.3},
        {"gamma_c", 2.5},
        {"t1_sq", t_sq},
        {"t4_sq", t_sq},
        {"length_m", 0.141},
        {"mu_bound", 0.85}}}};
  const fs::path config_path = dir / "config.json";
  ringloop::write_file(config_path.string(), ringloop::to_pretty_json(config));

  const fs::path emu_out = dir / "emulated";
  int rc = run_cli("emulate --config " + config_path.string() +
                       " --scenario parametric --out " + emu_out.string(),
                   "emulate_parametric");
  check(rc == 0, "parametric emulation exits cleanly");
  const fs::path data = emu_out / "parametric.csv";
  const auto points = ringloop::read_parametric_csv(data.string());
  check(points.size() == 12, "parametric emulation writes twelve gain settings");

  const fs::path fit_out = dir / "fit";
  rc = run_cli("fit --config " + config_path.string() + " --data " + data.string() +
                   " --out " + fit_out.string(),
               "fit");
  check(rc == 0, "fit exits cleanly");
  const Json fit = Json::parse(slurp(fit_out / "fit.json"));
  check(std::abs(fit.at("eta_gamma").get<double>() + 2.0) < 0.02,
        "fit recovers the pole offset");
  check(std::abs(fit.at("mu").get<double>() - 0.84) < 0.01,
        "fit recovers the mode matching");
  check(std::abs(fit.at("k1").get<double>() - 1.2) < 0.02,
        "fit recovers the coupler rate");
  check(!fit.at("rank_deficient").get<bool>(),
        "constrained noiseless fit is well conditioned");

  const fs::path report_out = dir / "report";
  rc = run_cli("report --config " + config_path.string() + " --fit " +
                   (fit_out / "fit.json").string() + " --out " + report_out.string(),
               "report");
  check(rc == 0, "report exits cleanly");
  const std::string text = slurp(report_out / "report.txt");
  check(text.find("RESULT: all checks passed") != std::string::npos,
        "consistent fit passes every report check");
  const Json report = Json::parse(slurp(report_out / "report.json"));
  check(report.at("all_pass").get<bool>(), "report JSON agrees with the text form");

  // A reference bound below the fitted mode matching must fail the report,
  // while the tool still exits cleanly: a finding, not a failure.
  config["measured"]["mu_bound"] = 0.5;
  const fs::path strict_path = dir / "strict.json";
  ringloop::write_file(strict_path.string(), ringloop::to_pretty_json(config));
  const fs::path strict_out = dir / "report_strict";
  rc = run_cli("report --config " + strict_path.string() + " --fit " +
                   (fit_out / "fit.json").string() + " --out " + strict_out.string(),
               "report_strict");
  check(rc == 0, "failed report checks still exit cleanly");
  check(slurp(strict_out / "report.txt").find("FAIL mode_matching_bound") !=
            std::string::npos,
        "violated bound is flagged in the report text");
}

void test_emulate_scenarios() {
  const fs::path dir = make_dir("emulate");
  Json config = Json::parse(benchmark_config());
  config["emulate"] = Json{{"noise_floor", 0.02},  {"detector_noise_rel", 0.01},
                           {"seed", 11},           {"sample_count", 301},
                           {"grid_min", -20.0},    {"grid_max", 20.0}};
  const fs::path path = dir / "config.json";
  ringloop::write_file(path.string(), ringloop::to_pretty_json(config));

  const fs::path out_a = dir / "swept_a";
  const fs::path out_b = dir / "swept_b";
  const fs::path out_c = dir / "swept_c";
  int rc = run_cli("emulate --config " + path.string() + " --scenario SWEPT_SINE" +
                       " --out " + out_a.string(),
                   "swept_a");
  check(rc == 0, "swept emulation exits cleanly");
  run_cli("emulate --config " + path.string() + " --scenario SWEPT_SINE --out " +
              out_b.string(),
          "swept_b");
  run_cli("emulate --config " + path.string() + " --scenario SWEPT_SINE --out " +
              out_c.string() + " --seed 999",
          "swept_c");
  check(slurp(out_a / "ratio.csv") == slurp(out_b / "ratio.csv"),
        "same seed reproduces the swept trace byte for byte");
  check(slurp(out_a / "ratio.csv") != slurp(out_c / "ratio.csv"),
        "seed override changes the swept trace");
  const Json manifest_a = Json::parse(slurp(out_a / "manifest.json"));
  const Json manifest_c = Json::parse(slurp(out_c / "manifest.json"));
  check(manifest_a.at("config_digest") != manifest_c.at("config_digest"),
        "seed override changes the digest");

  const fs::path scan_out = dir / "phase_scan";
  rc = run_cli("emulate --config " + path.string() + " --scenario PHASE_SCAN --out " +
                   scan_out.string(),
               "phase_scan");
  check(rc == 0, "phase-scan emulation exits cleanly");
  const ringloop::CsvTable scan =
      ringloop::read_csv((scan_out / "phase_scan.csv").string());
  check(scan.header == std::vector<std::string>{"time_frac", "phi_rad", "power",
                                                "open_loop_power", "noise_floor"},
        "phase-scan CSV has the documented columns");
  check(scan.rows.size() == 301 && scan.rows.back()[1] == 2.0 * M_PI,
        "phase scan covers the full ramp");
  bool references_flat = true;
  for (const auto& row : scan.rows)
    references_flat = references_flat && row[3] == scan.rows[0][3] &&
                      row[4] == scan.rows[0][4];
  check(references_flat, "reference columns stay flat under noise");

  const fs::path lock_out = dir / "lock";
  rc = run_cli("emulate --config " + path.string() + " --scenario LOCK --out " +
                   lock_out.string(),
               "lock");
  check(rc == 0, "lock emulation exits cleanly");
  const ringloop::CsvTable lock = ringloop::read_csv((lock_out / "lock.csv").string());
  check(lock.header == std::vector<std::string>{"phi_rad", "power", "error_signal"},
        "lock CSV has the documented columns");
  // With an odd sample count the error signal is exactly zero on the center
  // sample, so count sign transitions over the nonzero samples.
  std::size_t argmin = 0;
  std::vector<std::size_t> flips;
  int last_sign = 0;
  for (std::size_t i = 0; i < lock.rows.size(); ++i) {
    if (lock.rows[i][1] < lock.rows[argmin][1]) argmin = i;
    const double e = lock.rows[i][2];
    const int sign = (e > 0.0) - (e < 0.0);
    if (sign != 0) {
      if (last_sign != 0 && sign != last_sign) flips.push_back(i);
      last_sign = sign;
    }
  }
  check(flips.size() == 1, "lock error crosses zero once in the capture range");
  check(!flips.empty() &&
            std::abs(static_cast<long>(flips[0]) - static_cast<long>(argmin)) <= 1,
        "lock zero crossing sits at the power minimum");

  rc = run_cli("emulate --config " + path.string() + " --scenario NONSENSE --out " +
                   (dir / "bad").string(),
               "bad_scenario");
  check(rc == 2, "unknown scenario exits with the usage code");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_driver <path-to-cli-binary>\n";
    return 2;
  }
  cli = argv[1];
  root = fs::path("/tmp/ringloop_cli_test");
  fs::remove_all(root);
  fs::create_directories(root);

  test_sweep();
  test_sweep_zero_gain();
  test_error_paths();
  test_synthesize();
  test_fit_chain();
  test_emulate_scenarios();

  if (failures != 0) {
    std::cout << failures << " check(s) failed\n";
    return 1;
  }
  std::cout << "all checks passed\n";
  return 0;
}
