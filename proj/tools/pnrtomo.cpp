#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pnrtomo/pnrtomo.hpp"

namespace fs = std::filesystem;
using namespace pnrtomo;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_numerical = 2;
constexpr int exit_io = 3;

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> format_override;
  int threads = 1;
};

RunConfig load_config(const CommonOptions& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) cfg = RunConfig::load(opt.config_path);
  if (opt.seed_override) cfg.seed = *opt.seed_override;
  if (opt.format_override) cfg.format = *opt.format_override;
  cfg.validate();
  return cfg;
}

fs::path ensure_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create out-dir '" + dir + "': " + ec.message());
  return p;
}

void print_analysis_summary(const WignerGrid& grid,
                            const GridAnalysis& analysis) {
  std::printf("grid: %zu amplitudes x %zu phases, %llu shots/point, seed %llu\n",
              grid.amplitudes.size(), grid.phases.size(),
              (unsigned long long)grid.shots_per_point,
              (unsigned long long)grid.master_seed);
  if (analysis.fit)
    std::printf(
        "fit:  eta_hat = %.4f +- %.4f  (chi2 = %.1f over %zu samples)\n",
        analysis.fit->eta_hat, analysis.fit->eta_sigma,
        analysis.fit->chi_square, analysis.fit->n_samples);
  else
    std::printf("fit:  skipped (grid spans a single amplitude)\n");
  if (analysis.origin) {
    std::printf("origin: W(0,0) = %+.5f +- %.5f over %d repeats",
                analysis.origin->w, analysis.origin->sigma,
                analysis.origin->n_slots);
    if (analysis.origin->sigma > 0.0)
      std::printf("  (negativity %.1f sigma)",
                  -analysis.origin->w / analysis.origin->sigma);
    std::printf("\n");
    if (analysis.fit)
      std::printf("        model at eta_hat: %+.5f\n",
                  lossy_single_photon_wigner(0.0, analysis.fit->eta_hat));
  }
  if (analysis.g2)
    std::printf("g2(0) measured: %.4f +- %.4f\n", analysis.g2->value,
                analysis.g2->sigma);
  std::printf("warnings: max clipped mass %.2e, %d saturated points\n",
              analysis.max_clipped_mass, analysis.n_saturated_points);
}

int cmd_simulate(const CommonOptions& opt) {
  RunConfig cfg = load_config(opt);
  fs::path out_dir = ensure_out_dir(opt.out_dir);
  SimulationProducts sim = run_simulation(cfg, opt.threads);

  std::printf("source: P(herald) = %.6f, g2(0) model = %.4f\n",
              sim.herald.herald_probability, sim.g2_model);
  std::printf("loss budget: eta = %.4f\n", sim.eta_budget);
  std::printf(
      "coincidences: N_s = %llu, N_i = %llu, N_c = %llu, ratio = %.4f +- %.4f\n",
      (unsigned long long)sim.coincidences.n_signal,
      (unsigned long long)sim.coincidences.n_idler,
      (unsigned long long)sim.coincidences.n_coincidence, sim.heralding.value,
      sim.heralding.sigma);
  print_analysis_summary(sim.grid, sim.analysis);

  const std::string counts_name =
      cfg.format == "jsonl" ? "counts.jsonl" : "counts.csv";
  write_counts_dataset(sim.grid, (out_dir / counts_name).string(), cfg.format);
  write_json_file(simulation_report_json(sim),
                  (out_dir / "report.json").string());
  write_json_file(OrderedJson(cfg.to_json()),
                  (out_dir / "config_used.json").string());
  write_analysis_files(sim.grid, sim.analysis, out_dir);
  std::printf("wrote %s, report.json, wigner_grid.csv, radial_profile.csv, "
              "residuals.csv in %s\n",
              counts_name.c_str(), out_dir.string().c_str());
  return exit_ok;
}

int cmd_reconstruct(const std::string& dataset_path,
                    const CommonOptions& opt) {
  fs::path out_dir = ensure_out_dir(opt.out_dir);
  WignerGrid grid = read_counts_dataset(dataset_path);
  GridAnalysis analysis = analyze_grid(grid);
  print_analysis_summary(grid, analysis);
  write_json_file(analysis_report_json(grid, analysis),
                  (out_dir / "report.json").string());
  write_analysis_files(grid, analysis, out_dir);
  std::printf("wrote report.json, wigner_grid.csv, radial_profile.csv, "
              "residuals.csv in %s\n",
              out_dir.string().c_str());
  return exit_ok;
}

int cmd_calibrate(const std::string& dataset_path, bool simulate,
                  const CommonOptions& opt) {
  RunConfig cfg = load_config(opt);
  fs::path out_dir = ensure_out_dir(opt.out_dir);
  WignerGrid grid;
  if (simulate) {
    grid = simulate_calibration_grid(cfg);
    const std::string counts_name = cfg.format == "jsonl"
                                        ? "calibration_counts.jsonl"
                                        : "calibration_counts.csv";
    write_counts_dataset(grid, (out_dir / counts_name).string(), cfg.format);
  } else {
    grid = read_counts_dataset(dataset_path);
  }
  std::vector<CalibrationRow> rows = calibrate_grid(grid);
  std::printf("%-14s %-12s %-10s %-10s %s\n", "alpha_nominal", "alpha_hat",
              "sigma", "n_two", "flag");
  for (const CalibrationRow& r : rows) {
    if (r.has_estimate)
      std::printf("%-14.6f %-12.6f %-10.2e %-10llu %s\n", r.alpha_nominal,
                  r.estimate.value, r.estimate.sigma,
                  (unsigned long long)r.estimate.n_two,
                  r.flagged ? r.note.c_str() : "");
    else
      std::printf("%-14.6f %-12s %-10s %-10s %s\n", r.alpha_nominal, "-", "-",
                  "-", r.note.c_str());
  }
  write_calibration_csv(rows, (out_dir / "calibration.csv").string());
  std::printf("wrote calibration.csv in %s\n", out_dir.string().c_str());
  return exit_ok;
}

int cmd_report(const std::string& report_path) {
  fs::path p(report_path);
  if (fs::is_directory(p)) p /= "report.json";
  std::ifstream in(p);
  if (!in) throw IoError("cannot open report: " + p.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(p.string() + ": invalid JSON: " + e.what());
  }
  if (!j.contains("schema") ||
      j.at("schema").get<std::string>() != report_schema_name)
    throw SchemaError(p.string() + ": not a run report");
  if (j.at("version").get<int>() > report_schema_version)
    throw SchemaError(p.string() + ": report version newer than supported");

  if (j.contains("source") && !j.at("source").is_null()) {
    const auto& s = j.at("source");
    std::printf("source: P(herald) = %.6f, g2(0) model = %.4f, eta budget = %.4f\n",
                s.at("herald_probability").get<double>(),
                s.at("g2_model").get<double>(),
                s.at("eta_budget").get<double>());
  }
  if (j.contains("coincidences") && !j.at("coincidences").is_null()) {
    const auto& c = j.at("coincidences");
    std::printf("coincidences: N_s = %llu, N_i = %llu, N_c = %llu, "
                "ratio = %.4f +- %.4f\n",
                (unsigned long long)c.at("n_signal").get<std::uint64_t>(),
                (unsigned long long)c.at("n_idler").get<std::uint64_t>(),
                (unsigned long long)c.at("n_coincidence").get<std::uint64_t>(),
                c.at("heralding_ratio").at("value").get<double>(),
                c.at("heralding_ratio").at("sigma").get<double>());
  }
  if (j.contains("fit") && !j.at("fit").is_null()) {
    const auto& f = j.at("fit");
    std::printf("fit: eta_hat = %.4f +- %.4f (chi2 = %.1f over %llu samples)\n",
                f.at("eta_hat").get<double>(), f.at("eta_sigma").get<double>(),
                f.at("chi_square").get<double>(),
                (unsigned long long)f.at("n_samples").get<std::uint64_t>());
  }
  if (j.contains("origin") && !j.at("origin").is_null()) {
    const auto& o = j.at("origin");
    std::printf("origin: W(0,0) = %+.5f +- %.5f", o.at("w").get<double>(),
                o.at("sigma").get<double>());
    if (o.contains("model_at_eta_hat"))
      std::printf(" (model at eta_hat %+.5f)",
                  o.at("model_at_eta_hat").get<double>());
    std::printf("\n");
    if (o.contains("negativity_significance"))
      std::printf("        negativity significance: %.1f sigma\n",
                  o.at("negativity_significance").get<double>());
  }
  if (j.contains("g2_zero") && !j.at("g2_zero").is_null()) {
    const auto& g = j.at("g2_zero");
    std::printf("g2(0) measured: %.4f +- %.4f\n", g.at("value").get<double>(),
                g.at("sigma").get<double>());
  }
  const auto& w = j.at("warnings");
  std::printf("warnings: max clipped mass %.2e, %d saturated points\n",
              w.at("max_clipped_mass").get<double>(),
              w.at("n_saturated_points").get<int>());
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-counting tomography of a heralded single photon"};
  app.require_subcommand(1);

  CommonOptions sim_opt;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run the full pipeline and write datasets plus a report");
  simulate->add_option("--config", sim_opt.config_path,
                       "Config file (JSON); defaults reproduce the reference run");
  simulate->add_option("--seed", sim_opt.seed_override, "Master seed override");
  simulate->add_option("--out-dir", sim_opt.out_dir, "Output directory");
  simulate->add_option("--threads", sim_opt.threads, "Worker threads")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--format", sim_opt.format_override, "Dataset format")
      ->check(CLI::IsMember({"csv", "jsonl"}));

  CommonOptions rec_opt;
  std::string rec_dataset;
  CLI::App* reconstruct = app.add_subcommand(
      "reconstruct", "Recompute Wigner samples and the fit from a counts dataset");
  reconstruct->add_option("dataset", rec_dataset, "Counts dataset path")
      ->required();
  reconstruct->add_option("--out-dir", rec_opt.out_dir, "Output directory");

  CommonOptions cal_opt;
  std::string cal_dataset;
  bool cal_simulate = false;
  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "Estimate displacement amplitudes from coherent-ladder counts");
  calibrate->add_option("dataset", cal_dataset,
                        "Counts dataset of displacement-only runs");
  calibrate->add_flag("--simulate", cal_simulate,
                      "Generate the ladder dataset instead of reading one");
  calibrate->add_option("--config", cal_opt.config_path, "Config file (JSON)");
  calibrate->add_option("--seed", cal_opt.seed_override, "Master seed override");
  calibrate->add_option("--out-dir", cal_opt.out_dir, "Output directory");
  calibrate->add_option("--format", cal_opt.format_override, "Dataset format")
      ->check(CLI::IsMember({"csv", "jsonl"}));

  std::string report_path;
  CLI::App* report = app.add_subcommand("report", "Print a saved run report");
  report->add_option("path", report_path, "report.json or its directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim_opt);
    if (reconstruct->parsed()) return cmd_reconstruct(rec_dataset, rec_opt);
    if (calibrate->parsed()) {
      if (!cal_simulate && cal_dataset.empty()) {
        std::fprintf(stderr,
                     "calibrate: provide a dataset path or --simulate\n");
        return exit_config;
      }
      return cmd_calibrate(cal_dataset, cal_simulate, cal_opt);
    }
    if (report->parsed()) return cmd_report(report_path);
    std::fprintf(stderr, "no subcommand\n");
    return exit_config;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_config;
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return exit_config;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return exit_config;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return exit_io;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return exit_io;
  } catch (const Error& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return exit_numerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_numerical;
  }
}
