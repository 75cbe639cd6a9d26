#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnrtomo/config.hpp"
#include "pnrtomo/dataset.hpp"
#include "pnrtomo/detector.hpp"
#include "pnrtomo/errors.hpp"
#include "pnrtomo/tomography.hpp"

namespace pnrtomo {

inline constexpr const char* report_schema_name = "pnrtomo.report";
inline constexpr int report_schema_version = 1;

struct OriginEstimate {
  double w = 0.0;      // mean over the zero-amplitude slots
  double sigma = 0.0;  // sample standard deviation over those slots
  int n_slots = 0;
};

struct G2Estimate {
  double value = 0.0;
  double sigma = 0.0;  // spread over the zero-amplitude slots
  int n_slots = 0;
};

// Everything derivable from a counts grid alone; shared between the
// simulation path and offline reconstruction so both report identically.
struct GridAnalysis {
  RadialProfile profile;
  std::optional<FitResult> fit;  // absent when the grid cannot constrain it
  std::optional<OriginEstimate> origin;
  std::optional<G2Estimate> g2;
  double max_clipped_mass = 0.0;
  int n_saturated_points = 0;
};

namespace detail {

inline double g2_from_histogram(const CountHistogram& hist) {
  std::vector<double> f = hist.frequencies();
  double mean = 0.0, pairs = 0.0;
  for (std::size_t n = 0; n < f.size(); ++n) {
    mean += double(n) * f[n];
    pairs += double(n) * double(n - 1) * f[n];
  }
  if (mean <= 0.0) throw DegenerateInput("g2_from_histogram: zero mean");
  return pairs / (mean * mean);
}

}  // namespace detail

inline GridAnalysis analyze_grid(const WignerGrid& grid) {
  GridAnalysis out;
  out.profile = phase_average(grid);
  try {
    out.fit = fit_eta(grid_samples(grid));
  } catch (const IllConditionedFit&) {
    // Single-amplitude datasets still report the origin and g2.
  }
  for (const GridPoint& p : grid.points) {
    out.max_clipped_mass = std::max(out.max_clipped_mass, p.clipped_mass);
    if (p.saturation_warning) ++out.n_saturated_points;
  }

  // The zero-amplitude row holds repeated identical datasets; its spread is
  // the empirical error bar on W(0,0) and on the measured g2.
  for (std::size_t i = 0; i < grid.amplitudes.size(); ++i) {
    if (grid.amplitudes[i] != 0.0) continue;
    const std::size_t n_phase = grid.phases.size();
    OriginEstimate origin;
    origin.n_slots = int(n_phase);
    origin.w = out.profile.mean_w[i];
    origin.sigma = out.profile.spread[i];
    out.origin = origin;
    std::vector<double> g2s;
    g2s.reserve(n_phase);
    bool g2_ok = true;
    for (std::size_t j = 0; j < n_phase; ++j) {
      try {
        g2s.push_back(
            detail::g2_from_histogram(grid.at(int(i), int(j)).histogram));
      } catch (const DegenerateInput&) {
        g2_ok = false;
        break;
      }
    }
    if (g2_ok && !g2s.empty()) {
      G2Estimate g2;
      g2.n_slots = int(g2s.size());
      double mean = 0.0;
      for (double v : g2s) mean += v;
      mean /= double(g2s.size());
      double ss = 0.0;
      for (double v : g2s) ss += (v - mean) * (v - mean);
      g2.value = mean;
      g2.sigma = g2s.size() > 1 ? std::sqrt(ss / double(g2s.size() - 1)) : 0.0;
      out.g2 = g2;
    }
    break;
  }
  return out;
}

inline OrderedJson analysis_report_json(const WignerGrid& grid,
                                        const GridAnalysis& analysis) {
  OrderedJson j;
  j["schema"] = report_schema_name;
  j["version"] = report_schema_version;
  j["grid_summary"] = {{"n_amplitudes", grid.amplitudes.size()},
                       {"n_phases", grid.phases.size()},
                       {"shots_per_point", grid.shots_per_point},
                       {"master_seed", grid.master_seed},
                       {"amplitude_scale", grid.amplitude_scale}};
  if (analysis.fit) {
    j["fit"] = {{"eta_hat", analysis.fit->eta_hat},
                {"eta_sigma", analysis.fit->eta_sigma},
                {"chi_square", analysis.fit->chi_square},
                {"n_samples", analysis.fit->n_samples}};
  } else {
    j["fit"] = nullptr;
  }
  if (analysis.origin) {
    const OriginEstimate& o = *analysis.origin;
    OrderedJson oj = {{"w", o.w}, {"sigma", o.sigma}, {"n_slots", o.n_slots}};
    if (analysis.fit)
      oj["model_at_eta_hat"] =
          lossy_single_photon_wigner(0.0, analysis.fit->eta_hat);
    if (o.sigma > 0.0) oj["negativity_significance"] = -o.w / o.sigma;
    j["origin"] = oj;
  } else {
    j["origin"] = nullptr;
  }
  if (analysis.g2) {
    j["g2_zero"] = {{"value", analysis.g2->value},
                    {"sigma", analysis.g2->sigma},
                    {"n_slots", analysis.g2->n_slots}};
  } else {
    j["g2_zero"] = nullptr;
  }
  j["warnings"] = {{"max_clipped_mass", analysis.max_clipped_mass},
                   {"n_saturated_points", analysis.n_saturated_points}};
  return j;
}

struct SimulationProducts {
  HeraldedState herald;
  double eta_budget = 0.0;
  double g2_model = 0.0;
  CoincidenceCounts coincidences;
  RatioEstimate heralding;
  WignerGrid grid;
  GridAnalysis analysis;
};

// End-to-end simulation: heralded source, coincidence counting at the
// configured shot budget, and the full raster scan of the lossy state.
inline SimulationProducts run_simulation(const RunConfig& cfg,
                                         int threads = 1) {
  cfg.validate();
  SimulationProducts out{
      .herald = heralded_signal_state(cfg.squeezing(), cfg.herald_config()),
      .eta_budget = cfg.loss.product()};
  out.g2_model = g2_zero(out.herald.state);
  out.coincidences =
      coincidence_counts(cfg.squeezing(), cfg.herald_config(), cfg.loss,
                         cfg.counting_shots, derive_seed(cfg.seed, 0xC0, 1));
  out.heralding = heralding_ratio(out.coincidences.n_coincidence,
                                  out.coincidences.n_idler);
  out.grid = run_scan(out.herald.state, cfg.scan_plan(), cfg.detector,
                      cfg.loss, threads);
  out.analysis = analyze_grid(out.grid);
  return out;
}

inline OrderedJson simulation_report_json(const SimulationProducts& sim) {
  OrderedJson j = analysis_report_json(sim.grid, sim.analysis);
  j["source"] = {{"herald_probability", sim.herald.herald_probability},
                 {"g2_model", sim.g2_model},
                 {"eta_budget", sim.eta_budget}};
  j["coincidences"] = {
      {"shots", sim.coincidences.shots},
      {"n_signal", sim.coincidences.n_signal},
      {"n_idler", sim.coincidences.n_idler},
      {"n_coincidence", sim.coincidences.n_coincidence},
      {"heralding_ratio",
       {{"value", sim.heralding.value}, {"sigma", sim.heralding.sigma}}}};
  return j;
}

// Coherent-ladder calibration run: each nominal amplitude becomes one
// grid row sampled at phase zero. The recorded amplitudes are the nominal
// post-loss values the experimenter dialed in.
inline WignerGrid simulate_calibration_grid(const RunConfig& cfg) {
  const std::vector<double> ladder = cfg.calibration_ladder();
  ScanPlan plan;
  plan.amplitudes = ladder;
  plan.phases = {0.0};
  plan.shots_per_point = cfg.calibration_shots;
  plan.seed = derive_seed(cfg.seed, 0xCA, 0x11B);

  WignerGrid grid;
  grid.amplitudes = ladder;
  grid.phases = plan.phases;
  grid.shots_per_point = plan.shots_per_point;
  grid.master_seed = plan.seed;
  grid.amplitude_scale = 1.0;
  grid.points.resize(ladder.size());
  const int dim = 21;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const FockDensityMatrix state =
        FockDensityMatrix::coherent_state(ladder[i], dim);
    const DetectionDistribution dist =
        detection_distribution(state, cfg.detector);
    GridPoint& p = grid.points[i];
    p.seed = derive_seed(plan.seed, std::uint64_t(i), 0);
    p.histogram = sample_histogram(dist, plan.shots_per_point, p.seed);
    p.clipped_mass = dist.clipped_mass;
    p.saturation_warning = dist.saturation_warning();
    p.sample.amp_index = int(i);
    p.sample.phase_index = 0;
    p.sample.alpha = ladder[i];
    p.sample.w = wigner_from_histogram(p.histogram);
    p.sample.sigma = estimator_sigma(p.histogram);
    p.sample.shots = plan.shots_per_point;
  }
  return grid;
}

struct CalibrationRow {
  double alpha_nominal = 0.0;
  bool has_estimate = false;
  AmplitudeEstimate estimate;
  bool flagged = false;      // low or absent two-photon statistics
  std::string note;
};

// Minimum two-photon events for an unflagged calibration point.
inline constexpr std::uint64_t calibration_two_photon_floor = 10;

inline std::vector<CalibrationRow> calibrate_grid(const WignerGrid& grid) {
  std::vector<CalibrationRow> rows;
  rows.reserve(grid.points.size());
  for (const GridPoint& p : grid.points) {
    CalibrationRow row;
    row.alpha_nominal = grid.amplitudes[p.sample.amp_index];
    try {
      row.estimate = calibrate_alpha(p.histogram);
      row.has_estimate = true;
      if (row.estimate.n_two < calibration_two_photon_floor) {
        row.flagged = true;
        row.note = "two-photon bin below statistical floor";
      }
    } catch (const InsufficientTwoPhotonEvents& e) {
      row.flagged = true;
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_calibration_csv(const std::vector<CalibrationRow>& rows,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "alpha_nominal,alpha_hat,sigma,n_one,n_two,shots,flagged,note\n";
  for (const CalibrationRow& r : rows) {
    out << detail::format_double(r.alpha_nominal) << ',';
    if (r.has_estimate)
      out << detail::format_double(r.estimate.value) << ','
          << detail::format_double(r.estimate.sigma) << ',' << r.estimate.n_one
          << ',' << r.estimate.n_two << ',' << r.estimate.shots;
    else
      out << ",,,,";
    out << ',' << (r.flagged ? 1 : 0) << ',' << r.note << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_json_file(const OrderedJson& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

// Writes the analysis artifacts shared by simulate and reconstruct.
inline void write_analysis_files(const WignerGrid& grid,
                                 const GridAnalysis& analysis,
                                 const std::filesystem::path& out_dir) {
  write_grid_csv(grid, (out_dir / "wigner_grid.csv").string());
  write_radial_profile_csv(analysis.profile,
                           (out_dir / "radial_profile.csv").string());
  if (analysis.fit)
    write_residuals_csv(grid, *analysis.fit,
                        (out_dir / "residuals.csv").string());
}

}  // namespace pnrtomo
