#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnrtomo/detector.hpp"
#include "pnrtomo/errors.hpp"
#include "pnrtomo/optics.hpp"
#include "pnrtomo/source.hpp"
#include "pnrtomo/tomography.hpp"

namespace pnrtomo {

using Json = nlohmann::json;

// Full run configuration. Defaults reproduce the reference experiment:
// Table-2 loss budget, 20 x 10 raster to |alpha| = 0.796, 6-bin counter.
struct RunConfig {
  // source
  double zeta = 0.135;
  HeraldMode herald_mode = HeraldMode::pnr_exact_one;
  double idler_efficiency = 1.0;
  int max_pairs = 4;

  // loss budget
  LossBudget loss;

  // detector
  DetectorModel detector;

  // scan
  double alpha_max = 0.796;
  int amplitude_steps = 20;
  int phase_steps = 10;
  std::uint64_t shots_per_point = 100000;
  std::uint64_t seed = 20260901;
  double amplitude_scale = 1.0;

  // coincidence counting
  std::uint64_t counting_shots = 87000;

  // calibration ladder (used when the calibration data is simulated)
  double calibration_alpha_min = 0.15;
  double calibration_alpha_max = 0.796;
  int calibration_steps = 20;
  std::uint64_t calibration_shots = 3200000;

  // output
  std::string format = "jsonl";

  SqueezingParameter squeezing() const { return SqueezingParameter(zeta); }

  HeraldConfig herald_config() const {
    HeraldConfig h;
    h.mode = herald_mode;
    h.idler_efficiency = idler_efficiency;
    h.max_pairs = max_pairs;
    return h;
  }

  ScanPlan scan_plan() const {
    ScanPlan plan;
    plan.amplitudes = linspace(0.0, alpha_max, amplitude_steps);
    plan.phases.resize(phase_steps);
    for (int j = 0; j < phase_steps; ++j)
      plan.phases[j] = 2.0 * std::numbers::pi * double(j) / double(phase_steps);
    plan.shots_per_point = shots_per_point;
    plan.seed = seed;
    plan.amplitude_scale = amplitude_scale;
    return plan;
  }

  std::vector<double> calibration_ladder() const {
    return linspace(calibration_alpha_min, calibration_alpha_max,
                    calibration_steps);
  }

  void validate() const {
    squeezing();
    herald_config().validate();
    loss.product();
    detector.validate();
    if (!(alpha_max > 0.0))
      throw ConfigError("scan.alpha_max must be positive");
    if (amplitude_steps < 2)
      throw ConfigError("scan.amplitude_steps must be >= 2");
    if (phase_steps < 1) throw ConfigError("scan.phase_steps must be >= 1");
    if (shots_per_point == 0)
      throw ConfigError("scan.shots_per_point must be positive");
    if (!(amplitude_scale > 0.0))
      throw ConfigError("scan.amplitude_scale must be positive");
    if (counting_shots == 0)
      throw ConfigError("counting.shots must be positive");
    if (!(calibration_alpha_min > 0.0) ||
        !(calibration_alpha_max > calibration_alpha_min))
      throw ConfigError("calibration ladder bounds invalid");
    if (calibration_steps < 1)
      throw ConfigError("calibration.steps must be >= 1");
    if (calibration_shots == 0)
      throw ConfigError("calibration.shots_per_point must be positive");
    if (format != "jsonl" && format != "csv")
      throw ConfigError("output.format must be 'jsonl' or 'csv'");
  }

  static RunConfig from_json(const Json& j);
  static RunConfig load(const std::string& path);
  Json to_json() const;
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::string& section,
                                std::initializer_list<const char*> known) {
  if (!j.is_object())
    throw ConfigError("config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      throw ConfigError("unknown config key '" +
                        (section.empty() ? it.key() : section + "." + it.key()) +
                        "'");
  }
}

template <typename T>
inline void read_field(const Json& j, const char* key, T& out,
                       const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("config key '" + section + "." + key +
                      "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig RunConfig::from_json(const Json& j) {
  RunConfig cfg;
  detail::reject_unknown_keys(j, "", {"source", "loss", "detector", "scan",
                                      "counting", "calibration", "output"});
  if (j.contains("source")) {
    const Json& s = j.at("source");
    detail::reject_unknown_keys(
        s, "source", {"zeta", "herald_mode", "idler_efficiency", "max_pairs"});
    detail::read_field(s, "zeta", cfg.zeta, "source");
    if (s.contains("herald_mode")) {
      std::string mode = s.at("herald_mode").get<std::string>();
      if (mode == "pnr_exact_one")
        cfg.herald_mode = HeraldMode::pnr_exact_one;
      else if (mode == "threshold")
        cfg.herald_mode = HeraldMode::threshold;
      else
        throw ConfigError("source.herald_mode must be 'pnr_exact_one' or "
                          "'threshold'");
    }
    detail::read_field(s, "idler_efficiency", cfg.idler_efficiency, "source");
    detail::read_field(s, "max_pairs", cfg.max_pairs, "source");
  }
  if (j.contains("loss")) {
    const Json& s = j.at("loss");
    detail::reject_unknown_keys(s, "loss",
                                {"eta_tes", "eta_ot", "eta_bs", "eta_ofc"});
    detail::read_field(s, "eta_tes", cfg.loss.eta_tes, "loss");
    detail::read_field(s, "eta_ot", cfg.loss.eta_ot, "loss");
    detail::read_field(s, "eta_bs", cfg.loss.eta_bs, "loss");
    detail::read_field(s, "eta_ofc", cfg.loss.eta_ofc, "loss");
  }
  if (j.contains("detector")) {
    const Json& s = j.at("detector");
    detail::reject_unknown_keys(
        s, "detector",
        {"n_max_resolved", "clip_policy", "dark_rate", "miscount_rate"});
    detail::read_field(s, "n_max_resolved", cfg.detector.n_max_resolved,
                       "detector");
    if (s.contains("clip_policy")) {
      std::string policy = s.at("clip_policy").get<std::string>();
      if (policy == "saturate")
        cfg.detector.clip_policy = ClipPolicy::saturate;
      else if (policy == "discard")
        cfg.detector.clip_policy = ClipPolicy::discard;
      else
        throw ConfigError(
            "detector.clip_policy must be 'saturate' or 'discard'");
    }
    detail::read_field(s, "dark_rate", cfg.detector.dark_rate, "detector");
    detail::read_field(s, "miscount_rate", cfg.detector.miscount_rate,
                       "detector");
  }
  if (j.contains("scan")) {
    const Json& s = j.at("scan");
    detail::reject_unknown_keys(
        s, "scan",
        {"alpha_max", "amplitude_steps", "phase_steps", "shots_per_point",
         "seed", "amplitude_scale"});
    detail::read_field(s, "alpha_max", cfg.alpha_max, "scan");
    detail::read_field(s, "amplitude_steps", cfg.amplitude_steps, "scan");
    detail::read_field(s, "phase_steps", cfg.phase_steps, "scan");
    detail::read_field(s, "shots_per_point", cfg.shots_per_point, "scan");
    detail::read_field(s, "seed", cfg.seed, "scan");
    detail::read_field(s, "amplitude_scale", cfg.amplitude_scale, "scan");
  }
  if (j.contains("counting")) {
    const Json& s = j.at("counting");
    detail::reject_unknown_keys(s, "counting", {"shots"});
    detail::read_field(s, "shots", cfg.counting_shots, "counting");
  }
  if (j.contains("calibration")) {
    const Json& s = j.at("calibration");
    detail::reject_unknown_keys(
        s, "calibration",
        {"alpha_min", "alpha_max", "steps", "shots_per_point"});
    detail::read_field(s, "alpha_min", cfg.calibration_alpha_min,
                       "calibration");
    detail::read_field(s, "alpha_max", cfg.calibration_alpha_max,
                       "calibration");
    detail::read_field(s, "steps", cfg.calibration_steps, "calibration");
    detail::read_field(s, "shots_per_point", cfg.calibration_shots,
                       "calibration");
  }
  if (j.contains("output")) {
    const Json& s = j.at("output");
    detail::reject_unknown_keys(s, "output", {"format"});
    detail::read_field(s, "format", cfg.format, "output");
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

inline Json RunConfig::to_json() const {
  Json j;
  j["source"] = {
      {"zeta", zeta},
      {"herald_mode",
       herald_mode == HeraldMode::pnr_exact_one ? "pnr_exact_one"
                                                : "threshold"},
      {"idler_efficiency", idler_efficiency},
      {"max_pairs", max_pairs},
  };
  j["loss"] = {{"eta_tes", loss.eta_tes},
               {"eta_ot", loss.eta_ot},
               {"eta_bs", loss.eta_bs},
               {"eta_ofc", loss.eta_ofc}};
  j["detector"] = {
      {"n_max_resolved", detector.n_max_resolved},
      {"clip_policy",
       detector.clip_policy == ClipPolicy::saturate ? "saturate" : "discard"},
      {"dark_rate", detector.dark_rate},
      {"miscount_rate", detector.miscount_rate}};
  j["scan"] = {{"alpha_max", alpha_max},
               {"amplitude_steps", amplitude_steps},
               {"phase_steps", phase_steps},
               {"shots_per_point", shots_per_point},
               {"seed", seed},
               {"amplitude_scale", amplitude_scale}};
  j["counting"] = {{"shots", counting_shots}};
  j["calibration"] = {{"alpha_min", calibration_alpha_min},
                      {"alpha_max", calibration_alpha_max},
                      {"steps", calibration_steps},
                      {"shots_per_point", calibration_shots}};
  j["output"] = {{"format", format}};
  return j;
}

}  // namespace pnrtomo
