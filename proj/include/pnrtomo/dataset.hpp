#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnrtomo/errors.hpp"
#include "pnrtomo/tomography.hpp"

namespace pnrtomo {

using OrderedJson = nlohmann::ordered_json;

// Counts datasets carry one record per grid point plus a header that pins
// the scan geometry. Version bumps whenever the schema changes shape; a
// reader refuses anything newer than it understands.
inline constexpr const char* counts_schema_name = "pnrtomo.counts";
inline constexpr int counts_schema_version = 1;

namespace detail {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string join_double_csv(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

[[noreturn]] inline void schema_fail(const std::string& path,
                                     const std::string& what) {
  throw SchemaError(path + ": " + what);
}

}  // namespace detail

inline OrderedJson counts_header_json(const WignerGrid& grid) {
  OrderedJson h;
  h["schema"] = counts_schema_name;
  h["version"] = counts_schema_version;
  h["amplitudes"] = grid.amplitudes;
  h["phases"] = grid.phases;
  h["shots_per_point"] = grid.shots_per_point;
  h["master_seed"] = grid.master_seed;
  h["amplitude_scale"] = grid.amplitude_scale;
  h["n_bins"] =
      grid.points.empty() ? 0 : grid.points.front().histogram.counts.size();
  return h;
}

inline void write_counts_jsonl(const WignerGrid& grid,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << counts_header_json(grid).dump() << "\n";
  for (const GridPoint& p : grid.points) {
    OrderedJson rec;
    rec["amp_index"] = p.sample.amp_index;
    rec["phase_index"] = p.sample.phase_index;
    rec["alpha_abs"] = grid.amplitudes[p.sample.amp_index];
    rec["phase"] = grid.phases[p.sample.phase_index];
    rec["seed"] = p.seed;
    rec["counts"] = p.histogram.counts;
    rec["clipped_mass"] = p.clipped_mass;
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_counts_csv(const WignerGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "# " << counts_schema_name << " " << counts_schema_version << " "
      << counts_header_json(grid).dump() << "\n";
  const std::size_t n_bins =
      grid.points.empty() ? 0 : grid.points.front().histogram.counts.size();
  out << "amp_index,phase_index,alpha_abs,phase,seed,clipped_mass";
  for (std::size_t b = 0; b < n_bins; ++b) out << ",c" << b;
  out << "\n";
  for (const GridPoint& p : grid.points) {
    out << p.sample.amp_index << ',' << p.sample.phase_index << ','
        << detail::format_double(grid.amplitudes[p.sample.amp_index]) << ','
        << detail::format_double(grid.phases[p.sample.phase_index]) << ','
        << p.seed << ',' << detail::format_double(p.clipped_mass);
    for (std::uint64_t c : p.histogram.counts) out << ',' << c;
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_counts_dataset(const WignerGrid& grid,
                                 const std::string& path,
                                 const std::string& format) {
  if (format == "jsonl")
    write_counts_jsonl(grid, path);
  else if (format == "csv")
    write_counts_csv(grid, path);
  else
    throw InvalidArgument("write_counts_dataset: unknown format " + format);
}

namespace detail {

inline void check_counts_header(const nlohmann::json& h,
                                const std::string& path) {
  if (!h.is_object() || !h.contains("schema") || !h.contains("version"))
    schema_fail(path, "missing schema/version header");
  if (h.at("schema").get<std::string>() != counts_schema_name)
    schema_fail(path, "schema is '" + h.at("schema").get<std::string>() +
                          "', expected '" + counts_schema_name + "'");
  const int version = h.at("version").get<int>();
  if (version > counts_schema_version)
    schema_fail(path, "dataset version " + std::to_string(version) +
                          " is newer than supported version " +
                          std::to_string(counts_schema_version) +
                          "; refusing to guess");
  for (const char* key :
       {"amplitudes", "phases", "shots_per_point", "master_seed",
        "amplitude_scale", "n_bins"})
    if (!h.contains(key))
      schema_fail(path, std::string("header missing '") + key + "'");
}

inline WignerGrid grid_from_header(const nlohmann::json& h) {
  WignerGrid grid;
  grid.amplitudes = h.at("amplitudes").get<std::vector<double>>();
  grid.phases = h.at("phases").get<std::vector<double>>();
  grid.shots_per_point = h.at("shots_per_point").get<std::uint64_t>();
  grid.master_seed = h.at("master_seed").get<std::uint64_t>();
  grid.amplitude_scale = h.at("amplitude_scale").get<double>();
  grid.points.resize(grid.amplitudes.size() * grid.phases.size());
  return grid;
}

// Places one parsed record into the grid, recomputing the derived sample
// fields from the stored counts.
inline void insert_record(WignerGrid& grid, std::vector<bool>& seen,
                          int amp_index, int phase_index, double alpha_abs,
                          double phase, std::uint64_t seed,
                          std::vector<std::uint64_t> counts,
                          double clipped_mass, std::size_t n_bins,
                          const std::string& path, std::size_t record) {
  const std::string where = "record " + std::to_string(record);
  if (amp_index < 0 || std::size_t(amp_index) >= grid.amplitudes.size() ||
      phase_index < 0 || std::size_t(phase_index) >= grid.phases.size())
    schema_fail(path, where + ": grid index out of range");
  if (std::abs(grid.amplitudes[amp_index] - alpha_abs) > 1e-9)
    schema_fail(path, where + ": alpha_abs disagrees with header");
  if (std::abs(grid.phases[phase_index] - phase) > 1e-9)
    schema_fail(path, where + ": phase disagrees with header");
  if (counts.size() != n_bins)
    schema_fail(path, where + ": expected " + std::to_string(n_bins) +
                          " count bins, got " + std::to_string(counts.size()));
  std::uint64_t total = 0;
  for (std::uint64_t c : counts) total += c;
  if (total != grid.shots_per_point)
    schema_fail(path, where + ": counts sum " + std::to_string(total) +
                          " != shots_per_point " +
                          std::to_string(grid.shots_per_point));
  if (!(clipped_mass >= 0.0 && clipped_mass <= 1.0))
    schema_fail(path, where + ": clipped_mass outside [0, 1]");
  const std::size_t idx =
      std::size_t(amp_index) * grid.phases.size() + std::size_t(phase_index);
  if (seen[idx]) schema_fail(path, where + ": duplicate grid point");
  seen[idx] = true;

  GridPoint& p = grid.points[idx];
  p.histogram.counts = std::move(counts);
  p.histogram.shots = grid.shots_per_point;
  p.seed = seed;
  p.clipped_mass = clipped_mass;
  p.saturation_warning = clipped_mass > saturation_warning_threshold;
  p.sample.amp_index = amp_index;
  p.sample.phase_index = phase_index;
  p.sample.alpha = std::polar(grid.amplitudes[amp_index] *
                                  grid.amplitude_scale,
                              grid.phases[phase_index]);
  p.sample.w = wigner_from_histogram(p.histogram);
  p.sample.sigma = estimator_sigma(p.histogram);
  p.sample.shots = grid.shots_per_point;
}

inline WignerGrid read_counts_jsonl(std::istream& in,
                                    const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) schema_fail(path, "empty dataset");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    schema_fail(path, "header line is not valid JSON");
  }
  check_counts_header(header, path);
  WignerGrid grid = grid_from_header(header);
  const std::size_t n_bins = header.at("n_bins").get<std::size_t>();
  std::vector<bool> seen(grid.points.size(), false);
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      schema_fail(path,
                  "record " + std::to_string(record) + ": invalid JSON");
    }
    try {
      insert_record(grid, seen, rec.at("amp_index").get<int>(),
                    rec.at("phase_index").get<int>(),
                    rec.at("alpha_abs").get<double>(),
                    rec.at("phase").get<double>(),
                    rec.at("seed").get<std::uint64_t>(),
                    rec.at("counts").get<std::vector<std::uint64_t>>(),
                    rec.at("clipped_mass").get<double>(), n_bins, path,
                    record);
    } catch (const nlohmann::json::exception& e) {
      schema_fail(path, "record " + std::to_string(record) + ": " + e.what());
    }
    ++record;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      schema_fail(path, "missing grid point at flat index " +
                            std::to_string(i));
  return grid;
}

inline WignerGrid read_counts_csv(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) schema_fail(path, "empty dataset");
  const std::string prefix = std::string("# ") + counts_schema_name + " ";
  if (line.rfind(prefix, 0) != 0)
    schema_fail(path, "missing '# " + std::string(counts_schema_name) +
                          " <version> <header>' comment line");
  std::istringstream head(line.substr(prefix.size()));
  int version = -1;
  head >> version;
  std::string header_json;
  std::getline(head, header_json);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_json);
  } catch (const nlohmann::json::exception&) {
    schema_fail(path, "header block is not valid JSON");
  }
  check_counts_header(header, path);
  WignerGrid grid = grid_from_header(header);
  const std::size_t n_bins = header.at("n_bins").get<std::size_t>();

  if (!std::getline(in, line)) schema_fail(path, "missing column header row");
  std::string expected_columns = "amp_index,phase_index,alpha_abs,phase,seed,clipped_mass";
  for (std::size_t b = 0; b < n_bins; ++b)
    expected_columns += ",c" + std::to_string(b);
  if (line != expected_columns)
    schema_fail(path, "column header row is '" + line + "', expected '" +
                          expected_columns + "'");
  std::vector<bool> seen(grid.points.size(), false);
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6 + n_bins)
      schema_fail(path, "record " + std::to_string(record) + ": expected " +
                            std::to_string(6 + n_bins) + " columns, got " +
                            std::to_string(cells.size()));
    try {
      std::vector<std::uint64_t> counts(n_bins);
      for (std::size_t b = 0; b < n_bins; ++b)
        counts[b] = std::stoull(cells[6 + b]);
      insert_record(grid, seen, std::stoi(cells[0]), std::stoi(cells[1]),
                    std::stod(cells[2]), std::stod(cells[3]),
                    std::stoull(cells[4]), std::move(counts),
                    std::stod(cells[5]), n_bins, path, record);
    } catch (const std::invalid_argument&) {
      schema_fail(path,
                  "record " + std::to_string(record) + ": unparsable cell");
    } catch (const std::out_of_range&) {
      schema_fail(path,
                  "record " + std::to_string(record) + ": value out of range");
    }
    ++record;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      schema_fail(path, "missing grid point at flat index " +
                            std::to_string(i));
  return grid;
}

}  // namespace detail

// Reads a counts dataset, sniffing the format from the first byte:
// '{' starts a JSONL header, '#' a CSV header block.
inline WignerGrid read_counts_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  const int first = in.peek();
  if (first == std::char_traits<char>::eof())
    detail::schema_fail(path, "empty dataset");
  if (first == '{') return detail::read_counts_jsonl(in, path);
  if (first == '#') return detail::read_counts_csv(in, path);
  detail::schema_fail(path, "unrecognized dataset framing");
}

// Plot-ready columnar emissions. All numeric, comma separated, one header
// row; precision preserves the doubles exactly.
inline void write_grid_csv(const WignerGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "amp_index,phase_index,alpha_abs,phase,q,p,w,sigma,shots,"
         "clipped_mass\n";
  for (const GridPoint& p : grid.points) {
    const auto [q, mom] = quadratures_from_amplitude(p.sample.alpha);
    out << p.sample.amp_index << ',' << p.sample.phase_index << ','
        << detail::format_double(grid.amplitudes[p.sample.amp_index]) << ','
        << detail::format_double(grid.phases[p.sample.phase_index]) << ','
        << detail::format_double(q) << ',' << detail::format_double(mom)
        << ',' << detail::format_double(p.sample.w) << ','
        << detail::format_double(p.sample.sigma) << ',' << p.sample.shots
        << ',' << detail::format_double(p.clipped_mass) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_radial_profile_csv(const RadialProfile& profile,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "alpha_abs,w_mean,w_spread,n_slots\n";
  for (std::size_t i = 0; i < profile.amplitudes.size(); ++i) {
    out << detail::format_double(profile.amplitudes[i]) << ','
        << detail::format_double(profile.mean_w[i]) << ','
        << detail::format_double(profile.spread[i]) << ','
        << profile.n_slots[i] << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_residuals_csv(const WignerGrid& grid, const FitResult& fit,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "amp_index,phase_index,alpha_abs,w,model,residual,sigma\n";
  for (std::size_t k = 0; k < grid.points.size(); ++k) {
    const GridPoint& p = grid.points[k];
    const double a = std::abs(p.sample.alpha);
    const double model = lossy_single_photon_wigner(a, fit.eta_hat);
    out << p.sample.amp_index << ',' << p.sample.phase_index << ','
        << detail::format_double(a) << ','
        << detail::format_double(p.sample.w) << ','
        << detail::format_double(model) << ','
        << detail::format_double(fit.residuals[k]) << ','
        << detail::format_double(p.sample.sigma) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace pnrtomo
