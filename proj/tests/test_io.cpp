#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pnrtomo/config.hpp"
#include "pnrtomo/dataset.hpp"
#include "pnrtomo/pipeline.hpp"

using namespace pnrtomo;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::temp_directory_path() / "pnrtomo_io_tests";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.amplitude_steps = 4;
  cfg.phase_steps = 3;
  cfg.shots_per_point = 2000;
  cfg.counting_shots = 3000;
  cfg.seed = 4242;
  return cfg;
}

WignerGrid small_grid() {
  RunConfig cfg = small_config();
  HeraldedState h =
      heralded_signal_state(cfg.squeezing(), cfg.herald_config());
  return run_scan(h.state, cfg.scan_plan(), cfg.detector, cfg.loss);
}

void check_grids_equal(const WignerGrid& a, const WignerGrid& b) {
  REQUIRE(a.amplitudes == b.amplitudes);
  REQUIRE(a.phases == b.phases);
  CHECK(a.shots_per_point == b.shots_per_point);
  CHECK(a.master_seed == b.master_seed);
  CHECK(a.amplitude_scale == b.amplitude_scale);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    const GridPoint& pa = a.points[k];
    const GridPoint& pb = b.points[k];
    CHECK(pa.histogram.counts == pb.histogram.counts);
    CHECK(pa.seed == pb.seed);
    CHECK(pa.clipped_mass == pb.clipped_mass);
    CHECK(pa.sample.w == pb.sample.w);
    CHECK(pa.sample.sigma == pb.sample.sigma);
    CHECK(pa.sample.alpha == pb.sample.alpha);
  }
}

}  // namespace

TEST_CASE("run config defaults") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.zeta == 0.135);
  CHECK(cfg.herald_mode == HeraldMode::pnr_exact_one);
  CHECK_THAT(cfg.loss.product(), WithinAbs(0.5764419, 1e-7));
  CHECK(cfg.detector.n_max_resolved == 5);
  CHECK(cfg.shots_per_point == 100000);
  CHECK(cfg.counting_shots == 87000);
  CHECK(cfg.format == "jsonl");

  ScanPlan plan = cfg.scan_plan();
  CHECK(plan.amplitudes.size() == 20);
  CHECK(plan.phases.size() == 10);
  CHECK_THAT(plan.amplitudes.back(), WithinAbs(0.796, 1e-15));

  std::vector<double> ladder = cfg.calibration_ladder();
  CHECK(ladder.size() == 20);
  CHECK_THAT(ladder.front(), WithinAbs(0.15, 1e-15));
  CHECK_THAT(ladder.back(), WithinAbs(0.796, 1e-15));
}

TEST_CASE("config json round trip") {
  RunConfig cfg;
  cfg.zeta = 0.2;
  cfg.herald_mode = HeraldMode::threshold;
  cfg.idler_efficiency = 0.0174;
  cfg.loss.eta_tes = 0.8;
  cfg.detector.n_max_resolved = 7;
  cfg.detector.clip_policy = ClipPolicy::discard;
  cfg.detector.dark_rate = 0.001;
  cfg.alpha_max = 0.5;
  cfg.amplitude_steps = 6;
  cfg.phase_steps = 4;
  cfg.shots_per_point = 12345;
  cfg.seed = 99;
  cfg.amplitude_scale = 1.1;
  cfg.counting_shots = 777;
  cfg.calibration_alpha_min = 0.2;
  cfg.calibration_shots = 5000;
  cfg.format = "csv";

  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.zeta == cfg.zeta);
  CHECK(back.herald_mode == cfg.herald_mode);
  CHECK(back.idler_efficiency == cfg.idler_efficiency);
  CHECK(back.loss.eta_tes == cfg.loss.eta_tes);
  CHECK(back.detector.n_max_resolved == cfg.detector.n_max_resolved);
  CHECK(back.detector.clip_policy == cfg.detector.clip_policy);
  CHECK(back.detector.dark_rate == cfg.detector.dark_rate);
  CHECK(back.alpha_max == cfg.alpha_max);
  CHECK(back.amplitude_steps == cfg.amplitude_steps);
  CHECK(back.phase_steps == cfg.phase_steps);
  CHECK(back.shots_per_point == cfg.shots_per_point);
  CHECK(back.seed == cfg.seed);
  CHECK(back.amplitude_scale == cfg.amplitude_scale);
  CHECK(back.counting_shots == cfg.counting_shots);
  CHECK(back.calibration_alpha_min == cfg.calibration_alpha_min);
  CHECK(back.calibration_shots == cfg.calibration_shots);
  CHECK(back.format == cfg.format);
}

TEST_CASE("config rejects unknown keys by name") {
  CHECK_THROWS_MATCHES(
      RunConfig::from_json(Json{{"source", {{"xyz", 1}}}}), ConfigError,
      Catch::Matchers::MessageMatches(ContainsSubstring("source.xyz")));
  CHECK_THROWS_MATCHES(
      RunConfig::from_json(Json{{"bogus", Json::object()}}), ConfigError,
      Catch::Matchers::MessageMatches(ContainsSubstring("bogus")));
}

TEST_CASE("config rejects bad values") {
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"source", {{"zeta", 1.2}}}}),
                  ConfigError);
  CHECK_THROWS_AS(
      RunConfig::from_json(Json{{"source", {{"herald_mode", "maybe"}}}}),
      ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"loss", {{"eta_tes", 1.5}}}}),
                  ConfigError);
  CHECK_THROWS_AS(
      RunConfig::from_json(Json{{"detector", {{"clip_policy", "zap"}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      RunConfig::from_json(Json{{"scan", {{"amplitude_steps", 1}}}}),
      ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(Json{{"output", {{"format", "xml"}}}}),
                  ConfigError);
  // Wrong JSON type for a field names the path.
  CHECK_THROWS_MATCHES(
      RunConfig::from_json(Json{{"scan", {{"seed", "abc"}}}}), ConfigError,
      Catch::Matchers::MessageMatches(ContainsSubstring("scan.seed")));
}

TEST_CASE("config file loading") {
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), IoError);

  fs::path bad = tmp_dir() / "bad_config.json";
  spit(bad, "{ not json");
  CHECK_THROWS_AS(RunConfig::load(bad.string()), ConfigError);

  fs::path good = tmp_dir() / "good_config.json";
  spit(good, R"({"scan": {"amplitude_steps": 5, "shots_per_point": 100}})");
  RunConfig cfg = RunConfig::load(good.string());
  CHECK(cfg.amplitude_steps == 5);
  CHECK(cfg.shots_per_point == 100);
  CHECK(cfg.zeta == 0.135);
}

TEST_CASE("counts dataset round trips") {
  WignerGrid grid = small_grid();

  SECTION("jsonl") {
    fs::path path = tmp_dir() / "counts.jsonl";
    write_counts_jsonl(grid, path.string());
    check_grids_equal(grid, read_counts_dataset(path.string()));
  }

  SECTION("csv") {
    fs::path path = tmp_dir() / "counts.csv";
    write_counts_csv(grid, path.string());
    check_grids_equal(grid, read_counts_dataset(path.string()));
  }

  SECTION("writes are byte stable") {
    fs::path a = tmp_dir() / "counts_a.jsonl";
    fs::path b = tmp_dir() / "counts_b.jsonl";
    write_counts_jsonl(grid, a.string());
    write_counts_jsonl(grid, b.string());
    CHECK(slurp(a) == slurp(b));

    fs::path c = tmp_dir() / "counts_a.csv";
    fs::path d = tmp_dir() / "counts_b.csv";
    write_counts_csv(grid, c.string());
    write_counts_csv(grid, d.string());
    CHECK(slurp(c) == slurp(d));
  }
}

TEST_CASE("corrupt datasets fail loudly") {
  WignerGrid grid = small_grid();
  fs::path path = tmp_dir() / "counts_corrupt.jsonl";
  write_counts_jsonl(grid, path.string());
  const std::string original = slurp(path);

  SECTION("newer version is refused") {
    std::string text = original;
    const std::string tag = "\"version\":1";
    text.replace(text.find(tag), tag.size(), "\"version\":2");
    spit(path, text);
    CHECK_THROWS_MATCHES(
        read_counts_dataset(path.string()), SchemaError,
        Catch::Matchers::MessageMatches(ContainsSubstring("newer")));
  }

  SECTION("duplicate record is refused") {
    // Append a copy of the first record line.
    std::istringstream in(original);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    spit(path, original + first + "\n");
    CHECK_THROWS_MATCHES(
        read_counts_dataset(path.string()), SchemaError,
        Catch::Matchers::MessageMatches(ContainsSubstring("duplicate")));
  }

  SECTION("missing record is refused") {
    const std::size_t cut = original.rfind("{\"amp_index\"");
    spit(path, original.substr(0, cut));
    CHECK_THROWS_MATCHES(
        read_counts_dataset(path.string()), SchemaError,
        Catch::Matchers::MessageMatches(ContainsSubstring("missing")));
  }

  SECTION("count sum mismatch is refused with the record index") {
    std::istringstream in(original);
    std::string line;
    std::getline(in, line);
    std::string text = line + "\n";
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        nlohmann::json rec = nlohmann::json::parse(line);
        rec["counts"][0] = rec["counts"][0].get<std::uint64_t>() + 1;
        text += rec.dump() + "\n";
        first = false;
      } else {
        text += line + "\n";
      }
    }
    spit(path, text);
    CHECK_THROWS_MATCHES(
        read_counts_dataset(path.string()), SchemaError,
        Catch::Matchers::MessageMatches(ContainsSubstring("record 0")));
  }

  SECTION("garbage line is refused") {
    spit(path, original + "not json\n");
    CHECK_THROWS_AS(read_counts_dataset(path.string()), SchemaError);
  }

  SECTION("csv with shuffled columns is refused") {
    fs::path cpath = tmp_dir() / "counts_corrupt.csv";
    write_counts_csv(grid, cpath.string());
    std::string text = slurp(cpath);
    const std::string cols = "amp_index,phase_index";
    text.replace(text.find(cols), cols.size(), "phase_index,amp_index");
    spit(cpath, text);
    CHECK_THROWS_AS(read_counts_dataset(cpath.string()), SchemaError);
  }
}

TEST_CASE("hand-built single-point dataset reproduces the reference origin") {
  fs::path path = tmp_dir() / "origin_only.jsonl";
  spit(path,
       R"({"schema":"pnrtomo.counts","version":1,"amplitudes":[0.0],)"
       R"("phases":[0.0],"shots_per_point":100000,"master_seed":1,)"
       R"("amplitude_scale":1.0,"n_bins":6})"
       "\n"
       R"({"amp_index":0,"phase_index":0,"alpha_abs":0.0,"phase":0.0,)"
       R"("seed":1,"counts":[42000,58000,0,0,0,0],"clipped_mass":0.0})"
       "\n");
  WignerGrid grid = read_counts_dataset(path.string());
  REQUIRE(grid.points.size() == 1);
  CHECK_THAT(grid.points[0].sample.w,
             WithinAbs(-0.050929581789406514, 1e-15));

  GridAnalysis analysis = analyze_grid(grid);
  CHECK_FALSE(analysis.fit.has_value());
  REQUIRE(analysis.origin.has_value());
  CHECK_THAT(analysis.origin->w, WithinAbs(-0.050929581789406514, 1e-15));
  CHECK(analysis.origin->n_slots == 1);

  OrderedJson report = analysis_report_json(grid, analysis);
  CHECK(report.at("fit").is_null());
  CHECK_THAT(report.at("origin").at("w").get<double>(),
             WithinAbs(-0.050929581789406514, 1e-15));
}

TEST_CASE("offline reconstruction reproduces the inline report") {
  RunConfig cfg = small_config();
  SimulationProducts sim = run_simulation(cfg);

  fs::path path = tmp_dir() / "roundtrip.jsonl";
  write_counts_dataset(sim.grid, path.string(), "jsonl");
  WignerGrid back = read_counts_dataset(path.string());
  GridAnalysis analysis = analyze_grid(back);

  const std::string inline_report =
      analysis_report_json(sim.grid, sim.analysis).dump(2);
  const std::string offline_report =
      analysis_report_json(back, analysis).dump(2);
  CHECK(inline_report == offline_report);

  // The full simulation report carries the source and counting sections on
  // top of the shared analysis.
  OrderedJson full = simulation_report_json(sim);
  CHECK(full.contains("source"));
  CHECK(full.contains("coincidences"));
  CHECK(full.at("schema").get<std::string>() == "pnrtomo.report");
}

TEST_CASE("analysis artifact files") {
  WignerGrid grid = small_grid();
  GridAnalysis analysis = analyze_grid(grid);
  fs::path dir = tmp_dir() / "artifacts";
  fs::create_directories(dir);
  write_analysis_files(grid, analysis, dir);

  CHECK(slurp(dir / "wigner_grid.csv").rfind("amp_index", 0) == 0);
  CHECK(slurp(dir / "radial_profile.csv").rfind("alpha_abs", 0) == 0);
  CHECK(slurp(dir / "residuals.csv").rfind("amp_index", 0) == 0);

  // Grid CSV carries one row per point plus the column header.
  std::string text = slurp(dir / "wigner_grid.csv");
  std::size_t lines = 0;
  for (char ch : text)
    if (ch == '\n') ++lines;
  CHECK(lines == grid.points.size() + 1);
}
