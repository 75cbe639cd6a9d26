#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>

#include "pnrtomo/detector.hpp"
#include "pnrtomo/optics.hpp"
#include "pnrtomo/source.hpp"
#include "pnrtomo/tomography.hpp"

using namespace pnrtomo;
using Catch::Matchers::WithinAbs;

namespace {

FockDensityMatrix zero_one_superposition(int dim) {
  ComplexVector psi = ComplexVector::Zero(dim);
  psi(0) = 1.0 / std::sqrt(2.0);
  psi(1) = 1.0 / std::sqrt(2.0);
  ComplexMatrix rho = psi * psi.adjoint();
  return FockDensityMatrix::from_matrix(rho);
}

}  // namespace

TEST_CASE("scan plan validation") {
  ScanPlan plan = ScanPlan::default_plan();
  CHECK_NOTHROW(plan.validate());
  CHECK(plan.amplitudes.size() == 20);
  CHECK(plan.phases.size() == 10);
  CHECK_THAT(plan.amplitudes.front(), WithinAbs(0.0, 0.0));
  CHECK_THAT(plan.amplitudes.back(), WithinAbs(0.796, 1e-15));

  SECTION("amplitudes must ascend") {
    plan.amplitudes = {0.3, 0.1};
    CHECK_THROWS_AS(plan.validate(), InvalidArgument);
  }
  SECTION("phases live in [0, 2 pi)") {
    plan.phases = {0.0, 2.0 * std::numbers::pi};
    CHECK_THROWS_AS(plan.validate(), InvalidArgument);
  }
  SECTION("zero shots rejected") {
    plan.shots_per_point = 0;
    CHECK_THROWS_AS(plan.validate(), InvalidArgument);
  }
}

TEST_CASE("parity estimator on exact counts") {
  CountHistogram all_even;
  all_even.counts = {100, 0, 50, 0};
  all_even.shots = 150;
  CHECK_THAT(wigner_from_histogram(all_even),
             WithinAbs(0.3183098861837907, 1e-15));
  CHECK(estimator_sigma(all_even) == 0.0);

  CountHistogram mixed;
  mixed.counts = {42000, 58000};
  mixed.shots = 100000;
  CHECK_THAT(wigner_from_histogram(mixed),
             WithinAbs(-0.050929581789406514, 1e-15));
  CHECK_THAT(estimator_sigma(mixed), WithinAbs(0.0009936164317335635, 1e-15));

  CountHistogram even_split;
  even_split.counts = {5000, 5000};
  even_split.shots = 10000;
  CHECK_THAT(wigner_from_histogram(even_split), WithinAbs(0.0, 1e-15));
  CHECK_THAT(estimator_sigma(even_split),
             WithinAbs(0.003183098861837907, 1e-15));
}

TEST_CASE("parity estimator on exact distributions") {
  DetectorModel det;
  DetectionDistribution dist = detection_distribution(
      FockDensityMatrix::diagonal_mixture({0.42, 0.58}), det);
  CHECK_THAT(wigner_from_distribution(dist),
             WithinAbs(-0.050929581789406514, 1e-15));
}

TEST_CASE("single-photon loss model closed form") {
  CHECK_THAT(lossy_single_photon_wigner(0.5, 0.57),
             WithinAbs(0.08301782326184637, 1e-15));
  // eta = 1 is the pure Fock-1 profile, eta = 0 the vacuum Gaussian.
  CHECK_THAT(lossy_single_photon_wigner(0.0, 1.0),
             WithinAbs(-0.3183098861837907, 1e-15));
  CHECK_THAT(lossy_single_photon_wigner(0.0, 0.0),
             WithinAbs(0.3183098861837907, 1e-15));
  // Against the library's displaced-parity evaluation of the mixed state.
  for (double eta : {0.57, 1.0}) {
    FockDensityMatrix mixed = apply_loss(FockDensityMatrix::fock_state(1, 24),
                                         eta);
    for (double a : {0.0, 0.3, 0.796}) {
      CHECK_THAT(wigner_exact(mixed, Complex(a, 0.0)),
                 WithinAbs(lossy_single_photon_wigner(a, eta), 1e-12));
    }
  }
}

TEST_CASE("folded detection parity matches the exact Wigner function") {
  // A state with 0-1 coherence pins the probe sign: displacing by -alpha
  // and counting parity must reproduce W at +alpha.
  FockDensityMatrix rho = zero_one_superposition(24);
  DetectorModel det;
  det.n_max_resolved = 14;
  for (Complex alpha : {Complex(0.3, 0.0), Complex(-0.25, 0.33),
                        Complex(0.0, -0.5)}) {
    const FockDensityMatrix displaced = apply_displacement(rho, -alpha);
    const DetectionDistribution dist = detection_distribution(displaced, det);
    const double via_counts = wigner_from_distribution(dist);
    const double exact = wigner_exact(rho, alpha);
    CHECK_THAT(via_counts, WithinAbs(exact, 1e-9));
  }
}

TEST_CASE("amplitude calibration from photon-pair ratio") {
  SECTION("exact counts invert exactly") {
    CountHistogram h;
    h.counts = {310000, 80000, 10000, 0};
    h.shots = 400000;
    AmplitudeEstimate est = calibrate_alpha(h);
    CHECK_THAT(est.value, WithinAbs(0.5, 1e-15));
    CHECK(est.sigma > 0.0);
    CHECK(est.n_one == 80000);
    CHECK(est.n_two == 10000);
  }

  SECTION("sampled coherent state recovered within three sigma") {
    DetectorModel det;
    FockDensityMatrix coh = FockDensityMatrix::coherent_state(0.25, 20);
    DetectionDistribution dist = detection_distribution(coh, det);
    CountHistogram h = sample_histogram(dist, 1000000, 314159);
    AmplitudeEstimate est = calibrate_alpha(h);
    CHECK(std::abs(est.value - 0.25) < 3.0 * est.sigma);
    // Delta-method error bar near its analytic value at these counts.
    CHECK_THAT(est.sigma, WithinAbs(0.0029634573197656043, 3e-4));
  }

  SECTION("vacuum data cannot calibrate") {
    CountHistogram h;
    h.counts = {1000, 0, 0};
    h.shots = 1000;
    CHECK_THROWS_AS(calibrate_alpha(h), InsufficientTwoPhotonEvents);
  }

  SECTION("too few bins rejected") {
    CountHistogram h;
    h.counts = {10, 5};
    h.shots = 15;
    CHECK_THROWS_AS(calibrate_alpha(h), InvalidArgument);
  }
}

TEST_CASE("raster scan agrees with the exact model at every point") {
  HeraldConfig herald;
  HeraldedState h = heralded_signal_state(SqueezingParameter(0.135), herald);
  LossBudget budget;
  DetectorModel det;

  ScanPlan plan;
  plan.amplitudes = {0.0, 0.4, 0.796};
  plan.phases = {0.0, 2.0};
  plan.shots_per_point = 40000;
  plan.seed = 97;

  WignerGrid grid = run_scan(h.state, plan, det, budget);
  REQUIRE(grid.points.size() == 6);

  const FockDensityMatrix lossy =
      signal_loss_chain(h.state.extended(21), budget);
  for (const GridPoint& p : grid.points) {
    CHECK(p.histogram.shots == plan.shots_per_point);
    std::uint64_t total = 0;
    for (std::uint64_t c : p.histogram.counts) total += c;
    CHECK(total == plan.shots_per_point);

    // Exact detection parity vs the independent Wigner evaluation. The
    // saturating fold perturbs the parity by at most twice the clipped
    // weight over pi.
    const DetectionDistribution dist =
        detection_distribution(apply_displacement(lossy, -p.sample.alpha),
                               det);
    const double exact = wigner_exact(lossy, p.sample.alpha);
    const double bound = 2.0 * dist.clipped_mass / std::numbers::pi + 1e-9;
    CHECK(std::abs(wigner_from_distribution(dist) - exact) <= bound);

    // Sampled estimate within five standard errors of the exact parity.
    CHECK(std::abs(p.sample.w - wigner_from_distribution(dist)) <
          5.0 * p.sample.sigma + 1e-12);
  }
}

TEST_CASE("raster scan is deterministic and thread-count independent") {
  HeraldConfig herald;
  HeraldedState h = heralded_signal_state(SqueezingParameter(0.135), herald);
  LossBudget budget;
  DetectorModel det;

  ScanPlan plan;
  plan.amplitudes = {0.0, 0.25, 0.5};
  plan.phases = linspace(0.0, 1.8, 4);
  plan.shots_per_point = 5000;
  plan.seed = 1234;

  WignerGrid a = run_scan(h.state, plan, det, budget, 1);
  WignerGrid b = run_scan(h.state, plan, det, budget, 1);
  WignerGrid c = run_scan(h.state, plan, det, budget, 3);

  REQUIRE(a.points.size() == b.points.size());
  REQUIRE(a.points.size() == c.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    CHECK(a.points[k].histogram.counts == b.points[k].histogram.counts);
    CHECK(a.points[k].histogram.counts == c.points[k].histogram.counts);
    CHECK(a.points[k].seed == c.points[k].seed);
  }

  plan.seed = 1235;
  WignerGrid d = run_scan(h.state, plan, det, budget, 1);
  bool any_differ = false;
  for (std::size_t k = 0; k < a.points.size(); ++k)
    if (a.points[k].histogram.counts != d.points[k].histogram.counts)
      any_differ = true;
  CHECK(any_differ);
}

TEST_CASE("phase average collapses a symmetric grid") {
  HeraldConfig herald;
  HeraldedState h = heralded_signal_state(SqueezingParameter(0.135), herald);
  LossBudget budget;
  DetectorModel det;

  ScanPlan plan;
  plan.amplitudes = {0.0, 0.5};
  plan.phases = ScanPlan::default_plan().phases;
  plan.shots_per_point = 100000;
  plan.seed = 777;

  WignerGrid grid = run_scan(h.state, plan, det, budget);
  RadialProfile profile = phase_average(grid);
  REQUIRE(profile.amplitudes == grid.amplitudes);
  REQUIRE(profile.n_slots == std::vector<int>(2, 10));

  // The heralded state is diagonal, so every phase slot draws from the
  // same distribution: the spread is pure sampling noise.
  const double sigma0 = grid.at(0, 0).sample.sigma;
  CHECK(profile.spread[0] > 0.0);
  CHECK(profile.spread[0] < 5.0 * sigma0);

  const FockDensityMatrix lossy =
      signal_loss_chain(h.state.extended(21), budget);
  const double exact0 = wigner_exact(lossy, Complex(0.0, 0.0));
  CHECK(std::abs(profile.mean_w[0] - exact0) <
        5.0 * sigma0 / std::sqrt(10.0));
}

TEST_CASE("transmission fit") {
  SECTION("noiseless samples recover the model exactly") {
    std::vector<WignerSample> samples;
    int k = 0;
    for (double a : {0.0, 0.2, 0.4, 0.6, 0.796}) {
      WignerSample s;
      s.amp_index = k++;
      s.alpha = Complex(a, 0.0);
      s.w = lossy_single_photon_wigner(a, 0.57);
      s.sigma = 0.0;
      s.shots = 0;
      samples.push_back(s);
    }
    FitResult fit = fit_eta(samples);
    CHECK_THAT(fit.eta_hat, WithinAbs(0.57, 1e-14));
    CHECK(fit.eta_sigma == 0.0);
    CHECK_THAT(fit.chi_square, WithinAbs(0.0, 1e-20));
    CHECK(fit.n_samples == 5);
  }

  SECTION("weighted error propagates in closed form") {
    std::vector<WignerSample> samples;
    double den = 0.0;
    for (double a : {0.1, 0.3, 0.5}) {
      WignerSample s;
      s.alpha = Complex(a, 0.0);
      s.w = lossy_single_photon_wigner(a, 1.0);
      s.sigma = 1e-3;
      s.shots = 100000;
      samples.push_back(s);
      const double g = lossy_single_photon_wigner(a, 1.0) -
                       lossy_single_photon_wigner(a, 0.0);
      den += g * g / 1e-6;
    }
    FitResult fit = fit_eta(samples);
    CHECK_THAT(fit.eta_hat, WithinAbs(1.0, 1e-12));
    CHECK_THAT(fit.eta_sigma, WithinAbs(1.0 / std::sqrt(den), 1e-15));
  }

  SECTION("degenerate designs throw") {
    std::vector<WignerSample> one(1);
    CHECK_THROWS_AS(fit_eta(one), IllConditionedFit);

    std::vector<WignerSample> same(3);
    for (auto& s : same) {
      s.alpha = Complex(0.4, 0.0);
      s.w = 0.1;
      s.sigma = 1e-3;
    }
    CHECK_THROWS_AS(fit_eta(same), IllConditionedFit);

    // A zero-variance sample without a shot count cannot be weighted once
    // any other sample carries noise.
    std::vector<WignerSample> mixed(2);
    mixed[0].alpha = Complex(0.0, 0.0);
    mixed[0].w = 0.3;
    mixed[0].sigma = 0.0;
    mixed[0].shots = 0;
    mixed[1].alpha = Complex(0.5, 0.0);
    mixed[1].w = 0.1;
    mixed[1].sigma = 1e-3;
    mixed[1].shots = 1000;
    CHECK_THROWS_AS(fit_eta(mixed), IllConditionedFit);
  }

  SECTION("sampled scan recovers the loss budget") {
    HeraldConfig herald;
    HeraldedState h = heralded_signal_state(SqueezingParameter(0.135),
                                            herald);
    LossBudget budget;  // product 0.5764419
    DetectorModel det;

    ScanPlan plan;
    plan.amplitudes = linspace(0.0, 0.796, 8);
    plan.phases = linspace(0.0, 5.0, 4);
    plan.shots_per_point = 20000;
    plan.seed = 555;

    WignerGrid grid = run_scan(h.state, plan, det, budget, 2);
    FitResult fit = fit_eta(grid_samples(grid));
    CHECK(fit.eta_sigma > 0.0);
    CHECK(fit.eta_sigma < 0.02);
    CHECK(std::abs(fit.eta_hat - budget.product()) < 4.0 * fit.eta_sigma);
    CHECK(fit.residuals.size() == grid.points.size());
  }
}

TEST_CASE("heralding ratio") {
  RatioEstimate est = heralding_ratio(903, 1556);
  CHECK_THAT(est.value, WithinAbs(0.5803341902313625, 1e-15));
  CHECK_THAT(est.sigma, WithinAbs(0.012510828674113789, 1e-15));

  CHECK_THROWS_AS(heralding_ratio(1, 0), DegenerateInput);
  CHECK_THROWS_AS(heralding_ratio(10, 5), InvalidArgument);

  RatioEstimate full = heralding_ratio(42, 42);
  CHECK(full.value == 1.0);
  CHECK(full.sigma == 0.0);
}
