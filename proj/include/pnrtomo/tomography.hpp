#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "pnrtomo/detector.hpp"
#include "pnrtomo/errors.hpp"
#include "pnrtomo/fock.hpp"
#include "pnrtomo/optics.hpp"
#include "pnrtomo/random.hpp"
#include "pnrtomo/source.hpp"

namespace pnrtomo {

// Raster of displacement amplitudes and phases. Amplitudes are the
// calibrated post-loss values; the scan displaces the already-lossy state.
struct ScanPlan {
  std::vector<double> amplitudes;  // |alpha| ladder, ascending from >= 0
  std::vector<double> phases;      // radians, strictly increasing in [0, 2pi)
  std::uint64_t shots_per_point = 100000;
  std::uint64_t seed = 20260901;
  double amplitude_scale = 1.0;  // opt-in mode-mismatch rescale

  static ScanPlan default_plan();

  void validate() const {
    if (amplitudes.empty() || phases.empty())
      throw InvalidArgument("ScanPlan: empty amplitude or phase list");
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
      if (!(amplitudes[i] >= 0.0) ||
          (i > 0 && !(amplitudes[i] > amplitudes[i - 1])))
        throw InvalidArgument("ScanPlan: amplitudes must ascend from >= 0");
    }
    for (std::size_t j = 0; j < phases.size(); ++j) {
      if (!(phases[j] >= 0.0 && phases[j] < 2.0 * std::numbers::pi) ||
          (j > 0 && !(phases[j] > phases[j - 1])))
        throw InvalidArgument(
            "ScanPlan: phases must ascend within [0, 2 pi)");
    }
    if (shots_per_point == 0)
      throw InvalidArgument("ScanPlan: shots_per_point must be positive");
    if (!(amplitude_scale > 0.0))
      throw InvalidArgument("ScanPlan: amplitude_scale must be positive");
  }
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 2) throw InvalidArgument("linspace: need at least two points");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * double(i) / double(n - 1);
  return v;
}

inline ScanPlan ScanPlan::default_plan() {
  ScanPlan plan;
  plan.amplitudes = linspace(0.0, 0.796, 20);
  plan.phases.resize(10);
  for (int j = 0; j < 10; ++j)
    plan.phases[j] = 2.0 * std::numbers::pi * double(j) / 10.0;
  plan.shots_per_point = 100000;
  plan.seed = 20260901;
  return plan;
}

// Displaced-parity estimate from sampled counts: w = (1/pi) sum (-1)^n f_n.
// Bins past the resolved range were folded by the detector model before
// sampling, so the sum runs over the histogram as recorded.
inline double wigner_from_histogram(const CountHistogram& hist) {
  std::vector<double> f = hist.frequencies();
  double mu = 0.0;
  for (std::size_t n = 0; n < f.size(); ++n)
    mu += (n % 2 == 0 ? 1.0 : -1.0) * f[n];
  return mu / std::numbers::pi;
}

// Infinite-shot limit of the same estimator.
inline double wigner_from_distribution(const DetectionDistribution& dist) {
  double mu = 0.0;
  for (std::size_t n = 0; n < dist.probabilities.size(); ++n)
    mu += (n % 2 == 0 ? 1.0 : -1.0) * dist.probabilities[n];
  return mu / std::numbers::pi;
}

// Standard error of wigner_from_histogram. The parity outcome is +-1 per
// shot, so Var = (1 - mu^2) / shots with the population estimate of mu.
inline double estimator_sigma(const CountHistogram& hist) {
  std::vector<double> f = hist.frequencies();
  double mu = 0.0;
  for (std::size_t n = 0; n < f.size(); ++n)
    mu += (n % 2 == 0 ? 1.0 : -1.0) * f[n];
  double var = std::max(0.0, 1.0 - mu * mu);
  return std::sqrt(var / double(hist.shots)) / std::numbers::pi;
}

struct AmplitudeEstimate {
  double value = 0.0;  // |alpha| seen by the detector (post-loss)
  double sigma = 0.0;
  std::uint64_t n_one = 0;
  std::uint64_t n_two = 0;
  std::uint64_t shots = 0;
};

// Poisson-pair calibration |alpha| = sqrt(2 P(2) / P(1)). The exponential
// prefactor cancels in the ratio, so detector-side loss rescales the
// estimate but never biases the ratio. The error bar follows from the
// multinomial delta method including the P(1)-P(2) covariance.
inline AmplitudeEstimate calibrate_alpha(const CountHistogram& hist) {
  if (hist.counts.size() < 3)
    throw InvalidArgument("calibrate_alpha: need bins up to two photons");
  if (hist.shots == 0) throw DegenerateInput("calibrate_alpha: zero shots");
  const std::uint64_t c1 = hist.counts[1];
  const std::uint64_t c2 = hist.counts[2];
  if (c1 == 0 || c2 == 0)
    throw InsufficientTwoPhotonEvents(
        "calibrate_alpha: empty one- or two-photon bin");
  const double n = double(hist.shots);
  const double p1 = double(c1) / n;
  const double p2 = double(c2) / n;
  AmplitudeEstimate est;
  est.value = std::sqrt(2.0 * p2 / p1);
  est.sigma = 0.5 * est.value * std::sqrt((1.0 / p1 + 1.0 / p2) / n);
  est.n_one = c1;
  est.n_two = c2;
  est.shots = hist.shots;
  return est;
}

// Closed-form model of the scanned state: a single photon through
// transmission eta, displaced parity read at radius a:
//   W(a; eta) = (1/pi) e^{-2 a^2} [ eta (4 a^2 - 1) + (1 - eta) ].
inline double lossy_single_photon_wigner(double alpha_abs, double eta) {
  const double a2 = alpha_abs * alpha_abs;
  return std::exp(-2.0 * a2) *
         (eta * (4.0 * a2 - 1.0) + (1.0 - eta)) / std::numbers::pi;
}

struct WignerSample {
  int amp_index = 0;
  int phase_index = 0;
  Complex alpha;        // post-loss displacement actually applied
  double w = 0.0;       // displaced-parity estimate
  double sigma = 0.0;   // standard error of w
  std::uint64_t shots = 0;
};

struct GridPoint {
  WignerSample sample;
  CountHistogram histogram;
  std::uint64_t seed = 0;      // per-point stream seed
  double clipped_mass = 0.0;   // detector weight past the resolved range
  bool saturation_warning = false;
};

struct WignerGrid {
  std::vector<double> amplitudes;
  std::vector<double> phases;
  std::uint64_t shots_per_point = 0;
  std::uint64_t master_seed = 0;
  double amplitude_scale = 1.0;
  std::vector<GridPoint> points;  // amplitude-major order

  const GridPoint& at(int amp_index, int phase_index) const {
    return points[std::size_t(amp_index) * phases.size() +
                  std::size_t(phase_index)];
  }
};

// Full raster scan of the heralded state. The collection loss is applied
// once up front; every grid point probes phase-space point alpha by
// displacing the lossy state by -alpha, folds the detector model, and
// samples a histogram on a per-point seed derived from the master seed.
// Results are identical for any thread count.
inline WignerGrid run_scan(const FockDensityMatrix& heralded_state,
                           const ScanPlan& plan, const DetectorModel& det,
                           const LossBudget& budget, int threads = 1) {
  plan.validate();
  det.validate();
  if (threads < 1) throw InvalidArgument("run_scan: threads must be >= 1");

  const int work_dim = std::max(heralded_state.dim(), 21);
  const FockDensityMatrix lossy =
      signal_loss_chain(heralded_state.extended(work_dim), budget);

  WignerGrid grid;
  grid.amplitudes = plan.amplitudes;
  grid.phases = plan.phases;
  grid.shots_per_point = plan.shots_per_point;
  grid.master_seed = plan.seed;
  grid.amplitude_scale = plan.amplitude_scale;
  const std::size_t n_amp = plan.amplitudes.size();
  const std::size_t n_phase = plan.phases.size();
  grid.points.resize(n_amp * n_phase);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    try {
      for (std::size_t idx = next.fetch_add(1); idx < grid.points.size();
           idx = next.fetch_add(1)) {
        if (failed.load()) return;
        const int i = int(idx / n_phase);
        const int j = int(idx % n_phase);
        const double radius = plan.amplitudes[i] * plan.amplitude_scale;
        const Complex alpha = std::polar(radius, plan.phases[j]);
        const FockDensityMatrix displaced = apply_displacement(lossy, -alpha);
        const DetectionDistribution dist =
            detection_distribution(displaced, det);
        GridPoint& point = grid.points[idx];
        point.seed = derive_seed(plan.seed, std::uint64_t(i),
                                 std::uint64_t(j));
        point.histogram =
            sample_histogram(dist, plan.shots_per_point, point.seed);
        point.clipped_mass = dist.clipped_mass;
        point.saturation_warning = dist.saturation_warning();
        point.sample.amp_index = i;
        point.sample.phase_index = j;
        point.sample.alpha = alpha;
        point.sample.w = wigner_from_histogram(point.histogram);
        point.sample.sigma = estimator_sigma(point.histogram);
        point.sample.shots = plan.shots_per_point;
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      failed.store(true);
      if (failure.empty()) failure = e.what();
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw Error("run_scan: " + failure);
  return grid;
}

struct RadialProfile {
  std::vector<double> amplitudes;
  std::vector<double> mean_w;
  std::vector<double> spread;  // sample standard deviation over the slots
  std::vector<int> n_slots;
};

// Collapses the grid over phase. Each amplitude row averages its phase
// slots; the quoted spread is the Bessel-corrected standard deviation over
// the slots, which for the zero-amplitude row is exactly the spread over
// repeated identical datasets.
inline RadialProfile phase_average(const WignerGrid& grid) {
  RadialProfile profile;
  const std::size_t n_amp = grid.amplitudes.size();
  const std::size_t n_phase = grid.phases.size();
  profile.amplitudes = grid.amplitudes;
  profile.mean_w.resize(n_amp);
  profile.spread.resize(n_amp);
  profile.n_slots.assign(n_amp, int(n_phase));
  for (std::size_t i = 0; i < n_amp; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n_phase; ++j)
      mean += grid.at(int(i), int(j)).sample.w;
    mean /= double(n_phase);
    double ss = 0.0;
    for (std::size_t j = 0; j < n_phase; ++j) {
      const double d = grid.at(int(i), int(j)).sample.w - mean;
      ss += d * d;
    }
    profile.mean_w[i] = mean;
    profile.spread[i] =
        n_phase > 1 ? std::sqrt(ss / double(n_phase - 1)) : 0.0;
  }
  return profile;
}

struct FitResult {
  double eta_hat = 0.0;
  double eta_sigma = 0.0;
  double chi_square = 0.0;
  std::size_t n_samples = 0;
  std::vector<double> residuals;  // y - model, sample order
};

// Weighted linear least squares in the single parameter eta. The model is
// affine in eta: W = W0 + eta (W1 - W0) with W0 the vacuum profile and W1
// the ideal single-photon profile, so the solution is closed form. Samples
// with zero quoted error get a variance floor of 1/shots; if every sample
// is noiseless the fit degenerates to unweighted least squares.
inline FitResult fit_eta(const std::vector<WignerSample>& samples) {
  if (samples.size() < 2)
    throw IllConditionedFit("fit_eta: need at least two samples");
  double amp_min = std::abs(samples.front().alpha);
  double amp_max = amp_min;
  for (const WignerSample& s : samples) {
    const double a = std::abs(s.alpha);
    amp_min = std::min(amp_min, a);
    amp_max = std::max(amp_max, a);
  }
  if (!(amp_max - amp_min > 1e-12))
    throw IllConditionedFit("fit_eta: all samples at one amplitude");

  bool any_noise = false;
  for (const WignerSample& s : samples)
    if (s.sigma > 0.0 || s.shots > 0) any_noise = true;

  double num = 0.0, den = 0.0;
  for (const WignerSample& s : samples) {
    const double a = std::abs(s.alpha);
    const double w0 = lossy_single_photon_wigner(a, 0.0);
    const double g = lossy_single_photon_wigner(a, 1.0) - w0;
    double weight = 1.0;
    if (any_noise) {
      double var = s.sigma * s.sigma;
      if (var <= 0.0) {
        if (s.shots == 0)
          throw IllConditionedFit(
              "fit_eta: zero-variance sample without shot count");
        var = 1.0 / double(s.shots);
      }
      weight = 1.0 / var;
    }
    num += weight * g * (s.w - w0);
    den += weight * g * g;
  }
  if (!(den > 0.0))
    throw IllConditionedFit("fit_eta: degenerate design");

  FitResult fit;
  fit.eta_hat = std::clamp(num / den, 0.0, 1.0);
  fit.eta_sigma = any_noise ? 1.0 / std::sqrt(den) : 0.0;
  fit.n_samples = samples.size();
  fit.residuals.reserve(samples.size());
  for (const WignerSample& s : samples) {
    const double model =
        lossy_single_photon_wigner(std::abs(s.alpha), fit.eta_hat);
    const double r = s.w - model;
    fit.residuals.push_back(r);
    double var = s.sigma * s.sigma;
    if (var <= 0.0 && s.shots > 0) var = 1.0 / double(s.shots);
    if (var > 0.0) fit.chi_square += r * r / var;
  }
  return fit;
}

inline std::vector<WignerSample> grid_samples(const WignerGrid& grid) {
  std::vector<WignerSample> samples;
  samples.reserve(grid.points.size());
  for (const GridPoint& p : grid.points) samples.push_back(p.sample);
  return samples;
}

struct RatioEstimate {
  double value = 0.0;
  double sigma = 0.0;
};

// Heralding ratio N_c / N_i with a binomial error bar.
inline RatioEstimate heralding_ratio(std::uint64_t n_coincidence,
                                     std::uint64_t n_idler) {
  if (n_idler == 0)
    throw DegenerateInput("heralding_ratio: zero idler counts");
  if (n_coincidence > n_idler)
    throw InvalidArgument("heralding_ratio: coincidences exceed idler counts");
  RatioEstimate est;
  est.value = double(n_coincidence) / double(n_idler);
  est.sigma =
      std::sqrt(est.value * (1.0 - est.value) / double(n_idler));
  return est;
}

}  // namespace pnrtomo
