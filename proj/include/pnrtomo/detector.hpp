#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pnrtomo/errors.hpp"
#include "pnrtomo/fock.hpp"
#include "pnrtomo/random.hpp"
#include "pnrtomo/source.hpp"

namespace pnrtomo {

enum class ClipPolicy {
  saturate,  // events past the resolved range land in the top bin
  discard,   // events past the resolved range are dropped, rest renormalized
};

// Transition-edge sensor style counter: resolves 0..n_max_resolved photons.
struct DetectorModel {
  int n_max_resolved = 5;
  ClipPolicy clip_policy = ClipPolicy::saturate;
  double dark_rate = 0.0;      // probability of one spurious count per shot
  double miscount_rate = 0.0;  // probability a count is binned one too low

  void validate() const {
    if (n_max_resolved < 1)
      throw InvalidArgument("DetectorModel: n_max_resolved must be >= 1");
    if (!(dark_rate >= 0.0 && dark_rate < 1.0))
      throw InvalidArgument("DetectorModel: dark_rate outside [0, 1)");
    if (!(miscount_rate >= 0.0 && miscount_rate < 1.0))
      throw InvalidArgument("DetectorModel: miscount_rate outside [0, 1)");
  }
};

// Threshold above which the clipped weight is flagged as a saturation risk.
inline constexpr double saturation_warning_threshold = 1e-3;

struct DetectionDistribution {
  std::vector<double> probabilities;  // bins 0..n_max_resolved
  double clipped_mass = 0.0;          // weight that fell past the top bin
  bool renormalized = false;          // discard policy was applied

  bool saturation_warning() const {
    return clipped_mass > saturation_warning_threshold;
  }
};

// Outcome distribution of the counter for a given state. The photon-number
// distribution is folded with the dark/miscount perturbations, then clipped
// to the resolved range under the configured policy. Probability is
// conserved exactly under saturate and restored by renormalization under
// discard; clipped_mass always reports the weight past the top bin.
inline DetectionDistribution detection_distribution(
    const FockDensityMatrix& rho, const DetectorModel& det) {
  det.validate();
  std::vector<double> pn = photon_number_distribution(rho);

  if (det.dark_rate > 0.0) {
    std::vector<double> shifted(pn.size() + 1, 0.0);
    for (std::size_t n = 0; n < pn.size(); ++n) {
      shifted[n] += (1.0 - det.dark_rate) * pn[n];
      shifted[n + 1] += det.dark_rate * pn[n];
    }
    pn = std::move(shifted);
  }
  if (det.miscount_rate > 0.0) {
    std::vector<double> shifted(pn.size(), 0.0);
    shifted[0] += pn[0];
    for (std::size_t n = 1; n < pn.size(); ++n) {
      shifted[n] += (1.0 - det.miscount_rate) * pn[n];
      shifted[n - 1] += det.miscount_rate * pn[n];
    }
    pn = std::move(shifted);
  }

  DetectionDistribution out;
  out.probabilities.assign(det.n_max_resolved + 1, 0.0);
  for (std::size_t n = 0; n < pn.size(); ++n) {
    if (int(n) <= det.n_max_resolved) {
      out.probabilities[n] += pn[n];
    } else {
      out.clipped_mass += pn[n];
    }
  }
  if (det.clip_policy == ClipPolicy::saturate) {
    out.probabilities[det.n_max_resolved] += out.clipped_mass;
  } else {
    double kept = std::accumulate(out.probabilities.begin(),
                                  out.probabilities.end(), 0.0);
    if (kept <= 0.0)
      throw DegenerateInput("detection_distribution: all weight discarded");
    for (double& p : out.probabilities) p /= kept;
    out.renormalized = true;
  }
  return out;
}

struct CountHistogram {
  std::vector<std::uint64_t> counts;  // one slot per resolved outcome
  std::uint64_t shots = 0;

  std::vector<double> frequencies() const {
    if (shots == 0)
      throw DegenerateInput("CountHistogram: zero shots");
    std::vector<double> f(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      f[i] = double(counts[i]) / double(shots);
    return f;
  }
};

// Draws a multinomial histogram over the outcome bins.
inline CountHistogram sample_histogram(const std::vector<double>& probs,
                                       std::uint64_t shots,
                                       std::uint64_t seed) {
  if (shots == 0) throw InvalidArgument("sample_histogram: zero shots");
  std::mt19937_64 rng(seed);
  CountHistogram h;
  h.counts = multinomial_sample(rng, probs, shots);
  h.shots = shots;
  return h;
}

inline CountHistogram sample_histogram(const DetectionDistribution& dist,
                                       std::uint64_t shots,
                                       std::uint64_t seed) {
  return sample_histogram(dist.probabilities, shots, seed);
}

struct CoincidenceCounts {
  std::uint64_t n_signal = 0;       // signal-arm singles
  std::uint64_t n_idler = 0;        // herald-arm singles
  std::uint64_t n_coincidence = 0;  // heralded signal detections
  std::uint64_t shots = 0;
};

// Monte Carlo coincidence counting over source shots. Each shot draws a
// pair number, the idler side heralds per the configured mode, and the
// signal side fires if at least one photon survives the collection budget.
inline CoincidenceCounts coincidence_counts(SqueezingParameter zeta,
                                            const HeraldConfig& herald,
                                            const LossBudget& budget,
                                            std::uint64_t shots,
                                            std::uint64_t seed) {
  herald.validate();
  const double eta_s = budget.product();
  std::vector<double> pairs = tmsv_joint_distribution(zeta, herald.max_pairs);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pair_draw(pairs.begin(), pairs.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CoincidenceCounts out;
  out.shots = shots;
  for (std::uint64_t s = 0; s < shots; ++s) {
    const int n = pair_draw(rng);
    const bool idler = unit(rng) < herald_acceptance(n, herald);
    const double p_signal = 1.0 - std::pow(1.0 - eta_s, n);
    const bool signal = unit(rng) < p_signal;
    if (idler) ++out.n_idler;
    if (signal) ++out.n_signal;
    if (idler && signal) ++out.n_coincidence;
  }
  return out;
}

}  // namespace pnrtomo
