#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pnrtomo/errors.hpp"
#include "pnrtomo/fock.hpp"
#include "pnrtomo/optics.hpp"

namespace pnrtomo {

// Interaction strength of the two-mode squeezer; pair number is geometric,
// P(n) = (1 - zeta^2) zeta^(2n).
struct SqueezingParameter {
  double value = 0.0;

  explicit SqueezingParameter(double zeta) : value(zeta) {
    if (!(zeta >= 0.0 && zeta < 1.0))
      throw InvalidArgument("SqueezingParameter: zeta outside [0, 1)");
  }
};

enum class HeraldMode {
  pnr_exact_one,  // idler detector resolves and demands exactly one count
  threshold,      // idler detector fires on any nonzero count
};

struct HeraldConfig {
  HeraldMode mode = HeraldMode::pnr_exact_one;
  double idler_efficiency = 1.0;
  int max_pairs = 4;  // photon-number support kept for the joint state

  void validate() const {
    if (!(idler_efficiency >= 0.0 && idler_efficiency <= 1.0))
      throw InvalidArgument("HeraldConfig: idler_efficiency outside [0, 1]");
    if (max_pairs < 1)
      throw InvalidArgument("HeraldConfig: max_pairs must be >= 1");
  }
};

// P(n pairs) for n = 0..max_pairs, renormalized over the kept support.
inline std::vector<double> tmsv_joint_distribution(SqueezingParameter zeta,
                                                   int max_pairs) {
  if (max_pairs < 0)
    throw InvalidArgument("tmsv_joint_distribution: max_pairs < 0");
  const double z2 = zeta.value * zeta.value;
  std::vector<double> p(max_pairs + 1);
  double w = 1.0 - z2;
  double total = 0.0;
  for (int n = 0; n <= max_pairs; ++n) {
    p[n] = w;
    total += w;
    w *= z2;
  }
  for (double& x : p) x /= total;
  return p;
}

// Probability that the idler detector heralds, given n pairs reached it
// before an idler transmission of eta_i.
inline double herald_acceptance(int n, const HeraldConfig& cfg) {
  if (n <= 0) return 0.0;
  const double eta = cfg.idler_efficiency;
  switch (cfg.mode) {
    case HeraldMode::pnr_exact_one:
      return double(n) * eta * std::pow(1.0 - eta, n - 1);
    case HeraldMode::threshold:
      return 1.0 - std::pow(1.0 - eta, n);
  }
  throw InvalidArgument("herald_acceptance: unknown mode");
}

struct HeraldedState {
  FockDensityMatrix state;       // signal state conditioned on the herald
  double herald_probability;     // per-shot probability of the herald
};

// Signal state conditioned on the idler herald. The joint pair-number
// distribution is geometric; conditioning reweights it by the idler
// acceptance, so the heralded signal is diagonal in the number basis.
inline HeraldedState heralded_signal_state(SqueezingParameter zeta,
                                           const HeraldConfig& cfg) {
  cfg.validate();
  std::vector<double> pairs = tmsv_joint_distribution(zeta, cfg.max_pairs);
  std::vector<double> joint(pairs.size());
  double herald_prob = 0.0;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    double accept = (n == 0) ? 0.0 : herald_acceptance(int(n), cfg);
    joint[n] = pairs[n] * accept;
    herald_prob += joint[n];
  }
  if (herald_prob <= 0.0)
    throw ZeroProbabilityHerald("heralded_signal_state: herald never fires");
  for (double& x : joint) x /= herald_prob;
  int dim = std::max<int>(2, cfg.max_pairs + 1);
  return {FockDensityMatrix::diagonal_mixture(joint, dim), herald_prob};
}

// Collapses the full collection budget into one binomial loss application;
// valid because loss channels compose multiplicatively.
inline FockDensityMatrix signal_loss_chain(const FockDensityMatrix& rho,
                                           const LossBudget& budget) {
  return apply_loss(rho, budget.product());
}

}  // namespace pnrtomo
