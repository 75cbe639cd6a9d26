#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "pnrtomo/errors.hpp"
#include "pnrtomo/fock.hpp"

namespace pnrtomo {

// Multiplicative transmission budget of the collection path.
struct LossBudget {
  double eta_tes = 0.71;  // detector quantum efficiency
  double eta_ot = 0.93;   // optical transmission to the detector
  double eta_bs = 0.97;   // displacement beamsplitter reflectivity
  double eta_ofc = 0.90;  // interference visibility factor

  double product() const {
    for (double eta : {eta_tes, eta_ot, eta_bs, eta_ofc})
      if (!(eta >= 0.0 && eta <= 1.0))
        throw InvalidArgument("LossBudget: efficiency outside [0, 1]");
    return eta_tes * eta_ot * eta_bs * eta_ofc;
  }
};

// Displacement implemented by a highly asymmetric beamsplitter fed with a
// strong local oscillator. reflectivity_sq is the signal survival r^2; the
// effective displacement is t * lo_amplitude with t = sqrt(1 - r^2).
struct BeamsplitterSpec {
  double reflectivity_sq = 0.97;
  Complex lo_amplitude = 0.0;

  double transmissivity_sq() const { return 1.0 - reflectivity_sq; }
  Complex effective_displacement() const {
    return std::sqrt(transmissivity_sq()) * lo_amplitude;
  }
  void validate() const {
    if (!(reflectivity_sq > 0.0 && reflectivity_sq < 1.0))
      throw InvalidArgument("BeamsplitterSpec: reflectivity_sq outside (0, 1)");
  }
};

namespace detail {

inline double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int j = 1; j <= k; ++j) c *= double(n - k + j) / double(j);
  return c;
}

}  // namespace detail

// Pure-loss (binomial) channel of transmission eta via its Kraus operators
// K_k |n> = sqrt(C(n,k) (1-eta)^k eta^(n-k)) |n-k>:
//   rho'_{m,m'} = sum_k sqrt(C(m+k,k) C(m'+k,k)) (1-eta)^k eta^((m+m')/2)
//                 rho_{m+k,m'+k}.
// Trace-preserving on the truncated space; no weight crosses the cutoff.
inline FockDensityMatrix apply_loss(const FockDensityMatrix& rho, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw InvalidArgument("apply_loss: eta outside [0, 1]");
  const int d = rho.dim();
  if (eta == 1.0) return rho;
  ComplexMatrix out = ComplexMatrix::Zero(d, d);
  for (int m = 0; m < d; ++m) {
    for (int mp = m; mp < d; ++mp) {
      Complex acc = 0.0;
      const int kmax = d - 1 - mp;
      for (int k = 0; k <= kmax; ++k) {
        double c = std::sqrt(detail::binomial_coefficient(m + k, k) *
                             detail::binomial_coefficient(mp + k, k)) *
                   std::pow(1.0 - eta, k) *
                   std::pow(eta, 0.5 * double(m + mp));
        acc += c * rho.element(m + k, mp + k);
      }
      out(m, mp) = acc;
      if (mp != m) out(mp, m) = std::conj(acc);
    }
  }
  return FockDensityMatrix::from_matrix(std::move(out), rho.leaked_weight());
}

// Unitary displacement channel D(alpha) rho D^+(alpha), evaluated on the
// eigenvectors of rho inside the enlarged workspace and cropped back to the
// input truncation. Cropped weight is renormalized away and reported in
// leaked_weight(); more than tol::displacement_leak of it is an error.
inline FockDensityMatrix apply_displacement(const FockDensityMatrix& rho,
                                            Complex alpha) {
  if (std::abs(alpha) == 0.0) return rho;
  const int d = rho.dim();
  const int w = detail::displacement_workspace(d, alpha);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho.matrix());
  if (es.info() != Eigen::Success)
    throw Error("apply_displacement: eigendecomposition failed");
  ComplexMatrix out = ComplexMatrix::Zero(d, d);
  double kept = 0.0;
  for (int j = 0; j < d; ++j) {
    const double weight = std::max(0.0, es.eigenvalues()(j));
    if (weight < 1e-16) continue;
    ComplexVector psi = ComplexVector::Zero(w);
    psi.head(d) = es.eigenvectors().col(j);
    ComplexVector phi = detail::displaced_vector(psi, alpha, -1.0);
    ComplexVector cropped = phi.head(d);
    kept += weight * cropped.squaredNorm();
    out.noalias() += weight * (cropped * cropped.adjoint());
  }
  const double deficit = std::max(0.0, 1.0 - kept);
  if (deficit > tol::displacement_leak)
    throw TruncationError("apply_displacement: cropped weight " +
                          std::to_string(deficit));
  out /= kept;
  return FockDensityMatrix::from_matrix(std::move(out),
                                        rho.leaked_weight() + deficit);
}

namespace detail {

// Coherent-state coefficients <n|beta> for n < dim, plus the cut tail mass.
inline std::pair<ComplexVector, double> coherent_coefficients(Complex beta,
                                                              int dim) {
  ComplexVector c(dim);
  c(0) = 1.0;
  for (int n = 1; n < dim; ++n) c(n) = c(n - 1) * beta / std::sqrt(double(n));
  c *= std::exp(-0.5 * std::norm(beta));
  double tail = std::max(0.0, 1.0 - c.squaredNorm());
  return {std::move(c), tail};
}

}  // namespace detail

// Exact finite-reflectivity model of the displacement stage: the signal and
// a coherent local oscillator |beta> interfere on the beamsplitter
// U = exp(theta (a^+ b - a b^+)), cos^2(theta) = r^2, and the oscillator arm
// is traced out. The two-mode unitary is block diagonal in total photon
// number, so each block is exponentiated independently and every signal
// eigenvector is evolved jointly with the oscillator before the partial
// trace. Equals D(t beta) applied after a loss of r^2 on the signal.
inline FockDensityMatrix bs_displacement_exact(const FockDensityMatrix& rho,
                                               const BeamsplitterSpec& bs) {
  bs.validate();
  const int d = rho.dim();
  const Complex beta = bs.lo_amplitude;
  const double theta = std::atan2(std::sqrt(bs.transmissivity_sq()),
                                  std::sqrt(bs.reflectivity_sq));
  const Complex alpha_eff = bs.effective_displacement();

  // Signal workspace mirrors the displacement policy; the oscillator space
  // must hold the Poisson bulk of |beta|^2 photons.
  const int dw = detail::displacement_workspace(d, alpha_eff);
  const double mu = std::norm(beta);
  const int da =
      std::max(d, int(std::ceil(mu + 12.0 * std::sqrt(mu + 1.0) + 20.0)));
  auto [lo, lo_tail] = detail::coherent_coefficients(beta, da);
  if (lo_tail > 1e-8)
    throw TruncationError("bs_displacement_exact: oscillator truncation");

  // Per-block mixing unitaries. Block N couples (n_s, N - n_s); the
  // generator theta (a^+ b - a b^+) restricted to it is tridiagonal.
  const int n_total = dw + da - 1;
  std::vector<ComplexMatrix> blocks(n_total);
  for (int big_n = 0; big_n < n_total; ++big_n) {
    const int lo_s = std::max(0, big_n - (da - 1));
    const int hi_s = std::min(big_n, dw - 1);
    const int width = hi_s - lo_s + 1;
    if (width <= 0) continue;
    ComplexMatrix h = ComplexMatrix::Zero(width, width);
    for (int j = 0; j + 1 < width; ++j) {
      const int ns = lo_s + j;
      const double g = theta * std::sqrt(double(ns + 1) * double(big_n - ns));
      // i * generator is Hermitian; U = exp(-i (i G)).
      h(j + 1, j) = Complex(0.0, 1.0) * g;
      h(j, j + 1) = Complex(0.0, -1.0) * g;
    }
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    ComplexVector phase(width);
    for (int k = 0; k < width; ++k)
      phase(k) = std::polar(1.0, -es.eigenvalues()(k));
    blocks[big_n] =
        es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
  }

  Eigen::SelfAdjointEigenSolver<ComplexMatrix> rho_es(rho.matrix());
  if (rho_es.info() != Eigen::Success)
    throw Error("bs_displacement_exact: eigendecomposition failed");

  ComplexMatrix out = ComplexMatrix::Zero(dw, dw);
  ComplexMatrix joint(dw, da);
  for (int j = 0; j < d; ++j) {
    const double weight = std::max(0.0, rho_es.eigenvalues()(j));
    if (weight < 1e-16) continue;
    joint.setZero();
    for (int ns = 0; ns < d; ++ns)
      joint.row(ns) = rho_es.eigenvectors()(ns, j) * lo.transpose();
    for (int big_n = 0; big_n < n_total; ++big_n) {
      const int lo_s = std::max(0, big_n - (da - 1));
      const int hi_s = std::min(big_n, dw - 1);
      const int width = hi_s - lo_s + 1;
      if (width <= 0 || blocks[big_n].size() == 0) continue;
      ComplexVector x(width);
      for (int k = 0; k < width; ++k)
        x(k) = joint(lo_s + k, big_n - (lo_s + k));
      ComplexVector y = blocks[big_n] * x;
      for (int k = 0; k < width; ++k)
        joint(lo_s + k, big_n - (lo_s + k)) = y(k);
    }
    out.noalias() += weight * (joint * joint.adjoint());
  }

  ComplexMatrix cropped = out.topLeftCorner(d, d);
  const double kept = cropped.trace().real();
  const double deficit = std::max(0.0, 1.0 - kept);
  if (deficit > tol::displacement_leak)
    throw TruncationError("bs_displacement_exact: cropped weight " +
                          std::to_string(deficit));
  cropped /= kept;
  ComplexMatrix sym = 0.5 * (cropped + cropped.adjoint());
  return FockDensityMatrix::from_matrix(
      std::move(sym), rho.leaked_weight() + lo_tail + deficit);
}

// Max absolute elementwise difference between displacing after loss and
// losing after a reduced displacement:
//   L_eta(D(beta) rho D^+) vs D(sqrt(eta) beta) L_eta(rho) D^+.
inline double commute_loss_displacement_check(const FockDensityMatrix& rho,
                                              Complex beta, double eta) {
  FockDensityMatrix lhs = apply_loss(apply_displacement(rho, beta), eta);
  FockDensityMatrix rhs =
      apply_displacement(apply_loss(rho, eta), std::sqrt(eta) * beta);
  return (lhs.matrix() - rhs.matrix()).cwiseAbs().maxCoeff();
}

}  // namespace pnrtomo
