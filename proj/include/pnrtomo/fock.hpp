#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pnrtomo/errors.hpp"

namespace pnrtomo {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Phase-space convention: alpha = (q + i p) / sqrt(2), hbar = 1.
inline Complex amplitude_from_quadratures(double q, double p) {
  return Complex(q, p) / std::numbers::sqrt2;
}

inline std::pair<double, double> quadratures_from_amplitude(Complex alpha) {
  return {std::numbers::sqrt2 * alpha.real(),
          std::numbers::sqrt2 * alpha.imag()};
}

namespace tol {
inline constexpr double hermiticity = 1e-12;
inline constexpr double trace = 1e-10;
inline constexpr double positivity = -1e-10;
inline constexpr double displacement_leak = 1e-6;
}  // namespace tol

// Density matrix on the truncated number basis {|0>, ..., |dim-1>}.
// Construction enforces Hermiticity, unit trace, and positivity; channels
// that crop weight past the cutoff report it through leaked_weight().
class FockDensityMatrix {
 public:
  static FockDensityMatrix from_matrix(ComplexMatrix rho,
                                       double leaked_weight = 0.0) {
    validate_matrix(rho);
    return FockDensityMatrix(std::move(rho), leaked_weight);
  }

  static FockDensityMatrix fock_state(int n, int dim) {
    if (dim < 2) throw InvalidArgument("fock_state: dim must be >= 2");
    if (n < 0 || n >= dim)
      throw InvalidArgument("fock_state: level outside truncation");
    ComplexMatrix rho = ComplexMatrix::Zero(dim, dim);
    rho(n, n) = 1.0;
    return FockDensityMatrix(std::move(rho), 0.0);
  }

  static FockDensityMatrix vacuum_state(int dim) { return fock_state(0, dim); }

  // Truncated coherent state, renormalized; the cut tail is reported as leak.
  static FockDensityMatrix coherent_state(Complex alpha, int dim) {
    if (dim < 2) throw InvalidArgument("coherent_state: dim must be >= 2");
    ComplexVector c(dim);
    c(0) = 1.0;
    for (int n = 1; n < dim; ++n) c(n) = c(n - 1) * alpha / std::sqrt(double(n));
    double mu = std::norm(alpha);
    double scale = std::exp(-0.5 * mu);
    c *= scale;
    double kept = c.squaredNorm();
    double tail = std::max(0.0, 1.0 - kept);
    if (kept <= 0.0)
      throw TruncationError("coherent_state: truncation keeps no weight");
    c /= std::sqrt(kept);
    ComplexMatrix rho = c * c.adjoint();
    return FockDensityMatrix(std::move(rho), tail);
  }

  // Mixed state diagonal in the number basis. Populations are normalized.
  static FockDensityMatrix diagonal_mixture(const std::vector<double>& pops,
                                            int dim = 0) {
    if (pops.empty()) throw InvalidArgument("diagonal_mixture: empty");
    int d = std::max<int>(dim, std::max<std::size_t>(pops.size(), 2));
    double total = 0.0;
    for (double p : pops) {
      if (p < -tol::trace || !std::isfinite(p))
        throw InvalidArgument("diagonal_mixture: negative population");
      total += p;
    }
    if (total <= 0.0) throw InvalidArgument("diagonal_mixture: zero weight");
    ComplexMatrix rho = ComplexMatrix::Zero(d, d);
    for (std::size_t n = 0; n < pops.size(); ++n)
      rho(int(n), int(n)) = std::max(0.0, pops[n]) / total;
    return FockDensityMatrix(std::move(rho), 0.0);
  }

  int dim() const { return int(rho_.rows()); }
  const ComplexMatrix& matrix() const { return rho_; }
  Complex element(int m, int n) const { return rho_(m, n); }

  // Probability weight lost to truncation over the state's history.
  double leaked_weight() const { return leaked_; }

  // Zero-padded embedding into a larger truncation.
  FockDensityMatrix extended(int new_dim) const {
    if (new_dim < dim())
      throw InvalidArgument("extended: new_dim smaller than current dim");
    if (new_dim == dim()) return *this;
    ComplexMatrix out = ComplexMatrix::Zero(new_dim, new_dim);
    out.topLeftCorner(dim(), dim()) = rho_;
    return FockDensityMatrix(std::move(out), leaked_);
  }

  // Re-checks the class invariants; throws InvalidArgument on violation.
  void validate() const { validate_matrix(rho_); }

 private:
  FockDensityMatrix(ComplexMatrix rho, double leaked)
      : rho_(std::move(rho)), leaked_(std::max(0.0, leaked)) {}

  static void validate_matrix(const ComplexMatrix& rho) {
    if (rho.rows() != rho.cols() || rho.rows() < 2)
      throw InvalidArgument("density matrix: must be square with dim >= 2");
    double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (!(herm <= tol::hermiticity))
      throw InvalidArgument("density matrix: hermiticity defect " +
                            std::to_string(herm));
    double tr_err = std::abs(rho.trace() - Complex(1.0, 0.0));
    if (!(tr_err <= tol::trace))
      throw InvalidArgument("density matrix: trace defect " +
                            std::to_string(tr_err));
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho,
                                                    Eigen::EigenvaluesOnly);
    double min_eig = es.eigenvalues().minCoeff();
    if (!(min_eig >= tol::positivity))
      throw InvalidArgument("density matrix: negative eigenvalue " +
                            std::to_string(min_eig));
  }

  ComplexMatrix rho_;
  double leaked_ = 0.0;
};

// Annihilation operator on the truncated basis.
inline ComplexMatrix annihilation_matrix(int dim) {
  if (dim < 2) throw InvalidArgument("annihilation_matrix: dim must be >= 2");
  ComplexMatrix a = ComplexMatrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}

namespace detail {

// Enlarged workspace in which displacements are exponentiated before the
// result is cropped back: max(2*dim, dim + ceil(8*|alpha|^2) + 10).
inline int displacement_workspace(int dim, Complex alpha) {
  double mu = std::norm(alpha);
  int padded = dim + int(std::ceil(8.0 * mu)) + 10;
  return std::max(2 * dim, padded);
}

// The generator i(alpha a^+ - alpha^* a) equals Phi (|alpha| T) Phi^+ with
// T the real symmetric tridiagonal matrix whose subdiagonal is sqrt(m+1)
// and Phi = diag(exp(i m psi)), psi = arg(i alpha). The eigensystem of T
// depends only on the workspace size, so it is cached per thread.
struct TridiagonalBasis {
  RealVector eigenvalues;
  RealMatrix eigenvectors;
};

inline const TridiagonalBasis& displacement_basis(int workspace) {
  thread_local std::map<int, TridiagonalBasis> cache;
  auto it = cache.find(workspace);
  if (it != cache.end()) return it->second;
  if (cache.size() > 64) cache.clear();
  RealVector diag = RealVector::Zero(workspace);
  RealVector sub(workspace - 1);
  for (int m = 0; m + 1 < workspace; ++m) sub(m) = std::sqrt(double(m + 1));
  Eigen::SelfAdjointEigenSolver<RealMatrix> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  TridiagonalBasis basis{es.eigenvalues(), es.eigenvectors()};
  return cache.emplace(workspace, std::move(basis)).first->second;
}

// Applies D(alpha) (sign=-1) or D^+(alpha) (sign=+1) to a workspace-sized
// vector using the cached basis: Phi V exp(sign * i |alpha| Lambda) V^T Phi^+.
inline ComplexVector displaced_vector(const ComplexVector& psi, Complex alpha,
                                      double sign) {
  const int w = int(psi.size());
  if (std::abs(alpha) == 0.0) return psi;
  const TridiagonalBasis& basis = displacement_basis(w);
  const double r = std::abs(alpha);
  const double psi_phase = std::arg(Complex(0.0, 1.0) * alpha);
  ComplexVector x(w);
  for (int m = 0; m < w; ++m)
    x(m) = std::polar(1.0, -psi_phase * m) * psi(m);
  ComplexVector y = basis.eigenvectors.transpose() * x;
  for (int k = 0; k < w; ++k)
    y(k) *= std::polar(1.0, sign * r * basis.eigenvalues(k));
  ComplexVector z = basis.eigenvectors * y;
  for (int m = 0; m < w; ++m) z(m) *= std::polar(1.0, psi_phase * m);
  return z;
}

// Rounds the workspace up so repeated nearby amplitudes share one cached
// eigensystem instead of populating the cache with every distinct size.
inline int bucketed_workspace(int dim, Complex alpha) {
  int w = displacement_workspace(dim, alpha);
  constexpr int bucket = 32;
  return ((w + bucket - 1) / bucket) * bucket;
}

}  // namespace detail

// Matrix of D(alpha) = exp(alpha a^+ - alpha^* a) on the truncated basis,
// computed in the enlarged workspace and cropped. The vacuum column must
// retain all but tol::displacement_leak of its norm.
inline ComplexMatrix displacement_matrix(Complex alpha, int dim) {
  if (dim < 2) throw InvalidArgument("displacement_matrix: dim must be >= 2");
  const int w = detail::displacement_workspace(dim, alpha);
  if (std::abs(alpha) == 0.0) return ComplexMatrix::Identity(dim, dim);
  const detail::TridiagonalBasis& basis = detail::displacement_basis(w);
  const double r = std::abs(alpha);
  const double psi = std::arg(Complex(0.0, 1.0) * alpha);
  ComplexVector phase(w);
  for (int k = 0; k < w; ++k) phase(k) = std::polar(1.0, -r * basis.eigenvalues(k));
  ComplexMatrix core =
      basis.eigenvectors * phase.asDiagonal() * basis.eigenvectors.transpose();
  ComplexMatrix d(dim, dim);
  for (int m = 0; m < dim; ++m)
    for (int n = 0; n < dim; ++n)
      d(m, n) = std::polar(1.0, psi * double(m - n)) * core(m, n);
  double vac_deficit = 1.0 - d.col(0).squaredNorm();
  if (vac_deficit > tol::displacement_leak)
    throw TruncationError("displacement_matrix: vacuum column loses " +
                          std::to_string(vac_deficit));
  return d;
}

// Tr[rho (-1)^N], clamped to [-1, 1].
inline double parity_expectation(const FockDensityMatrix& rho) {
  double parity = 0.0;
  for (int n = 0; n < rho.dim(); ++n)
    parity += (n % 2 == 0 ? 1.0 : -1.0) * rho.element(n, n).real();
  return std::clamp(parity, -1.0, 1.0);
}

// Diagonal of the density matrix as a probability vector (tiny negative
// round-off is clamped to zero).
inline std::vector<double> photon_number_distribution(
    const FockDensityMatrix& rho) {
  std::vector<double> p(rho.dim());
  for (int n = 0; n < rho.dim(); ++n)
    p[n] = std::max(0.0, rho.element(n, n).real());
  return p;
}

// g2(0) = <n(n-1)> / <n>^2 from the number distribution.
inline double g2_zero(const FockDensityMatrix& rho) {
  double mean = 0.0, pairs = 0.0;
  for (int n = 0; n < rho.dim(); ++n) {
    double p = rho.element(n, n).real();
    mean += n * p;
    pairs += double(n) * double(n - 1) * p;
  }
  if (mean <= 0.0)
    throw DegenerateInput("g2_zero: zero mean photon number");
  return pairs / (mean * mean);
}

namespace detail {

// Weight of the displaced eigenvector sitting in the top rows of the
// workspace; used to certify that the workspace was large enough.
inline double top_band_weight(const ComplexVector& v, int band) {
  const int w = int(v.size());
  double s = 0.0;
  for (int m = std::max(0, w - band); m < w; ++m) s += std::norm(v(m));
  return s;
}

}  // namespace detail

// W(alpha) = (1/pi) Tr[rho D(alpha) (-1)^N D^+(alpha)], evaluated by
// displacing the eigenvectors of rho inside the enlarged workspace. This is
// the matrix-exponential route; no Laguerre closed form is used here.
inline double wigner_exact(const FockDensityMatrix& rho, Complex alpha) {
  const int d = rho.dim();
  const int w = detail::bucketed_workspace(d, alpha);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho.matrix());
  if (es.info() != Eigen::Success)
    throw Error("wigner_exact: eigendecomposition failed");
  double parity = 0.0;
  for (int j = 0; j < d; ++j) {
    const double weight = es.eigenvalues()(j);
    if (weight < 1e-15) continue;
    ComplexVector psi = ComplexVector::Zero(w);
    psi.head(d) = es.eigenvectors().col(j);
    ComplexVector phi = detail::displaced_vector(psi, alpha, +1.0);
    if (detail::top_band_weight(phi, 5) > 1e-9)
      throw TruncationError("wigner_exact: workspace too small");
    double vec_parity = 0.0;
    for (int m = 0; m < w; ++m)
      vec_parity += (m % 2 == 0 ? 1.0 : -1.0) * std::norm(phi(m));
    parity += weight * vec_parity;
  }
  return parity / std::numbers::pi;
}

inline double wigner_exact(const FockDensityMatrix& rho, double q, double p) {
  return wigner_exact(rho, amplitude_from_quadratures(q, p));
}

// |psi_n(q)|^2 for the number-state wavefunction, hbar = 1:
// psi_n(q) = pi^{-1/4} (2^n n!)^{-1/2} H_n(q) exp(-q^2/2).
inline double quadrature_wavefunction_density(int n, double q) {
  if (n < 0) throw InvalidArgument("quadrature_wavefunction_density: n < 0");
  double h = std::hermite(unsigned(n), q);
  if (h == 0.0) return 0.0;
  double log_norm = 0.0;
  for (int k = 1; k <= n; ++k) log_norm += std::log(2.0 * k);
  return std::exp(2.0 * std::log(std::abs(h)) - q * q - log_norm -
                  0.5 * std::log(std::numbers::pi));
}

}  // namespace pnrtomo
