#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsc/common.hpp"
#include "qsc/quantization.hpp"
#include "qsc/special_functions.hpp"
#include "qsc/spectral_model.hpp"

namespace qsc {

namespace detail {

// Information contribution of one quantizer cell whose scaled edges are
// [a, b] = [(t_l - s)/sigma, (t_{l+1} - s)/sigma]:
//
//   term = (e^{-a^2} - e^{-b^2})^2 / (phi(b) - phi(a)).
//
// In the tails both factors underflow together; factoring out e^{-a^2} and
// rewriting the cell mass with erfcx keeps the ratio finite:
//
//   term = 2 e^{-a^2} (1 - q)^2 / (erfcx(a) - q erfcx(b)),  q = e^{a^2 - b^2},
//
// valid for 0 <= a < b.  Cells whose numerator underflows entirely carry no
// representable information and contribute zero.
inline double gamma_cell(double a, double b) {
  if (b <= 0.0) {
    const double t = -a;
    a = -b;
    b = t;
  }
  if (a >= 0.0) {
    const double e1 = std::isinf(a) ? 0.0 : std::exp(-a * a);
    if (e1 == 0.0) return 0.0;
    double q = 0.0, xb = 0.0;
    if (!std::isinf(b)) {
      q = std::exp((a - b) * (a + b));
      xb = erfcx(b);
    }
    const double den = erfcx(a) - q * xb;
    if (den <= 0.0) return 0.0;
    const double r = 1.0 - q;
    return 2.0 * e1 * r * r / den;
  }
  // Cell straddles the mean; no cancellation in the mass.
  const double ea = std::isinf(a) ? 0.0 : std::exp(-a * a);
  const double eb = std::isinf(b) ? 0.0 : std::exp(-b * b);
  const double num = (eb - ea) * (eb - ea);
  if (num == 0.0) return 0.0;
  const double mass = std::max(interval_probability(a, b), 1e-300);
  return num / mass;
}

}  // namespace detail

// Scalar information weight Gamma(s; sigma) of a quantized real observation
// Q(N(s, sigma^2/2)); the Fisher information of the cell indicator is
// Gamma / (pi sigma^2).
inline double gamma_weight(const std::vector<double>& thresholds, double s, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("gamma_weight: sigma must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t L = thresholds.size() + 1;
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double lo = (l == 0) ? -inf : thresholds[l - 1];
    const double hi = (l == L - 1) ? inf : thresholds[l];
    total += detail::gamma_cell((lo - s) / sigma, (hi - s) / sigma);
  }
  return total;
}

// Closed form of gamma_weight for the sign quantizer:
// 4 exp(-2u^2) / (1 - 4 phi(u)^2), u = s/sigma, evaluated via erfcx so the
// high-|u| cancellation in 1 - 4 phi^2 = erfc(|u|)(2 - erfc(|u|)) is avoided.
inline double onebit_gamma(double u) {
  const double au = std::abs(u);
  const double e1 = std::exp(-au * au);
  if (e1 == 0.0) return 0.0;
  return 4.0 * e1 / (erfcx(au) * (2.0 - std::erfc(au)));
}

enum class MeasurementModel { onebit, quantized, unquantized };

inline std::string model_tag(MeasurementModel m) {
  switch (m) {
    case MeasurementModel::onebit:
      return "onebit";
    case MeasurementModel::quantized:
      return "quantized";
    case MeasurementModel::unquantized:
      return "unquantized";
  }
  return "unknown";
}

// Parameter layout: kappa = (f_1, A_1, phi_1, ..., f_K, A_K, phi_K).
inline const char* param_kind(int index) {
  switch (index % 3) {
    case 0:
      return "f";
    case 1:
      return "A";
    default:
      return "phi";
  }
}

struct FimResult {
  RMatrix fim;  // 3K x 3K, symmetric PSD
  std::optional<RVector> crb_diagonal;
  MeasurementModel model = MeasurementModel::unquantized;
  int bits = 0;  // 0 marks unquantized
};

struct SingularFim : std::runtime_error {
  explicit SingularFim(double cond)
      : std::runtime_error("FIM is singular or too ill-conditioned (cond ~ " +
                           std::to_string(cond) + ")"),
        condition(cond) {}
  double condition;
};

// d x_star / d kappa as an n x 3K complex matrix; columns follow the
// (f_k, A_k, phi_k) layout.
inline CMatrix signal_jacobian(const SpectralSignal& sig) {
  sig.validate();
  const int K = sig.K();
  CMatrix J(sig.n, 3 * K);
  for (int k = 0; k < K; ++k) {
    const auto& c = sig.components[k];
    const CVector v = atom(c.f, sig.n);
    const CVector g = atom_derivative(c.f, sig.n);
    const Complex ck = c.coefficient();
    const Complex unit = std::exp(kImag * (kTwoPi * c.phase));
    J.col(3 * k) = ck * g;
    J.col(3 * k + 1) = unit * v;
    J.col(3 * k + 2) = kImag * kTwoPi * ck * v;
  }
  return J;
}

namespace detail {

template <typename WeightFn>
RMatrix assemble_fim(const CMatrix& A, const SpectralSignal& sig, WeightFn&& weight) {
  if (A.cols() != sig.n) throw std::invalid_argument("fim: matrix/signal dimension mismatch");
  const CVector x = synthesize(sig);
  const CMatrix J = signal_jacobian(sig);
  const CVector z0 = A * x;  // noiseless bilinear part; s_i = Re, r_i = Im
  const CMatrix D = A * J;   // row i = a_i^H dx/dkappa
  const RMatrix Dr = D.real();
  const RMatrix Di = D.imag();
  RVector wr(A.rows()), wi(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    wr(i) = weight(z0(i).real());
    wi(i) = weight(z0(i).imag());
  }
  RMatrix fim = Dr.transpose() * wr.asDiagonal() * Dr +
                Di.transpose() * wi.asDiagonal() * Di;
  return 0.5 * (fim + fim.transpose());
}

}  // namespace detail

inline FimResult fim_onebit(const CMatrix& A, const SpectralSignal& sig, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("fim_onebit: sigma must be positive (noiseless FIM degenerates)");
  }
  const double scale = 1.0 / (kPi * sigma * sigma);
  FimResult r;
  r.fim = detail::assemble_fim(
      A, sig, [&](double s) { return scale * onebit_gamma(s / sigma); });
  r.model = MeasurementModel::onebit;
  r.bits = 1;
  return r;
}

inline FimResult fim_quantized(const CMatrix& A, const SpectralSignal& sig, double sigma,
                               const QuantizerSpec& spec) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("fim_quantized: sigma must be positive (noiseless FIM degenerates)");
  }
  spec.validate();
  const double scale = 1.0 / (kPi * sigma * sigma);
  FimResult r;
  r.fim = detail::assemble_fim(A, sig, [&](double s) {
    return scale * gamma_weight(spec.thresholds, s, sigma);
  });
  r.model = MeasurementModel::quantized;
  r.bits = bit_depth(spec);
  return r;
}

inline FimResult fim_unquantized(const CMatrix& A, const SpectralSignal& sig, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("fim_unquantized: sigma must be positive");
  }
  const double w = 2.0 / (sigma * sigma);
  FimResult r;
  r.fim = detail::assemble_fim(A, sig, [&](double) { return w; });
  r.model = MeasurementModel::unquantized;
  r.bits = 0;
  return r;
}

// Diagonal of FIM^{-1} through a symmetric eigendecomposition; refuses
// matrices whose condition number exceeds cond_limit.
inline RVector crb_from_fim(const RMatrix& fim, double cond_limit = 1e12) {
  if (fim.rows() != fim.cols() || fim.rows() == 0) {
    throw std::invalid_argument("crb_from_fim: square matrix required");
  }
  Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (fim + fim.transpose()));
  const RVector lam = es.eigenvalues();
  const double lmax = lam.maxCoeff();
  const double lmin = lam.minCoeff();
  if (!(lmin > 0.0) || lmax / lmin > cond_limit) {
    const double cond = (lmin > 0.0) ? lmax / lmin : std::numeric_limits<double>::infinity();
    throw SingularFim(cond);
  }
  const RMatrix& V = es.eigenvectors();
  RVector crb(fim.rows());
  for (Eigen::Index j = 0; j < fim.rows(); ++j) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < fim.rows(); ++k) acc += V(j, k) * V(j, k) / lam(k);
    crb(j) = acc;
  }
  return crb;
}

inline RVector crb_from_fim(FimResult& r, double cond_limit = 1e12) {
  RVector crb = crb_from_fim(r.fim, cond_limit);
  r.crb_diagonal = crb;
  return crb;
}

}  // namespace qsc
