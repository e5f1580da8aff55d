#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qsc/common.hpp"
#include "qsc/spectral_model.hpp"

namespace qsc {

// Hermitian Toeplitz matrix with first column u (u(0) real).
inline CMatrix hermitian_toeplitz(const CVector& u) {
  const Eigen::Index n = u.size();
  CMatrix T(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k <= j; ++k) {
      T(j, k) = u(j - k);
      T(k, j) = std::conj(u(j - k));
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) T(j, j) = u(0).real();
  return T;
}

// Debiased correlation surrogate s = (1/m) A^H y; for quantized y its mean
// over the sensing ensemble is expected_scale(snr) * x / ||x||.
struct SurrogateSignal {
  CMatrix S;  // n x T (T = 1 for a single vector)
  int m = 0;  // rows of the sensing matrix that produced it

  CVector vector() const { return S.col(0); }
  int T() const { return static_cast<int>(S.cols()); }
};

inline SurrogateSignal surrogate(const CMatrix& A, const CVector& y) {
  if (A.rows() != y.size()) throw std::invalid_argument("surrogate: dimension mismatch");
  if (A.rows() == 0) throw std::invalid_argument("surrogate: empty measurement set");
  SurrogateSignal s;
  s.S = (A.adjoint() * y) / static_cast<double>(A.rows());
  s.m = static_cast<int>(A.rows());
  return s;
}

inline SurrogateSignal surrogate(const CMatrix& A, const CMatrix& Y) {
  if (A.rows() != Y.rows()) throw std::invalid_argument("surrogate: dimension mismatch");
  if (A.rows() == 0) throw std::invalid_argument("surrogate: empty measurement set");
  SurrogateSignal s;
  s.S = (A.adjoint() * Y) / static_cast<double>(A.rows());
  s.m = static_cast<int>(A.rows());
  return s;
}

// Mean shrinkage factor of the sign-quantized surrogate:
// lambda = 2 / sqrt(pi (1/snr + 1)); increases to 2/sqrt(pi) as snr -> inf.
inline double expected_scale(double snr_linear) {
  if (!(snr_linear > 0.0)) throw std::domain_error("expected_scale: snr must be positive");
  return 2.0 / std::sqrt(kPi * (1.0 / snr_linear + 1.0));
}

inline double default_tau(int n, int m, double eta = 1.0) {
  if (n < 2 || m < 1) throw std::invalid_argument("default_tau: need n >= 2, m >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument("default_tau: eta must be positive");
  return eta * std::sqrt(n * std::log(static_cast<double>(n)) / m);
}

inline double default_tau_mmv(int n, int m, int T) {
  if (n < 2 || m < 1 || T < 1) throw std::invalid_argument("default_tau_mmv: bad sizes");
  return std::sqrt(n * std::log(static_cast<double>(n)) / (10.0 * m * T));
}

// Regularizer scale for the full least-squares data term: the dual-norm level
// of A^H eps concentrates near sigma sqrt(m n log n) for CN(0,1) designs.
inline double default_tau_unquantized(int n, int m, double sigma, double eta = 1.0) {
  if (n < 2 || m < 1) throw std::invalid_argument("default_tau_unquantized: bad sizes");
  if (!(sigma >= 0.0)) throw std::invalid_argument("default_tau_unquantized: bad sigma");
  return eta * sigma * std::sqrt(static_cast<double>(m) * n * std::log(static_cast<double>(n)));
}

struct SolverOptions {
  double tol = 1e-6;       // relative primal/dual residual target
  int max_iter = 20000;
  double rho = 2.0;        // initial ADMM penalty
  bool adapt_rho = true;   // residual balancing (x2 / /2 at ratio 10)
  int checkpoint_every = 100;
};

struct SolverDiagnostics {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool converged = false;
  std::vector<double> objective_checkpoints;
  double objective = 0.0;
};

struct AstSolution {
  CMatrix xhat;   // n x T
  CVector u;      // Toeplitz generator of the certificate block
  CMatrix trade;  // trade-off block: 1x1 scalar (single vector) or T x T
  CMatrix dual;   // (S - xhat)/tau, or A^H(z - A xhat)/tau for least squares
  double tau = 0.0;
  // Multiplying `dual` by this factor gives the certificate whose polynomial
  // peaks at 1 on the recovered support (2 when the fidelity carries no 1/2).
  double dual_scale = 1.0;
  SolverDiagnostics diagnostics;
};

namespace detail {

enum class FidelityKind { prox, fixed_x, least_squares };

struct AdmmProblem {
  FidelityKind kind = FidelityKind::prox;
  double alpha = 0.5;  // weight of ||X - S||_F^2 for prox mode
  double tau = 1.0;    // weight of (Re u_0 + Re tr W)/2
  const CMatrix* S = nullptr;  // prox target (n x T)
  const CMatrix* A = nullptr;  // least-squares operator (m x n)
  const CVector* z = nullptr;  // least-squares data
  const CMatrix* X_fixed = nullptr;  // fixed_x mode
};

struct AdmmOutput {
  CMatrix X;
  CVector u;
  CMatrix W;
  SolverDiagnostics diag;
};

// Splitting: keep (X, u, W) in closed-form updates and a PSD copy Z of the
// block matrix M = [[T(u), X], [X^H, W]] with scaled dual Lambda.
inline AdmmOutput solve_admm(const AdmmProblem& prob, int n, int T,
                             const SolverOptions& opts) {
  if (opts.tol <= 0.0 || opts.max_iter < 1 || opts.rho <= 0.0) {
    throw std::invalid_argument("SolverOptions: tol, max_iter, rho must be positive");
  }
  const int P = n + T;
  double rho = opts.rho;

  CMatrix X;
  switch (prob.kind) {
    case FidelityKind::prox:
      X = *prob.S;
      break;
    case FidelityKind::fixed_x:
      X = *prob.X_fixed;
      break;
    case FidelityKind::least_squares:
      X = prob.A->adjoint() * (*prob.z) / static_cast<double>(prob.A->rows());
      break;
  }
  CVector u = CVector::Zero(n);
  CMatrix W = CMatrix::Zero(T, T);
  CMatrix Z = CMatrix::Zero(P, P);
  CMatrix Lam = CMatrix::Zero(P, P);
  CMatrix M(P, P), E(P, P), Zprev(P, P);

  CMatrix AhA;
  CVector Ahz;
  Eigen::LDLT<CMatrix> ls_solver;
  bool ls_factored = false;
  if (prob.kind == FidelityKind::least_squares) {
    AhA = prob.A->adjoint() * (*prob.A);
    Ahz = prob.A->adjoint() * (*prob.z);
  }

  // Absolute floor for the residual scales: without it, instances whose
  // solution block is exactly zero (tau beyond the dual-norm threshold)
  // never satisfy a purely relative test because M and Z vanish together.
  double data_scale = 1e-12;
  switch (prob.kind) {
    case FidelityKind::prox:
      data_scale = std::max(data_scale, prob.S->norm());
      break;
    case FidelityKind::fixed_x:
      data_scale = std::max(data_scale, prob.X_fixed->norm());
      break;
    case FidelityKind::least_squares:
      data_scale = std::max(data_scale, Ahz.norm() / static_cast<double>(prob.A->rows()));
      break;
  }

  Eigen::SelfAdjointEigenSolver<CMatrix> eig;
  AdmmOutput out;
  auto primal_objective = [&]() {
    double fid = 0.0;
    if (prob.kind == FidelityKind::prox) {
      fid = prob.alpha * (X - *prob.S).squaredNorm();
    } else if (prob.kind == FidelityKind::least_squares) {
      fid = 0.5 * ((*prob.A) * X.col(0) - *prob.z).squaredNorm();
    }
    return fid + 0.5 * prob.tau * (u(0).real() + W.trace().real());
  };
  // Scaled-dual augmented Lagrangian; the indicator of the PSD cone vanishes
  // because Z is always a projection output.
  auto augmented_objective = [&]() {
    return primal_objective() + 0.5 * rho * (M - Z + Lam).squaredNorm() -
           0.5 * rho * Lam.squaredNorm();
  };

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    // (u, W, X) updates against G = Z - Lambda (Hermitian).
    const CMatrix G = Z - Lam;
    for (int d = 0; d < n; ++d) {
      Complex acc = 0.0;
      for (int j = d; j < n; ++j) acc += G(j, j - d);
      u(d) = acc / static_cast<double>(n - d);
    }
    u(0) = Complex(u(0).real() - prob.tau / (2.0 * rho * n), 0.0);

    W = G.bottomRightCorner(T, T);
    W.diagonal().array() -= prob.tau / (2.0 * rho);
    W = 0.5 * (W + W.adjoint()).eval();

    if (prob.kind == FidelityKind::prox) {
      const double a2 = 2.0 * prob.alpha;
      X = (a2 * (*prob.S) + 2.0 * rho * G.topRightCorner(n, T)) / (a2 + 2.0 * rho);
    } else if (prob.kind == FidelityKind::least_squares) {
      if (!ls_factored) {
        CMatrix lhs = AhA;
        lhs.diagonal().array() += 2.0 * rho;
        ls_solver.compute(lhs);
        ls_factored = true;
      }
      X = ls_solver.solve(Ahz + 2.0 * rho * G.topRightCorner(n, T));
    }

    M.topLeftCorner(n, n) = hermitian_toeplitz(u);
    M.topRightCorner(n, T) = X;
    M.bottomLeftCorner(T, n) = X.adjoint();
    M.bottomRightCorner(T, T) = W;

    // PSD projection with Hermitian drift suppression.
    E = M + Lam;
    E = 0.5 * (E + E.adjoint()).eval();
    eig.compute(E);
    Zprev.swap(Z);
    if (eig.eigenvalues().minCoeff() >= 0.0) {
      Z = E;
    } else {
      RVector lam_clip = eig.eigenvalues().cwiseMax(0.0);
      Z = eig.eigenvectors() * lam_clip.asDiagonal() * eig.eigenvectors().adjoint();
      Z = 0.5 * (Z + Z.adjoint()).eval();
    }

    Lam += M - Z;

    const double rp = (M - Z).norm();
    const double rd = rho * (Z - Zprev).norm();
    const double p_scale = std::max({M.norm(), Z.norm(), data_scale});
    const double d_scale = std::max(rho * Lam.norm(), data_scale);
    const double rp_rel = rp / p_scale;
    const double rd_rel = rd / d_scale;

    if ((it + 1) % opts.checkpoint_every == 0) {
      out.diag.objective_checkpoints.push_back(augmented_objective());
    }

    if (rp_rel < opts.tol && rd_rel < opts.tol) {
      out.diag.converged = true;
      out.diag.primal_residual = rp_rel;
      out.diag.dual_residual = rd_rel;
      ++it;
      break;
    }
    out.diag.primal_residual = rp_rel;
    out.diag.dual_residual = rd_rel;

    if (opts.adapt_rho && (it + 1) % 50 == 0) {
      if (rp_rel > 10.0 * rd_rel && rho < 1e6) {
        rho *= 2.0;
        Lam *= 0.5;
        ls_factored = false;
      } else if (rd_rel > 10.0 * rp_rel && rho > 1e-4) {
        rho *= 0.5;
        Lam *= 2.0;
        ls_factored = false;
      }
    }
  }

  out.diag.iterations = it;
  out.diag.objective = primal_objective();
  out.X = std::move(X);
  out.u = std::move(u);
  out.W = std::move(W);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dual polynomial evaluation and refinement
// ---------------------------------------------------------------------------

namespace detail {

// h(f) = sum_t |q_t^H v(f)|^2 together with first two derivatives.
struct PolyEval {
  double h = 0.0, dh = 0.0, d2h = 0.0;
};

inline PolyEval eval_dual_poly_sq(const CMatrix& Q, double f, bool derivatives) {
  const Eigen::Index n = Q.rows();
  const Eigen::Index T = Q.cols();
  PolyEval r;
  for (Eigen::Index t = 0; t < T; ++t) {
    Complex p = 0.0, dp = 0.0, d2p = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Complex e = std::exp(kImag * (kTwoPi * f * i));
      const Complex qc = std::conj(Q(i, t));
      p += qc * e;
      if (derivatives) {
        const Complex je = kImag * (kTwoPi * i) * e;
        dp += qc * je;
        d2p += qc * kImag * (kTwoPi * i) * je;
      }
    }
    r.h += std::norm(p);
    if (derivatives) {
      r.dh += 2.0 * (std::conj(p) * dp).real();
      r.d2h += 2.0 * (std::norm(dp) + (std::conj(p) * d2p).real());
    }
  }
  return r;
}

inline double wrap_unit(double f) {
  f = std::fmod(f, 1.0);
  return f < 0.0 ? f + 1.0 : f;
}

// Newton ascent of h(f) = sum_t |q_t^H v(f)|^2; steps are clamped to half a
// grid cell so refinement cannot leave the bracketing cell.
inline std::pair<double, double> refine_peak(const CMatrix& Q, double f0, double step_clamp) {
  double f = f0;
  for (int it = 0; it < 20; ++it) {
    const PolyEval e = eval_dual_poly_sq(Q, f, true);
    if (!(e.d2h < 0.0)) break;
    double step = -e.dh / e.d2h;
    step = std::clamp(step, -step_clamp, step_clamp);
    f = wrap_unit(f + step);
    if (std::abs(step) < 1e-15) break;
  }
  return {f, eval_dual_poly_sq(Q, f, false).h};
}

inline std::vector<int> circular_local_maxima(const RVector& vals) {
  const int g = static_cast<int>(vals.size());
  std::vector<int> idx;
  for (int i = 0; i < g; ++i) {
    const double prev = vals((i + g - 1) % g);
    const double next = vals((i + 1) % g);
    if (vals(i) >= prev && vals(i) >= next && (vals(i) > prev || vals(i) > next)) {
      idx.push_back(i);
    }
  }
  return idx;
}

}  // namespace detail

// Values of Q(f) = ||Q^H v(f)||_2 on a uniform grid of the given size.
inline RVector dual_polynomial(const CMatrix& Q, int grid_size) {
  const int n = static_cast<int>(Q.rows());
  if (n < 1) throw std::invalid_argument("dual_polynomial: empty polynomial");
  if (grid_size < 4 * n) {
    throw std::invalid_argument("dual_polynomial: grid_size must be >= 4n");
  }
  RVector vals(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    vals(g) = std::sqrt(
        detail::eval_dual_poly_sq(Q, static_cast<double>(g) / grid_size, false).h);
  }
  return vals;
}

inline RVector dual_polynomial(const CVector& q, int grid_size) {
  return dual_polynomial(CMatrix(q), grid_size);
}

// Dual atomic norm sup_f ||Q^H v(f)||_2 by dense grid search plus Newton
// refinement of the leading local maxima.  All evaluations are exact values of
// the polynomial, so the result never overestimates the supremum.
inline double dual_atomic_norm(const CMatrix& Q, int grid_size = 0) {
  const int n = static_cast<int>(Q.rows());
  if (n < 1) throw std::invalid_argument("dual_atomic_norm: empty input");
  if (grid_size == 0) grid_size = std::max(16 * n, 64);
  if (grid_size < 4 * n) {
    throw std::invalid_argument("dual_atomic_norm: grid_size must be >= 4n");
  }
  if (Q.norm() == 0.0) return 0.0;
  RVector vals(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    vals(g) = detail::eval_dual_poly_sq(Q, static_cast<double>(g) / grid_size, false).h;
  }
  std::vector<int> peaks = detail::circular_local_maxima(vals);
  std::sort(peaks.begin(), peaks.end(),
            [&](int a, int b) { return vals(a) > vals(b); });
  double best = vals.maxCoeff();
  const double clamp = 0.5 / grid_size;
  const int refine = std::min<int>(8, static_cast<int>(peaks.size()));
  for (int i = 0; i < refine; ++i) {
    const double f0 = static_cast<double>(peaks[i]) / grid_size;
    best = std::max(best, detail::refine_peak(Q, f0, clamp).second);
  }
  return std::sqrt(best);
}

inline double dual_atomic_norm(const CVector& q, int grid_size = 0) {
  return dual_atomic_norm(CMatrix(q), grid_size);
}

// Atomic norm of x via its semidefinite characterization
//   ||x||_A = min (1/2n) tr T(u) + w/2  s.t.  [[T(u), x], [x^H, w]] >= 0,
// solved by the same ADMM splitting with the signal block held fixed.
inline double atomic_norm(const CMatrix& X, const SolverOptions& opts = {}) {
  if (X.rows() < 1 || X.cols() < 1) throw std::invalid_argument("atomic_norm: empty input");
  if (X.norm() == 0.0) return 0.0;
  detail::AdmmProblem prob;
  prob.kind = detail::FidelityKind::fixed_x;
  prob.tau = 1.0;
  prob.X_fixed = &X;
  const auto out = detail::solve_admm(prob, static_cast<int>(X.rows()),
                                      static_cast<int>(X.cols()), opts);
  return 0.5 * (out.u(0).real() + out.W.trace().real());
}

inline double atomic_norm(const CVector& x, const SolverOptions& opts = {}) {
  return atomic_norm(CMatrix(x), opts);
}

// Proximal atomic-norm denoiser xhat = argmin 1/2 ||x - s||^2 + tau ||x||_A.
inline AstSolution ast_smv(const SurrogateSignal& s, double tau,
                           const SolverOptions& opts = {}) {
  if (s.S.cols() != 1) throw std::invalid_argument("ast_smv: expected a single vector");
  if (!(tau > 0.0)) throw std::invalid_argument("ast_smv: tau must be positive");
  detail::AdmmProblem prob;
  prob.kind = detail::FidelityKind::prox;
  prob.alpha = 0.5;
  prob.tau = tau;
  prob.S = &s.S;
  auto out = detail::solve_admm(prob, static_cast<int>(s.S.rows()), 1, opts);
  AstSolution sol;
  sol.dual = (s.S - out.X) / tau;
  sol.xhat = std::move(out.X);
  sol.u = std::move(out.u);
  sol.trade = std::move(out.W);
  sol.tau = tau;
  sol.dual_scale = 1.0;
  sol.diagnostics = std::move(out.diag);
  return sol;
}

// MMV denoiser Xhat = argmin ||X - S||_F^2 + tau_T ||X||_A.  The fidelity term
// carries no 1/2, so the effective proximal parameter is tau_T / 2 and the
// certificate polynomial of dual = (S - Xhat)/tau_T peaks at 1/2.
inline AstSolution ast_mmv(const SurrogateSignal& s, double tau_T,
                           const SolverOptions& opts = {}) {
  if (!(tau_T > 0.0)) throw std::invalid_argument("ast_mmv: tau must be positive");
  detail::AdmmProblem prob;
  prob.kind = detail::FidelityKind::prox;
  prob.alpha = 1.0;
  prob.tau = tau_T;
  prob.S = &s.S;
  auto out = detail::solve_admm(prob, static_cast<int>(s.S.rows()),
                                static_cast<int>(s.S.cols()), opts);
  AstSolution sol;
  sol.dual = (s.S - out.X) / tau_T;
  sol.xhat = std::move(out.X);
  sol.u = std::move(out.u);
  sol.trade = std::move(out.W);
  sol.tau = tau_T;
  sol.dual_scale = 2.0;
  sol.diagnostics = std::move(out.diag);
  return sol;
}

// Full least-squares variant xhat = argmin 1/2 ||z - A x||^2 + tau ||x||_A,
// used as the unquantized reference pipeline.
inline AstSolution ast_unquantized(const CMatrix& A, const CVector& z, double tau,
                                   const SolverOptions& opts = {}) {
  if (A.rows() != z.size()) throw std::invalid_argument("ast_unquantized: dimension mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("ast_unquantized: tau must be positive");
  detail::AdmmProblem prob;
  prob.kind = detail::FidelityKind::least_squares;
  prob.tau = tau;
  prob.A = &A;
  prob.z = &z;
  auto out = detail::solve_admm(prob, static_cast<int>(A.cols()), 1, opts);
  AstSolution sol;
  sol.dual = A.adjoint() * (z - A * out.X.col(0)) / tau;
  sol.xhat = std::move(out.X);
  sol.u = std::move(out.u);
  sol.trade = std::move(out.W);
  sol.tau = tau;
  sol.dual_scale = 1.0;
  sol.diagnostics = std::move(out.diag);
  return sol;
}

}  // namespace qsc
