#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsc/ast.hpp"
#include "qsc/common.hpp"
#include "qsc/spectral_model.hpp"

namespace qsc {

struct FrequencyEstimate {
  std::vector<double> frequencies;   // sorted ascending in [0, 1)
  std::vector<double> peak_values;   // certificate magnitude / pseudospectrum
  std::string method;
};

inline void to_json(nlohmann::json& j, const FrequencyEstimate& e) {
  j = nlohmann::json{{"frequencies", e.frequencies},
                     {"peak_values", e.peak_values},
                     {"method", e.method}};
}

inline void from_json(const nlohmann::json& j, FrequencyEstimate& e) {
  j.at("frequencies").get_to(e.frequencies);
  j.at("peak_values").get_to(e.peak_values);
  e.method = j.value("method", std::string{});
}

// Support recovery from the solver certificate: frequencies where the dual
// polynomial ||dual_scale * dual^H v(f)||_2 touches its unit ceiling.
inline FrequencyEstimate localize_dual(const AstSolution& sol, double peak_tol = 1e-2,
                                       int grid_size = 0) {
  const int n = static_cast<int>(sol.dual.rows());
  if (n < 2) throw std::invalid_argument("localize_dual: empty solution");
  if (!(peak_tol > 0.0 && peak_tol < 1.0)) {
    throw std::invalid_argument("localize_dual: peak_tol must lie in (0, 1)");
  }
  // xhat ~ 0 means tau exceeded the dual-norm threshold; there is no support.
  if (sol.xhat.norm() <= 1e-12 * sol.tau * sol.dual.norm()) {
    throw std::runtime_error("localize_dual: solution is identically zero");
  }
  if (grid_size == 0) grid_size = std::max(16 * n, 64);
  if (grid_size < 4 * n) {
    throw std::invalid_argument("localize_dual: grid_size must be >= 4n");
  }
  const CMatrix C = sol.dual_scale * sol.dual;

  RVector vals(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    vals(g) = detail::eval_dual_poly_sq(C, static_cast<double>(g) / grid_size, false).h;
  }
  const double floor_sq = (1.0 - peak_tol) * (1.0 - peak_tol);
  const double clamp = 0.5 / grid_size;

  std::vector<std::pair<double, double>> peaks;  // (f, |C(f)|)
  for (int idx : detail::circular_local_maxima(vals)) {
    const auto [f, hsq] =
        detail::refine_peak(C, static_cast<double>(idx) / grid_size, clamp);
    if (hsq >= floor_sq) peaks.emplace_back(detail::wrap_unit(f), std::sqrt(hsq));
  }
  if (peaks.empty()) {
    throw std::runtime_error("localize_dual: no certificate peaks within tolerance of one");
  }

  // Merge peaks closer than half a Rayleigh cell (circularly), keeping the
  // stronger one.
  std::sort(peaks.begin(), peaks.end());
  const double min_sep = 0.5 / n;
  bool merged = true;
  while (merged && peaks.size() > 1) {
    merged = false;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      const std::size_t j = (i + 1) % peaks.size();
      if (wrap_distance(peaks[i].first, peaks[j].first) < min_sep) {
        const std::size_t drop = peaks[i].second >= peaks[j].second ? j : i;
        peaks.erase(peaks.begin() + static_cast<std::ptrdiff_t>(drop));
        merged = true;
        break;
      }
    }
  }

  FrequencyEstimate est;
  est.method = "dual";
  for (const auto& [f, v] : peaks) {
    est.frequencies.push_back(f);
    est.peak_values.push_back(v);
  }
  return est;
}

namespace detail {

// Root-MUSIC style estimate from a covariance-like PSD matrix: the K smallest
// local minima of the noise-subspace null spectrum, parabola-refined.
inline FrequencyEstimate music_from_covariance(const CMatrix& R, int K, int ambient_n,
                                               int grid_size, const std::string& method) {
  const int L = static_cast<int>(R.rows());
  if (K < 1 || K >= L) {
    throw std::invalid_argument("subspace_estimate: need 1 <= K < subspace dimension");
  }
  if (grid_size == 0) grid_size = std::max(16 * ambient_n, 64);
  if (grid_size < 4 * ambient_n) {
    throw std::invalid_argument("subspace_estimate: grid_size must be >= 4n");
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (R + R.adjoint()));
  const CMatrix En = eig.eigenvectors().leftCols(L - K);  // ascending eigenvalues

  // Null spectrum N(f) = ||En^H v_L(f)||^2; steering vectors have length L.
  RVector null_spec(grid_size);
  CVector v(L);
  for (int g = 0; g < grid_size; ++g) {
    const double f = static_cast<double>(g) / grid_size;
    for (int i = 0; i < L; ++i) v(i) = std::exp(kImag * (kTwoPi * f * i));
    null_spec(g) = (En.adjoint() * v).squaredNorm();
  }

  std::vector<int> minima;
  for (int i = 0; i < grid_size; ++i) {
    const double prev = null_spec((i + grid_size - 1) % grid_size);
    const double next = null_spec((i + 1) % grid_size);
    if (null_spec(i) <= prev && null_spec(i) <= next &&
        (null_spec(i) < prev || null_spec(i) < next)) {
      minima.push_back(i);
    }
  }
  std::sort(minima.begin(), minima.end(),
            [&](int a, int b) { return null_spec(a) < null_spec(b); });
  if (static_cast<int>(minima.size()) < K) {
    // Degenerate spectra (e.g. exact single-atom data) can have fewer strict
    // minima than K; fall back to the globally smallest grid values.
    std::vector<int> order(grid_size);
    for (int i = 0; i < grid_size; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return null_spec(a) < null_spec(b); });
    for (int idx : order) {
      bool dup = false;
      for (int got : minima) {
        if (std::min(std::abs(idx - got), grid_size - std::abs(idx - got)) <= 1) {
          dup = true;
          break;
        }
      }
      if (!dup) minima.push_back(idx);
      if (static_cast<int>(minima.size()) >= K) break;
    }
  }
  if (static_cast<int>(minima.size()) < K) {
    throw std::runtime_error("subspace_estimate: could not isolate K spectral peaks");
  }

  const double step = 1.0 / grid_size;
  std::vector<std::pair<double, double>> found;  // (f, pseudospectrum peak)
  for (int k = 0; k < K; ++k) {
    const int i = minima[static_cast<std::size_t>(k)];
    const double y0 = null_spec((i + grid_size - 1) % grid_size);
    const double y1 = null_spec(i);
    const double y2 = null_spec((i + 1) % grid_size);
    double f = i * step;
    const double den = y0 - 2.0 * y1 + y2;
    if (std::abs(den) > 1e-300) {
      const double delta = 0.5 * (y0 - y2) / den;
      if (std::abs(delta) <= 1.0) f += delta * step;
    }
    f = wrap_unit(f);
    for (int i2 = 0; i2 < L; ++i2) v(i2) = std::exp(kImag * (kTwoPi * f * i2));
    const double nf = (En.adjoint() * v).squaredNorm();
    found.emplace_back(f, 1.0 / std::max(nf, 1e-300));
  }
  std::sort(found.begin(), found.end());

  FrequencyEstimate est;
  est.method = method;
  for (const auto& [f, v2] : found) {
    est.frequencies.push_back(f);
    est.peak_values.push_back(v2);
  }
  return est;
}

}  // namespace detail

// Single-vector subspace estimate with forward-backward Hankel smoothing; the
// smoothing window defaults to n/2 and must exceed K.
inline FrequencyEstimate subspace_estimate(const CVector& x, int K, int smoothing = 0,
                                           int grid_size = 0) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw std::invalid_argument("subspace_estimate: signal too short");
  const int L = smoothing > 0 ? smoothing : n / 2;
  if (L < 2 || L > n) throw std::invalid_argument("subspace_estimate: bad smoothing window");
  const int N = n - L + 1;
  CMatrix H(L, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < L; ++i) H(i, j) = x(i + j);
  CMatrix R = H * H.adjoint() / static_cast<double>(N);
  CMatrix J = CMatrix::Zero(L, L);
  for (int i = 0; i < L; ++i) J(i, L - 1 - i) = 1.0;
  R = 0.5 * (R + J * R.conjugate() * J).eval();
  return detail::music_from_covariance(R, K, n, grid_size, "music");
}

// Multi-snapshot subspace estimate from the sample covariance X X^H / T.
inline FrequencyEstimate subspace_estimate(const CMatrix& X, int K, int grid_size = 0) {
  const int n = static_cast<int>(X.rows());
  if (n < 2 || X.cols() < 1) throw std::invalid_argument("subspace_estimate: empty input");
  const CMatrix R = X * X.adjoint() / static_cast<double>(X.cols());
  return detail::music_from_covariance(R, K, n, grid_size, "music");
}

// Subspace estimate from the solver's Toeplitz certificate block T(u).
inline FrequencyEstimate subspace_estimate_toeplitz(const CVector& u, int K,
                                                    int grid_size = 0) {
  const int n = static_cast<int>(u.size());
  if (n < 2) throw std::invalid_argument("subspace_estimate_toeplitz: empty input");
  return detail::music_from_covariance(hermitian_toeplitz(u), K, n, grid_size,
                                       "music_toeplitz");
}

// Hausdorff distance between two frequency sets; plain |f - g| by default,
// circular distance on the unit torus when wrap is set.
inline double hausdorff(const std::vector<double>& fa, const std::vector<double>& fb,
                        bool wrap = false) {
  if (fa.empty() || fb.empty()) throw std::invalid_argument("hausdorff: empty set");
  auto directed = [&](const std::vector<double>& from, const std::vector<double>& to) {
    double worst = 0.0;
    for (double f : from) {
      double best = std::numeric_limits<double>::infinity();
      for (double g : to) {
        best = std::min(best, wrap ? wrap_distance(f, g) : std::abs(f - g));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(fa, fb), directed(fb, fa));
}

// Scale-invariant misalignment 1 - |<xhat, x>|^2 / (||xhat||^2 ||x||^2).
inline double normalized_error(const CVector& xhat, const CVector& xstar) {
  if (xhat.size() != xstar.size()) throw std::invalid_argument("normalized_error: size mismatch");
  const double ns = xstar.squaredNorm();
  if (!(ns > 0.0)) throw std::invalid_argument("normalized_error: reference is zero");
  const double nh = xhat.squaredNorm();
  if (!(nh > 0.0)) return 1.0;
  return 1.0 - std::norm(xhat.dot(xstar)) / (nh * ns);
}

// Principal-angle misalignment between the leading left singular subspaces:
// 1 - sigma_min(Ustar^H Uhat)^2 at the numerical rank r of the reference.
inline double subspace_angle_error(const CMatrix& Xhat, const CMatrix& Xstar) {
  if (Xhat.rows() != Xstar.rows()) {
    throw std::invalid_argument("subspace_angle_error: row mismatch");
  }
  if (!(Xstar.norm() > 0.0)) {
    throw std::invalid_argument("subspace_angle_error: reference is zero");
  }
  if (!(Xhat.norm() > 0.0)) return 1.0;
  Eigen::JacobiSVD<CMatrix> svd_star(Xstar, Eigen::ComputeThinU);
  Eigen::JacobiSVD<CMatrix> svd_hat(Xhat, Eigen::ComputeThinU);
  const auto& sv = svd_star.singularValues();
  const double cutoff = std::max(Xstar.rows(), Xstar.cols()) *
                        std::numeric_limits<double>::epsilon() * sv(0);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++r;
  }
  r = std::min<int>(r, static_cast<int>(svd_hat.matrixU().cols()));
  const CMatrix overlap =
      svd_star.matrixU().leftCols(r).adjoint() * svd_hat.matrixU().leftCols(r);
  Eigen::JacobiSVD<CMatrix> svd_overlap(overlap);
  const double smin = svd_overlap.singularValues().minCoeff();
  return 1.0 - smin * smin;
}

}  // namespace qsc
