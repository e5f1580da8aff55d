#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsc/common.hpp"
#include "qsc/special_functions.hpp"

namespace qsc {

// Scalar quantizer with cells [t_l, t_{l+1}) for l = 0..L-1, where t_0 = -inf
// and t_L = +inf are implicit.  A value equal to a finite threshold belongs to
// the cell on its right.
struct QuantizerSpec {
  std::vector<double> thresholds;       // strictly increasing, size L-1
  std::vector<double> representatives;  // size L, representative of each cell

  std::size_t levels() const { return representatives.size(); }

  void validate() const {
    if (representatives.size() < 2) {
      throw std::invalid_argument("QuantizerSpec: needs at least two levels");
    }
    if (thresholds.size() + 1 != representatives.size()) {
      throw std::invalid_argument("QuantizerSpec: |thresholds| must be |representatives|-1");
    }
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
      if (!(thresholds[i - 1] < thresholds[i])) {
        throw std::invalid_argument("QuantizerSpec: thresholds must be strictly increasing");
      }
    }
    for (std::size_t l = 0; l < representatives.size(); ++l) {
      const double lo = (l == 0) ? -std::numeric_limits<double>::infinity() : thresholds[l - 1];
      const double hi = (l + 1 == representatives.size())
                            ? std::numeric_limits<double>::infinity()
                            : thresholds[l];
      if (!(representatives[l] >= lo && representatives[l] < hi)) {
        throw std::invalid_argument("QuantizerSpec: representative outside its cell");
      }
    }
  }
};

inline QuantizerSpec sign_quantizer() { return {{0.0}, {-1.0, 1.0}}; }

inline int bit_depth(const QuantizerSpec& spec) {
  const std::size_t L = spec.levels();
  if (L < 2) throw std::invalid_argument("bit_depth: invalid quantizer");
  int b = 0;
  std::size_t v = L - 1;
  while (v > 0) {
    ++b;
    v >>= 1;
  }
  return b;  // ceil(log2 L)
}

// Lloyd-Max quantizer for a zero-mean Gaussian input with the given standard
// deviation: alternate thresholds = representative midpoints and
// representatives = conditional cell means until the thresholds settle.
inline QuantizerSpec lloyd_max(int bits, double input_std) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("lloyd_max: bits out of range");
  if (!(input_std > 0.0)) throw std::invalid_argument("lloyd_max: input_std must be positive");
  const std::size_t L = std::size_t{1} << bits;
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> reps(L);
  for (std::size_t l = 0; l < L; ++l) {
    reps[l] = input_std * normal_quantile((2.0 * (l + 1) - 1.0) / (2.0 * L));
  }
  std::vector<double> th(L - 1, 0.0), th_prev(L - 1, inf);
  const double tol = 1e-10 * input_std;
  for (int it = 0; it < 10000; ++it) {
    for (std::size_t l = 0; l + 1 < L; ++l) th[l] = 0.5 * (reps[l] + reps[l + 1]);
    for (std::size_t l = 0; l < L; ++l) {
      const double lo = (l == 0) ? -inf : th[l - 1];
      const double hi = (l + 1 == L) ? inf : th[l];
      reps[l] = truncated_normal_mean(lo, hi, input_std);
    }
    double delta = 0.0;
    for (std::size_t l = 0; l + 1 < L; ++l) {
      delta = std::max(delta, std::abs(th[l] - th_prev[l]));
    }
    if (delta < tol) break;
    th_prev = th;
  }
  QuantizerSpec spec{std::move(th), std::move(reps)};
  spec.validate();
  return spec;
}

// Index of the cell containing a (ties at a threshold go right).
inline std::size_t quantize_index(const QuantizerSpec& spec, double a) {
  return static_cast<std::size_t>(
      std::upper_bound(spec.thresholds.begin(), spec.thresholds.end(), a) -
      spec.thresholds.begin());
}

inline double quantize(const QuantizerSpec& spec, double a) {
  return spec.representatives[quantize_index(spec, a)];
}

// Complex measurements are quantized component-wise.
inline CVector quantize_complex(const QuantizerSpec& spec, const CVector& z) {
  spec.validate();
  CVector y(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    y(i) = Complex(quantize(spec, z(i).real()), quantize(spec, z(i).imag()));
  }
  return y;
}

inline CMatrix quantize_complex(const QuantizerSpec& spec, const CMatrix& Z) {
  spec.validate();
  CMatrix Y(Z.rows(), Z.cols());
  for (Eigen::Index t = 0; t < Z.cols(); ++t) {
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      Y(i, t) = Complex(quantize(spec, Z(i, t).real()), quantize(spec, Z(i, t).imag()));
    }
  }
  return Y;
}

// Design-matched input scale for quantizing Re/Im of z_i = <a_i, x> + sigma*eps_i
// with a_i ~ CN(0, I): each real component is N(0, (||x||^2 + sigma^2)/2).
inline double matched_input_std(double signal_norm, double sigma) {
  if (signal_norm < 0.0 || sigma < 0.0) {
    throw std::invalid_argument("matched_input_std: negative scale");
  }
  return std::sqrt(0.5 * (signal_norm * signal_norm + sigma * sigma));
}

inline void to_json(nlohmann::json& j, const QuantizerSpec& q) {
  j = nlohmann::json{{"thresholds", q.thresholds}, {"representatives", q.representatives}};
}

inline void from_json(const nlohmann::json& j, QuantizerSpec& q) {
  j.at("thresholds").get_to(q.thresholds);
  j.at("representatives").get_to(q.representatives);
  q.validate();
}

}  // namespace qsc
