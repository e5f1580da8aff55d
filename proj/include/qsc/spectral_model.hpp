#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsc/common.hpp"
#include "qsc/rng.hpp"

namespace qsc {

// Distance on the frequency torus [0,1).
inline double wrap_distance(double f1, double f2) {
  double d = std::fmod(std::abs(f1 - f2), 1.0);
  return std::min(d, 1.0 - d);
}

struct SpectralComponent {
  double f = 0.0;      // frequency in [0,1)
  double amp = 0.0;    // amplitude A > 0
  double phase = 0.0;  // phase in cycles, [0,1)

  Complex coefficient() const { return amp * std::exp(kImag * (kTwoPi * phase)); }
};

// A K-sparse line spectrum on n uniform samples.
struct SpectralSignal {
  int n = 0;
  std::vector<SpectralComponent> components;  // sorted by frequency

  int K() const { return static_cast<int>(components.size()); }

  std::vector<double> frequencies() const {
    std::vector<double> fs;
    fs.reserve(components.size());
    for (const auto& c : components) fs.push_back(c.f);
    return fs;
  }

  void validate() const {
    if (n < 1) throw std::invalid_argument("SpectralSignal: n must be >= 1");
    if (components.empty()) {
      throw std::invalid_argument("SpectralSignal: needs at least one component");
    }
    double prev = -1.0;
    for (const auto& c : components) {
      if (!(c.f >= 0.0 && c.f < 1.0)) {
        throw std::invalid_argument("SpectralSignal: frequency outside [0,1)");
      }
      if (!(c.amp > 0.0)) {
        throw std::invalid_argument("SpectralSignal: amplitude must be positive");
      }
      if (!(c.phase >= 0.0 && c.phase < 1.0)) {
        throw std::invalid_argument("SpectralSignal: phase outside [0,1)");
      }
      if (c.f <= prev) {
        throw std::invalid_argument("SpectralSignal: frequencies must be strictly increasing");
      }
      prev = c.f;
    }
  }
};

// Sampled complex exponential v(f) = [1, e^{j2pi f}, ..., e^{j2pi(n-1)f}]^T.
inline CVector atom(double f, int n) {
  if (n < 1) throw std::invalid_argument("atom: n must be >= 1");
  if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("atom: f outside [0,1)");
  CVector v(n);
  for (int i = 0; i < n; ++i) v(i) = std::exp(kImag * (kTwoPi * f * i));
  return v;
}

// Entrywise frequency derivative dv/df; entry i is j*2pi*i * e^{j2pi f i}.
inline CVector atom_derivative(double f, int n) {
  if (n < 1) throw std::invalid_argument("atom_derivative: n must be >= 1");
  if (!(f >= 0.0 && f < 1.0)) {
    throw std::invalid_argument("atom_derivative: f outside [0,1)");
  }
  CVector g(n);
  for (int i = 0; i < n; ++i) {
    g(i) = kImag * (kTwoPi * i) * std::exp(kImag * (kTwoPi * f * i));
  }
  return g;
}

inline CVector synthesize(const SpectralSignal& sig) {
  sig.validate();
  CVector x = CVector::Zero(sig.n);
  for (const auto& c : sig.components) x += c.coefficient() * atom(c.f, sig.n);
  return x;
}

// Smallest pairwise wrap-around gap.
inline double min_separation(const std::vector<double>& freqs) {
  if (freqs.size() < 2) {
    throw std::invalid_argument("min_separation: needs at least two frequencies");
  }
  std::vector<double> fs(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    double f = std::fmod(freqs[i], 1.0);
    if (f < 0.0) f += 1.0;
    fs[i] = f;
  }
  std::sort(fs.begin(), fs.end());
  double best = 1.0 - (fs.back() - fs.front());  // gap across the wrap point
  for (std::size_t i = 1; i < fs.size(); ++i) best = std::min(best, fs[i] - fs[i - 1]);
  return best;
}

// Rejection-samples K frequencies with pairwise wrap separation >= min_sep,
// uniform phases and uniform amplitudes in amplitude_range.
inline SpectralSignal random_signal(int n, int K, double min_sep,
                                    std::pair<double, double> amplitude_range,
                                    std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("random_signal: n must be >= 1");
  if (K < 1) throw std::invalid_argument("random_signal: K must be >= 1");
  if (min_sep < 0.0) throw std::invalid_argument("random_signal: min_sep must be >= 0");
  const auto [lo, hi] = amplitude_range;
  if (!(lo > 0.0 && hi >= lo)) {
    throw std::invalid_argument("random_signal: invalid amplitude range");
  }
  // K points on the circle always consume K*min_sep of circumference.
  if (K > 1 && K * min_sep >= 1.0) {
    throw std::invalid_argument("random_signal: min_sep infeasible for K frequencies");
  }

  Rng rng(seed, seed_salt::signal);
  std::vector<double> fs(K);
  constexpr int kMaxAttempts = 10000;
  int attempt = 0;
  for (;; ++attempt) {
    if (attempt >= kMaxAttempts) {
      throw std::runtime_error("random_signal: rejection sampling exhausted attempts");
    }
    for (int k = 0; k < K; ++k) fs[k] = rng.uniform();
    if (K == 1 || min_separation(fs) >= min_sep) break;
  }
  std::sort(fs.begin(), fs.end());

  SpectralSignal sig;
  sig.n = n;
  sig.components.resize(K);
  for (int k = 0; k < K; ++k) {
    sig.components[k].f = fs[k];
    sig.components[k].amp = rng.uniform(lo, hi);
    sig.components[k].phase = rng.uniform();
  }
  sig.validate();
  return sig;
}

inline void to_json(nlohmann::json& j, const SpectralComponent& c) {
  j = nlohmann::json{{"f", c.f}, {"A", c.amp}, {"phi", c.phase}};
}

inline void from_json(const nlohmann::json& j, SpectralComponent& c) {
  j.at("f").get_to(c.f);
  j.at("A").get_to(c.amp);
  j.at("phi").get_to(c.phase);
}

inline void to_json(nlohmann::json& j, const SpectralSignal& s) {
  j = nlohmann::json{{"n", s.n}, {"components", s.components}};
}

inline void from_json(const nlohmann::json& j, SpectralSignal& s) {
  j.at("n").get_to(s.n);
  j.at("components").get_to(s.components);
  s.validate();
}

}  // namespace qsc
