#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsc/ast.hpp"
#include "qsc/common.hpp"
#include "qsc/crb.hpp"
#include "qsc/localization.hpp"
#include "qsc/quantization.hpp"
#include "qsc/rng.hpp"
#include "qsc/sensing.hpp"
#include "qsc/spectral_model.hpp"
#include "qsc/version.hpp"

namespace qsc {

// ---------------------------------------------------------------------------
// Tabular datasets
// ---------------------------------------------------------------------------

// Shortest round-trippable decimal form; "" encodes a missing value.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_int(long long v) { return std::to_string(v); }
inline std::string format_u64(std::uint64_t v) { return std::to_string(v); }

struct Dataset {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) {
      throw std::invalid_argument("Dataset: row width does not match columns");
    }
    rows.push_back(std::move(row));
  }

  std::size_t column_index(const std::string& col) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == col) return i;
    }
    throw std::invalid_argument("Dataset: no column named '" + col + "'");
  }

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ',';
      out += columns[i];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += row[i];
      }
      out += '\n';
    }
    return out;
  }
};

inline void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  out << ds.to_csv();
}

inline Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  Dataset ds;
  ds.name = path.stem().string();
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  ds.columns = split(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    cells.resize(ds.columns.size());
    ds.rows.push_back(std::move(cells));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct QuantizerChoice {
  enum class Kind { none, sign, lloyd } kind = Kind::sign;
  int bits = 1;
};

// Accepts "none", "sign", or "lloyd:<bits>".
inline QuantizerChoice parse_quantizer(const std::string& text) {
  QuantizerChoice q;
  if (text == "none") {
    q.kind = QuantizerChoice::Kind::none;
    q.bits = 0;
  } else if (text == "sign") {
    q.kind = QuantizerChoice::Kind::sign;
    q.bits = 1;
  } else if (text.rfind("lloyd:", 0) == 0) {
    q.kind = QuantizerChoice::Kind::lloyd;
    q.bits = std::stoi(text.substr(6));
    if (q.bits < 1 || q.bits > 16) {
      throw std::invalid_argument("quantizer: lloyd bit depth out of range");
    }
  } else {
    throw std::invalid_argument("quantizer: expected none | sign | lloyd:<bits>, got '" +
                                text + "'");
  }
  return q;
}

inline std::string quantizer_name(const QuantizerChoice& q) {
  switch (q.kind) {
    case QuantizerChoice::Kind::none:
      return "none";
    case QuantizerChoice::Kind::sign:
      return "sign";
    case QuantizerChoice::Kind::lloyd:
      return "lloyd:" + std::to_string(q.bits);
  }
  return "unknown";
}

// Quantizer realization for a given operating point; Lloyd codebooks are
// matched to the true standard deviation of each measurement component.
inline std::optional<QuantizerSpec> make_quantizer(const QuantizerChoice& q,
                                                   double signal_norm, double sigma) {
  switch (q.kind) {
    case QuantizerChoice::Kind::none:
      return std::nullopt;
    case QuantizerChoice::Kind::sign:
      return sign_quantizer();
    case QuantizerChoice::Kind::lloyd:
      return lloyd_max(q.bits, matched_input_std(signal_norm, sigma));
  }
  return std::nullopt;
}

struct ExperimentConfig {
  std::string kind;  // crb_vs_snr | crb_fixed_bits | lambda_curve | dual_poly_demo |
                     // error_vs_m | error_vs_k | mse_vs_crb | mmv_sweep
  int n = 64;
  std::optional<SpectralSignal> signal;  // explicit signal; otherwise random
  int K = 3;
  double min_separation = 0.0;  // 0 = auto (1.5/n) for random signals
  std::array<double, 2> amplitude_range{0.5, 1.0};
  int m = 100;
  int bit_budget = 0;
  std::vector<double> snr_db;
  std::vector<int> m_grid;
  std::vector<int> k_grid;
  std::vector<int> snapshot_grid;
  std::vector<std::string> models{"sign", "lloyd:2", "none"};  // CRB sweeps
  std::string quantizer = "sign";                              // recovery pipelines
  int trials = 50;
  std::uint64_t seed = 1;
  double eta = 1.0;
  double tau = 0.0;  // explicit regularizer; 0 = per-kind default
  SolverOptions solver;
  std::string output_dir = ".";
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["kind"] = c.kind;
  j["n"] = c.n;
  if (c.signal) j["signal"] = *c.signal;
  j["K"] = c.K;
  j["min_separation"] = c.min_separation;
  j["amplitude_range"] = c.amplitude_range;
  j["m"] = c.m;
  j["bit_budget"] = c.bit_budget;
  j["snr_db"] = c.snr_db;
  j["m_grid"] = c.m_grid;
  j["k_grid"] = c.k_grid;
  j["snapshot_grid"] = c.snapshot_grid;
  j["models"] = c.models;
  j["quantizer"] = c.quantizer;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["eta"] = c.eta;
  j["tau"] = c.tau;
  j["solver"] = {{"tol", c.solver.tol},
                 {"max_iter", c.solver.max_iter},
                 {"rho", c.solver.rho},
                 {"adapt_rho", c.solver.adapt_rho},
                 {"checkpoint_every", c.solver.checkpoint_every}};
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.kind = j.at("kind").get<std::string>();
  c.n = j.value("n", c.n);
  if (j.contains("signal")) c.signal = j.at("signal").get<SpectralSignal>();
  c.K = j.value("K", c.K);
  c.min_separation = j.value("min_separation", c.min_separation);
  if (j.contains("amplitude_range")) {
    c.amplitude_range = j.at("amplitude_range").get<std::array<double, 2>>();
  }
  c.m = j.value("m", c.m);
  c.bit_budget = j.value("bit_budget", c.bit_budget);
  c.snr_db = j.value("snr_db", c.snr_db);
  c.m_grid = j.value("m_grid", c.m_grid);
  c.k_grid = j.value("k_grid", c.k_grid);
  c.snapshot_grid = j.value("snapshot_grid", c.snapshot_grid);
  c.models = j.value("models", c.models);
  c.quantizer = j.value("quantizer", c.quantizer);
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  c.eta = j.value("eta", c.eta);
  c.tau = j.value("tau", c.tau);
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    c.solver.tol = s.value("tol", c.solver.tol);
    c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
    c.solver.rho = s.value("rho", c.solver.rho);
    c.solver.adapt_rho = s.value("adapt_rho", c.solver.adapt_rho);
    c.solver.checkpoint_every = s.value("checkpoint_every", c.solver.checkpoint_every);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

inline void validate_config(const ExperimentConfig& c) {
  static const std::vector<std::string> kinds{
      "crb_vs_snr", "crb_fixed_bits", "lambda_curve", "dual_poly_demo",
      "error_vs_m", "error_vs_k",     "mse_vs_crb",   "mmv_sweep"};
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
    throw std::invalid_argument("config: unknown experiment kind '" + c.kind + "'");
  }
  if (c.n < 2) throw std::invalid_argument("config: n must be >= 2");
  if (c.trials < 1) throw std::invalid_argument("config: trials must be >= 1");
  if (c.snr_db.empty()) throw std::invalid_argument("config: snr_db grid is empty");
  if (c.signal && c.signal->n != c.n) {
    throw std::invalid_argument("config: signal length does not match n");
  }
  if (c.kind == "crb_fixed_bits") {
    if (c.bit_budget < 2) throw std::invalid_argument("config: bit_budget must be >= 2");
    for (const auto& model : c.models) {
      const auto q = parse_quantizer(model);
      if (q.bits > 0 && c.bit_budget % q.bits != 0) {
        throw std::invalid_argument("config: bit_budget not divisible by bit depth of " +
                                    model);
      }
    }
  }
  if (c.kind == "error_vs_m" && c.m_grid.empty()) {
    throw std::invalid_argument("config: m_grid is empty");
  }
  if (c.kind == "error_vs_k" && c.k_grid.empty()) {
    throw std::invalid_argument("config: k_grid is empty");
  }
  if (c.kind == "mmv_sweep" && c.snapshot_grid.empty()) {
    throw std::invalid_argument("config: snapshot_grid is empty");
  }
  for (const auto& model : c.models) parse_quantizer(model);
  parse_quantizer(c.quantizer);
}

// Signal used by a config: the explicit one, or a seeded random draw.
inline SpectralSignal config_signal(const ExperimentConfig& c, std::uint64_t seed,
                                    int K_override = 0) {
  if (c.signal && K_override == 0) return *c.signal;
  const int K = K_override > 0 ? K_override : c.K;
  const double sep = c.min_separation > 0.0 ? c.min_separation : 1.5 / c.n;
  return random_signal(c.n, K, sep, {c.amplitude_range[0], c.amplitude_range[1]}, seed);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(config_to_json(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::vector<Dataset> datasets;
  nlohmann::json manifest;
  int total_solves = 0;
  int unconverged = 0;

  const Dataset& dataset(const std::string& name) const {
    for (const auto& ds : datasets) {
      if (ds.name == name) return ds;
    }
    throw std::invalid_argument("ExperimentResult: no dataset named '" + name + "'");
  }
};

namespace detail {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double sigma_for_snr(double signal_norm_sq, double snr_linear) {
  return std::sqrt(signal_norm_sq / snr_linear);
}

// Type-7 linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(h);
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = h - static_cast<double>(lo);
  return v[lo] * (1.0 - w) + v[hi] * w;
}

struct QuartileSummary {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

inline std::optional<QuartileSummary> quartiles(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  return QuartileSummary{quantile_sorted(v, 0.25), quantile_sorted(v, 0.5),
                         quantile_sorted(v, 0.75)};
}

inline void append_crb_rows(Dataset& ds, std::uint64_t seed, long long trial_index,
                            double snr_db, int m_used, FimResult& fr, int params) {
  std::optional<RVector> crb;
  try {
    crb_from_fim(fr);
    crb = fr.crb_diagonal;
  } catch (const SingularFim&) {
    crb.reset();
  }
  for (int p = 0; p < params; ++p) {
    ds.add_row({format_u64(seed), format_int(trial_index), format_double(snr_db),
                format_int(m_used), format_int(p), param_kind(p),
                crb ? format_double((*crb)(p)) : std::string{}, model_tag(fr.model),
                format_int(fr.bits)});
  }
}

inline Dataset crb_dataset(const std::string& name) {
  Dataset ds;
  ds.name = name;
  ds.columns = {"seed",       "trial_index", "snr_db",    "m",         "param_index",
                "param_kind", "crb_value",   "model_tag", "bit_depth"};
  return ds;
}

inline nlohmann::json make_manifest(const ExperimentConfig& cfg,
                                    const std::vector<Dataset>& datasets,
                                    const std::vector<std::uint64_t>& trial_seeds) {
  nlohmann::json m;
  m["kind"] = cfg.kind;
  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  m["config_hash"] = config_hash(cfg);
  m["code_version"] = kVersion;
  m["trial_seeds"] = trial_seeds;
  std::vector<std::string> names;
  names.reserve(datasets.size());
  for (const auto& ds : datasets) names.push_back(ds.name);
  m["datasets"] = names;
  return m;
}

}  // namespace detail

// CRB of every parameter on an SNR grid for each measurement model, with one
// sensing matrix fixed by the config seed.
inline ExperimentResult run_crb_vs_snr(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const SpectralSignal sig = config_signal(cfg, cfg.seed);
  const CVector x = synthesize(sig);
  const double norm_sq = x.squaredNorm();
  const CMatrix A = gaussian_matrix(cfg.m, cfg.n, cfg.seed);
  const int params = 3 * sig.K();

  Dataset ds = detail::crb_dataset("crb_vs_snr");
  for (double snr_db : cfg.snr_db) {
    const double sigma = detail::sigma_for_snr(norm_sq, detail::db_to_linear(snr_db));
    for (const auto& model : cfg.models) {
      const QuantizerChoice q = parse_quantizer(model);
      FimResult fr;
      switch (q.kind) {
        case QuantizerChoice::Kind::none:
          fr = fim_unquantized(A, sig, sigma);
          break;
        case QuantizerChoice::Kind::sign:
          fr = fim_onebit(A, sig, sigma);
          break;
        case QuantizerChoice::Kind::lloyd:
          fr = fim_quantized(A, sig, sigma,
                             lloyd_max(q.bits, matched_input_std(std::sqrt(norm_sq), sigma)));
          break;
      }
      detail::append_crb_rows(ds, cfg.seed, 0, snr_db, cfg.m, fr, params);
    }
  }

  ExperimentResult res;
  res.datasets.push_back(std::move(ds));
  res.manifest = detail::make_manifest(cfg, res.datasets, {cfg.seed});
  return res;
}

// CRB curves at a fixed total bit budget B: a b-bit quantizer reads the first
// B/b rows of the same sensing matrix.
inline ExperimentResult run_crb_fixed_bits(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const SpectralSignal sig = config_signal(cfg, cfg.seed);
  const CVector x = synthesize(sig);
  const double norm_sq = x.squaredNorm();
  const int B = cfg.bit_budget;
  const CMatrix A = gaussian_matrix(B, cfg.n, cfg.seed);
  const int params = 3 * sig.K();

  Dataset ds = detail::crb_dataset("crb_fixed_bits");
  for (double snr_db : cfg.snr_db) {
    const double sigma = detail::sigma_for_snr(norm_sq, detail::db_to_linear(snr_db));
    for (const auto& model : cfg.models) {
      const QuantizerChoice q = parse_quantizer(model);
      if (q.kind == QuantizerChoice::Kind::none) continue;  // no bit cost defined
      const int m_used = B / q.bits;
      const CMatrix Ab = A.topRows(m_used);
      FimResult fr;
      if (q.kind == QuantizerChoice::Kind::sign) {
        fr = fim_onebit(Ab, sig, sigma);
      } else {
        fr = fim_quantized(Ab, sig, sigma,
                           lloyd_max(q.bits, matched_input_std(std::sqrt(norm_sq), sigma)));
      }
      detail::append_crb_rows(ds, cfg.seed, 0, snr_db, m_used, fr, params);
    }
  }

  ExperimentResult res;
  res.datasets.push_back(std::move(ds));
  res.manifest = detail::make_manifest(cfg, res.datasets, {cfg.seed});
  return res;
}

// Mean shrinkage factor of the sign-quantized surrogate across an SNR grid.
inline ExperimentResult run_lambda_curve(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Dataset ds;
  ds.name = "lambda_curve";
  ds.columns = {"seed", "trial_index", "snr_db", "lambda"};
  for (double snr_db : cfg.snr_db) {
    ds.add_row({format_u64(cfg.seed), "0", format_double(snr_db),
                format_double(expected_scale(detail::db_to_linear(snr_db)))});
  }
  ExperimentResult res;
  res.datasets.push_back(std::move(ds));
  res.manifest = detail::make_manifest(cfg, res.datasets, {cfg.seed});
  return res;
}

// One full recovery at the first SNR point, exporting the certificate
// polynomial together with estimated and true frequencies.
inline ExperimentResult run_dual_poly_demo(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const SpectralSignal sig = config_signal(cfg, cfg.seed);
  const CVector x = synthesize(sig);
  const double snr_db = cfg.snr_db.front();
  const double sigma = detail::sigma_for_snr(x.squaredNorm(), detail::db_to_linear(snr_db));
  const std::uint64_t trial_seed = derive_seed(cfg.seed, seed_salt::trial_base);

  const CMatrix A = gaussian_matrix(cfg.m, cfg.n, trial_seed);
  const MeasurementSet ms = measure(A, x, sigma, trial_seed);
  const QuantizerChoice q = parse_quantizer(cfg.quantizer);

  AstSolution sol;
  if (q.kind == QuantizerChoice::Kind::none) {
    const double tau = cfg.tau > 0.0
                           ? cfg.tau
                           : default_tau_unquantized(cfg.n, cfg.m, sigma, cfg.eta);
    sol = ast_unquantized(A, ms.z, tau, cfg.solver);
  } else {
    const auto spec = make_quantizer(q, x.norm(), sigma);
    const CVector y = quantize_complex(*spec, ms.z);
    const double tau = cfg.tau > 0.0 ? cfg.tau : default_tau(cfg.n, cfg.m, cfg.eta);
    sol = ast_smv(surrogate(A, y), tau, cfg.solver);
  }

  const int grid = 16 * cfg.n;
  const RVector vals = dual_polynomial(CMatrix(sol.dual_scale * sol.dual), grid);
  Dataset poly;
  poly.name = "dual_polynomial";
  poly.columns = {"seed", "trial_index", "f", "value"};
  for (int g = 0; g < grid; ++g) {
    poly.add_row({format_u64(cfg.seed), "0",
                  format_double(static_cast<double>(g) / grid), format_double(vals(g))});
  }

  Dataset freqs;
  freqs.name = "frequencies";
  freqs.columns = {"seed", "trial_index", "type", "f", "value"};
  try {
    const FrequencyEstimate est = localize_dual(sol);
    for (std::size_t i = 0; i < est.frequencies.size(); ++i) {
      freqs.add_row({format_u64(cfg.seed), "0", "estimate",
                     format_double(est.frequencies[i]),
                     format_double(est.peak_values[i])});
    }
  } catch (const std::runtime_error&) {
    // No certificate peaks: leave only the ground truth rows.
  }
  for (const auto& comp : sig.components) {
    freqs.add_row({format_u64(cfg.seed), "0", "truth", format_double(comp.f), ""});
  }

  ExperimentResult res;
  res.total_solves = 1;
  res.unconverged = sol.diagnostics.converged ? 0 : 1;
  res.datasets.push_back(std::move(poly));
  res.datasets.push_back(std::move(freqs));
  res.manifest = detail::make_manifest(cfg, res.datasets, {trial_seed});
  return res;
}

namespace detail {

struct RecoveryTrial {
  double normalized = 1.0;
  double l2 = 0.0;
  int iterations = 0;
  bool converged = false;
  AstSolution sol;
};

// One single-vector recovery: fresh matrix, noise, and quantization, followed
// by the pipeline matched to the quantizer choice.
inline RecoveryTrial run_recovery_trial(const ExperimentConfig& cfg,
                                        const SpectralSignal& sig, int m, double snr_db,
                                        std::uint64_t trial_seed) {
  const CVector x = synthesize(sig);
  const double snr_lin = db_to_linear(snr_db);
  const double sigma = sigma_for_snr(x.squaredNorm(), snr_lin);
  const CMatrix A = gaussian_matrix(m, cfg.n, trial_seed);
  const MeasurementSet ms = measure(A, x, sigma, trial_seed);
  const QuantizerChoice q = parse_quantizer(cfg.quantizer);

  RecoveryTrial t;
  if (q.kind == QuantizerChoice::Kind::none) {
    const double tau =
        cfg.tau > 0.0 ? cfg.tau : default_tau_unquantized(cfg.n, m, sigma, cfg.eta);
    t.sol = ast_unquantized(A, ms.z, tau, cfg.solver);
    t.l2 = (t.sol.xhat.col(0) - x).norm() / x.norm();
  } else {
    const auto spec = make_quantizer(q, x.norm(), sigma);
    const CVector y = quantize_complex(*spec, ms.z);
    const double tau = cfg.tau > 0.0 ? cfg.tau : default_tau(cfg.n, m, cfg.eta);
    t.sol = ast_smv(surrogate(A, y), tau, cfg.solver);
    const double lambda = expected_scale(snr_lin);
    t.l2 = (t.sol.xhat.col(0) / lambda - x / x.norm()).norm();
  }
  t.normalized = normalized_error(t.sol.xhat.col(0), x);
  t.iterations = t.sol.diagnostics.iterations;
  t.converged = t.sol.diagnostics.converged;
  return t;
}

}  // namespace detail

// Recovery error sweeps over m (error_vs_m) or model order (error_vs_k):
// per-trial datasets plus quartile summaries that exclude unconverged solves.
inline ExperimentResult run_recovery_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const bool sweep_k = cfg.kind == "error_vs_k";
  if (!sweep_k && cfg.kind != "error_vs_m") {
    throw std::invalid_argument("run_recovery_sweep: kind must be error_vs_m or error_vs_k");
  }

  Dataset trials;
  trials.name = "trials";
  trials.columns = {"seed",   "trial_index", "m",          "k",
                    "snr_db", "normalized_error", "l2_error", "iterations",
                    "converged"};
  Dataset summary;
  summary.name = "summary";
  summary.columns = {"seed",
                     "m",
                     "k",
                     "snr_db",
                     "trials",
                     "unconverged",
                     "median_normalized_error",
                     "q1_normalized_error",
                     "q3_normalized_error",
                     "median_l2_error",
                     "q1_l2_error",
                     "q3_l2_error"};

  ExperimentResult res;
  std::vector<std::uint64_t> trial_seeds;
  long long trial_counter = 0;

  const std::vector<int> outer = sweep_k ? cfg.k_grid : cfg.m_grid;
  for (int outer_val : outer) {
    const int m = sweep_k ? cfg.m : outer_val;
    for (double snr_db : cfg.snr_db) {
      std::vector<double> ne, l2;
      int unconv = 0;
      int k_used = 0;
      for (int trial = 0; trial < cfg.trials; ++trial, ++trial_counter) {
        const std::uint64_t trial_seed =
            derive_seed(cfg.seed, seed_salt::trial_base + static_cast<std::uint64_t>(trial_counter));
        trial_seeds.push_back(trial_seed);
        const SpectralSignal sig = sweep_k
                                       ? config_signal(cfg, trial_seed, outer_val)
                                       : config_signal(cfg, cfg.seed);
        k_used = sig.K();
        const auto t = detail::run_recovery_trial(cfg, sig, m, snr_db, trial_seed);
        ++res.total_solves;
        if (!t.converged) {
          ++unconv;
          ++res.unconverged;
        } else {
          ne.push_back(t.normalized);
          l2.push_back(t.l2);
        }
        trials.add_row({format_u64(cfg.seed), format_int(trial_counter),
                        format_int(m), format_int(sig.K()), format_double(snr_db),
                        format_double(t.normalized), format_double(t.l2),
                        format_int(t.iterations), t.converged ? "1" : "0"});
      }
      const auto qn = detail::quartiles(ne);
      const auto ql = detail::quartiles(l2);
      summary.add_row({format_u64(cfg.seed), format_int(m), format_int(k_used),
                       format_double(snr_db), format_int(cfg.trials), format_int(unconv),
                       qn ? format_double(qn->median) : std::string{},
                       qn ? format_double(qn->q1) : std::string{},
                       qn ? format_double(qn->q3) : std::string{},
                       ql ? format_double(ql->median) : std::string{},
                       ql ? format_double(ql->q1) : std::string{},
                       ql ? format_double(ql->q3) : std::string{}});
    }
  }

  res.datasets.push_back(std::move(trials));
  res.datasets.push_back(std::move(summary));
  res.manifest = detail::make_manifest(cfg, res.datasets, trial_seeds);
  return res;
}

// Frequency mean-squared error of the dual-certificate estimator against the
// per-trial CRB average, on a fixed two-tone style configuration.
inline ExperimentResult run_mse_vs_crb(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const SpectralSignal sig = config_signal(cfg, cfg.seed);
  const CVector x = synthesize(sig);
  const int K = sig.K();
  const QuantizerChoice q = parse_quantizer(cfg.quantizer);

  Dataset trials;
  trials.name = "trials";
  trials.columns = {"seed",   "trial_index", "snr_db", "component", "f_true",
                    "f_hat",  "sq_error",    "crb_f",  "converged", "localized"};
  Dataset summary;
  summary.name = "summary";
  summary.columns = {"seed",  "snr_db",   "component", "f_true",    "trials_used",
                     "mse",   "mean_crb", "model_tag", "bit_depth"};

  ExperimentResult res;
  std::vector<std::uint64_t> trial_seeds;
  long long trial_counter = 0;

  for (double snr_db : cfg.snr_db) {
    const double snr_lin = detail::db_to_linear(snr_db);
    const double sigma = detail::sigma_for_snr(x.squaredNorm(), snr_lin);
    std::vector<std::vector<double>> sq_errors(static_cast<std::size_t>(K));
    std::vector<double> crb_sums(static_cast<std::size_t>(K), 0.0);
    std::vector<int> crb_counts(static_cast<std::size_t>(K), 0);
    int used = 0;

    for (int trial = 0; trial < cfg.trials; ++trial, ++trial_counter) {
      const std::uint64_t trial_seed =
          derive_seed(cfg.seed, seed_salt::trial_base + static_cast<std::uint64_t>(trial_counter));
      trial_seeds.push_back(trial_seed);
      const auto t = detail::run_recovery_trial(cfg, sig, cfg.m, snr_db, trial_seed);
      ++res.total_solves;
      if (!t.converged) ++res.unconverged;

      // Per-trial CRB of the frequency parameters for this sensing matrix.
      const CMatrix A = gaussian_matrix(cfg.m, cfg.n, trial_seed);
      std::optional<RVector> crb;
      try {
        FimResult fr;
        if (q.kind == QuantizerChoice::Kind::none) {
          fr = fim_unquantized(A, sig, sigma);
        } else if (q.kind == QuantizerChoice::Kind::sign) {
          fr = fim_onebit(A, sig, sigma);
        } else {
          fr = fim_quantized(A, sig, sigma,
                             lloyd_max(q.bits, matched_input_std(x.norm(), sigma)));
        }
        crb_from_fim(fr);
        crb = fr.crb_diagonal;
      } catch (const SingularFim&) {
        crb.reset();
      }

      std::optional<FrequencyEstimate> est;
      if (t.converged) {
        try {
          est = localize_dual(t.sol);
        } catch (const std::runtime_error&) {
          est.reset();
        }
      }
      if (est) ++used;

      for (int k = 0; k < K; ++k) {
        const double f_true = sig.components[static_cast<std::size_t>(k)].f;
        std::optional<double> f_hat;
        if (est) {
          double best = std::numeric_limits<double>::infinity();
          for (double f : est->frequencies) {
            if (wrap_distance(f, f_true) < best) {
              best = wrap_distance(f, f_true);
              f_hat = f;
            }
          }
        }
        std::optional<double> sq;
        if (f_hat) {
          const double d = wrap_distance(*f_hat, f_true);
          sq = d * d;
          sq_errors[static_cast<std::size_t>(k)].push_back(*sq);
        }
        if (crb) {
          crb_sums[static_cast<std::size_t>(k)] += (*crb)(3 * k);
          ++crb_counts[static_cast<std::size_t>(k)];
        }
        trials.add_row({format_u64(cfg.seed), format_int(trial_counter),
                        format_double(snr_db), format_int(k), format_double(f_true),
                        f_hat ? format_double(*f_hat) : std::string{},
                        sq ? format_double(*sq) : std::string{},
                        crb ? format_double((*crb)(3 * k)) : std::string{},
                        t.converged ? "1" : "0", est ? "1" : "0"});
      }
    }

    for (int k = 0; k < K; ++k) {
      const auto& errs = sq_errors[static_cast<std::size_t>(k)];
      double mse = 0.0;
      for (double e : errs) mse += e;
      if (!errs.empty()) mse /= static_cast<double>(errs.size());
      const int cc = crb_counts[static_cast<std::size_t>(k)];
      summary.add_row(
          {format_u64(cfg.seed), format_double(snr_db), format_int(k),
           format_double(sig.components[static_cast<std::size_t>(k)].f),
           format_int(static_cast<long long>(errs.size())),
           errs.empty() ? std::string{} : format_double(mse),
           cc > 0 ? format_double(crb_sums[static_cast<std::size_t>(k)] / cc)
                  : std::string{},
           quantizer_name(q), format_int(q.bits)});
    }
  }

  res.datasets.push_back(std::move(trials));
  res.datasets.push_back(std::move(summary));
  res.manifest = detail::make_manifest(cfg, res.datasets, trial_seeds);
  return res;
}

// Multi-snapshot recovery across a snapshot grid: per-snapshot SNR fixes the
// noise level, coefficients are fresh standard complex Gaussians each trial.
inline ExperimentResult run_mmv_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const SpectralSignal sig = config_signal(cfg, cfg.seed);
  const int K = sig.K();
  CMatrix V(cfg.n, K);
  for (int k = 0; k < K; ++k) V.col(k) = atom(sig.components[static_cast<std::size_t>(k)].f, cfg.n);
  const std::vector<double> f_true = sig.frequencies();
  const QuantizerChoice q = parse_quantizer(cfg.quantizer);

  Dataset trials;
  trials.name = "trials";
  trials.columns = {"seed",          "trial_index",  "snapshots", "snr_db",
                    "subspace_error", "sq_hausdorff", "iterations", "converged",
                    "localized"};
  Dataset summary;
  summary.name = "summary";
  summary.columns = {"seed",
                     "snapshots",
                     "snr_db",
                     "trials",
                     "unconverged",
                     "median_subspace_error",
                     "q1_subspace_error",
                     "q3_subspace_error",
                     "median_sq_hausdorff",
                     "q1_sq_hausdorff",
                     "q3_sq_hausdorff"};

  ExperimentResult res;
  std::vector<std::uint64_t> trial_seeds;
  long long trial_counter = 0;

  for (int T : cfg.snapshot_grid) {
    if (T < 1) throw std::invalid_argument("mmv_sweep: snapshots must be >= 1");
    for (double snr_db : cfg.snr_db) {
      const double snr_lin = detail::db_to_linear(snr_db);
      std::vector<double> sub_errors, sq_hausdorffs;
      int unconv = 0;
      for (int trial = 0; trial < cfg.trials; ++trial, ++trial_counter) {
        const std::uint64_t trial_seed =
            derive_seed(cfg.seed, seed_salt::trial_base + static_cast<std::uint64_t>(trial_counter));
        trial_seeds.push_back(trial_seed);

        Rng coeff_rng(trial_seed, seed_salt::coefficients);
        CMatrix C(K, T);
        for (int t = 0; t < T; ++t) {
          for (int k = 0; k < K; ++k) C(k, t) = coeff_rng.complex_normal();
        }
        const CMatrix Xstar = V * C;
        const double sigma =
            std::sqrt(Xstar.squaredNorm() / (static_cast<double>(T) * snr_lin));
        const CMatrix A = gaussian_matrix(cfg.m, cfg.n, trial_seed);
        const CMatrix Z = measure_mmv(A, Xstar, sigma, trial_seed);

        AstSolution sol;
        if (q.kind == QuantizerChoice::Kind::none) {
          throw std::invalid_argument("mmv_sweep: unquantized pipeline not supported");
        }
        const auto spec = make_quantizer(q, std::sqrt(Xstar.squaredNorm() / T), sigma);
        const CMatrix Y = quantize_complex(*spec, Z);
        const double tau = cfg.tau > 0.0 ? cfg.tau : default_tau_mmv(cfg.n, cfg.m, T);
        sol = ast_mmv(surrogate(A, Y), tau, cfg.solver);
        ++res.total_solves;
        if (!sol.diagnostics.converged) {
          ++unconv;
          ++res.unconverged;
        }

        const double sub_err = subspace_angle_error(sol.xhat, Xstar);
        std::optional<double> sqh;
        try {
          const FrequencyEstimate est = subspace_estimate(sol.xhat, K);
          const double h = hausdorff(est.frequencies, f_true, true);
          sqh = h * h;
        } catch (const std::exception&) {
          sqh.reset();
        }
        if (sol.diagnostics.converged) {
          sub_errors.push_back(sub_err);
          if (sqh) sq_hausdorffs.push_back(*sqh);
        }
        trials.add_row({format_u64(cfg.seed), format_int(trial_counter),
                        format_int(T), format_double(snr_db), format_double(sub_err),
                        sqh ? format_double(*sqh) : std::string{},
                        format_int(sol.diagnostics.iterations),
                        sol.diagnostics.converged ? "1" : "0", sqh ? "1" : "0"});
      }
      const auto qs = detail::quartiles(sub_errors);
      const auto qh = detail::quartiles(sq_hausdorffs);
      summary.add_row({format_u64(cfg.seed), format_int(T), format_double(snr_db),
                       format_int(cfg.trials), format_int(unconv),
                       qs ? format_double(qs->median) : std::string{},
                       qs ? format_double(qs->q1) : std::string{},
                       qs ? format_double(qs->q3) : std::string{},
                       qh ? format_double(qh->median) : std::string{},
                       qh ? format_double(qh->q1) : std::string{},
                       qh ? format_double(qh->q3) : std::string{}});
    }
  }

  res.datasets.push_back(std::move(trials));
  res.datasets.push_back(std::move(summary));
  res.manifest = detail::make_manifest(cfg, res.datasets, trial_seeds);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.kind == "crb_vs_snr") return run_crb_vs_snr(cfg);
  if (cfg.kind == "crb_fixed_bits") return run_crb_fixed_bits(cfg);
  if (cfg.kind == "lambda_curve") return run_lambda_curve(cfg);
  if (cfg.kind == "dual_poly_demo") return run_dual_poly_demo(cfg);
  if (cfg.kind == "error_vs_m" || cfg.kind == "error_vs_k") return run_recovery_sweep(cfg);
  if (cfg.kind == "mse_vs_crb") return run_mse_vs_crb(cfg);
  if (cfg.kind == "mmv_sweep") return run_mmv_sweep(cfg);
  throw std::invalid_argument("run_experiment: unknown kind " + cfg.kind);
}

// Writes every dataset as <dir>/<name>.csv plus manifest.json; returns paths.
inline std::vector<std::filesystem::path> write_experiment_result(
    const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& ds : res.datasets) {
    auto p = dir / (ds.name + ".csv");
    write_csv(ds, p);
    paths.push_back(std::move(p));
  }
  auto mp = dir / "manifest.json";
  std::ofstream out(mp, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + mp.string());
  out << res.manifest.dump(2) << '\n';
  paths.push_back(std::move(mp));
  return paths;
}

// ---------------------------------------------------------------------------
// Plotting
// ---------------------------------------------------------------------------

struct PlotStyle {
  std::string x_column;
  std::string y_column;
  std::string group_column;  // empty = single series
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 420;
  std::string title;
  std::string x_label;
  std::string y_label;
};

inline PlotStyle plot_style_from_json(const nlohmann::json& j) {
  PlotStyle s;
  s.x_column = j.at("x").get<std::string>();
  s.y_column = j.at("y").get<std::string>();
  s.group_column = j.value("group", std::string{});
  s.log_x = j.value("log_x", false);
  s.log_y = j.value("log_y", false);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.title = j.value("title", std::string{});
  s.x_label = j.value("x_label", s.x_column);
  s.y_label = j.value("y_label", s.y_column);
  return s;
}

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

// Deterministic SVG line plot: same dataset and style give identical bytes.
inline std::string emit_plot(const Dataset& ds, const PlotStyle& style) {
  const std::size_t xi = ds.column_index(style.x_column);
  const std::size_t yi = ds.column_index(style.y_column);
  const bool grouped = !style.group_column.empty();
  const std::size_t gi = grouped ? ds.column_index(style.group_column) : 0;

  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& row : ds.rows) {
    const std::string& xs = row[xi];
    const std::string& ys = row[yi];
    if (xs.empty() || ys.empty()) continue;
    char* end = nullptr;
    const double x = std::strtod(xs.c_str(), &end);
    if (end == xs.c_str()) continue;
    const double y = std::strtod(ys.c_str(), &end);
    if (end == ys.c_str()) continue;
    if (style.log_x && !(x > 0.0)) continue;
    if (style.log_y && !(y > 0.0)) continue;
    series[grouped ? row[gi] : std::string{"series"}].emplace_back(
        style.log_x ? std::log10(x) : x, style.log_y ? std::log10(y) : y);
  }
  if (series.empty()) throw std::invalid_argument("emit_plot: no plottable points");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& [name, pts] : series) {
    for (const auto& [x, y] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const double ml = 70.0, mr = 150.0, mt = 34.0, mb = 48.0;
  const double W = style.width, H = style.height;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  static const std::array<const char*, 8> palette{"#1f77b4", "#d62728", "#2ca02c",
                                                  "#9467bd", "#ff7f0e", "#8c564b",
                                                  "#17becf", "#7f7f7f"};
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(W) +
         "\" height=\"" + detail::svg_num(H) + "\" viewBox=\"0 0 " + detail::svg_num(W) +
         " " + detail::svg_num(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!style.title.empty()) {
    svg += "<text x=\"" + detail::svg_num(ml + pw / 2) +
           "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" +
           style.title + "</text>\n";
  }
  svg += "<rect x=\"" + detail::svg_num(ml) + "\" y=\"" + detail::svg_num(mt) +
         "\" width=\"" + detail::svg_num(pw) + "\" height=\"" + detail::svg_num(ph) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";

  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    const double gx = px(fx), gy = py(fy);
    svg += "<line x1=\"" + detail::svg_num(gx) + "\" y1=\"" + detail::svg_num(mt + ph) +
           "\" x2=\"" + detail::svg_num(gx) + "\" y2=\"" +
           detail::svg_num(mt + ph + 5) + "\" stroke=\"#333333\"/>\n";
    svg += "<text x=\"" + detail::svg_num(gx) + "\" y=\"" +
           detail::svg_num(mt + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::tick_label(style.log_x ? std::pow(10.0, fx) : fx) + "</text>\n";
    svg += "<line x1=\"" + detail::svg_num(ml - 5) + "\" y1=\"" + detail::svg_num(gy) +
           "\" x2=\"" + detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(gy) +
           "\" stroke=\"#333333\"/>\n";
    svg += "<text x=\"" + detail::svg_num(ml - 8) + "\" y=\"" +
           detail::svg_num(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::tick_label(style.log_y ? std::pow(10.0, fy) : fy) + "</text>\n";
  }
  if (!style.x_label.empty()) {
    svg += "<text x=\"" + detail::svg_num(ml + pw / 2) + "\" y=\"" +
           detail::svg_num(H - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           style.x_label + "</text>\n";
  }
  if (!style.y_label.empty()) {
    svg += "<text x=\"16\" y=\"" + detail::svg_num(mt + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 " +
           detail::svg_num(mt + ph / 2) + ")\">" + style.y_label + "</text>\n";
  }

  int color = 0;
  double legend_y = mt + 12.0;
  for (const auto& [name, pts] : series) {
    const char* stroke = palette[static_cast<std::size_t>(color % 8)];
    std::string poly = "<polyline fill=\"none\" stroke=\"";
    poly += stroke;
    poly += "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) poly += ' ';
      poly += detail::svg_num(px(pts[i].first)) + "," + detail::svg_num(py(pts[i].second));
    }
    poly += "\"/>\n";
    svg += poly;
    for (const auto& [x, y] : pts) {
      svg += "<circle cx=\"" + detail::svg_num(px(x)) + "\" cy=\"" +
             detail::svg_num(py(y)) + "\" r=\"2.2\" fill=\"" + stroke + "\"/>\n";
    }
    svg += "<line x1=\"" + detail::svg_num(ml + pw + 10) + "\" y1=\"" +
           detail::svg_num(legend_y - 4) + "\" x2=\"" + detail::svg_num(ml + pw + 30) +
           "\" y2=\"" + detail::svg_num(legend_y - 4) + "\" stroke=\"" + stroke +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + detail::svg_num(ml + pw + 34) + "\" y=\"" +
           detail::svg_num(legend_y) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + name + "</text>\n";
    legend_y += 16.0;
    ++color;
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Raw measurement / solution export
// ---------------------------------------------------------------------------

inline void write_measurements_csv(const MeasurementSet& ms, std::ostream& out) {
  out << "row,re_z,im_z\n";
  for (Eigen::Index i = 0; i < ms.z.size(); ++i) {
    out << i << ',' << format_double(ms.z(i).real()) << ','
        << format_double(ms.z(i).imag()) << '\n';
  }
}

// Layout: uint64 rows, uint64 cols, row-major (re, im) doubles.
inline void write_complex_matrix_binary(const CMatrix& M, std::ostream& out) {
  const std::uint64_t r = static_cast<std::uint64_t>(M.rows());
  const std::uint64_t c = static_cast<std::uint64_t>(M.cols());
  out.write(reinterpret_cast<const char*>(&r), sizeof(r));
  out.write(reinterpret_cast<const char*>(&c), sizeof(c));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      const double re = M(i, j).real(), im = M(i, j).imag();
      out.write(reinterpret_cast<const char*>(&re), sizeof(re));
      out.write(reinterpret_cast<const char*>(&im), sizeof(im));
    }
  }
}

inline void write_complex_matrix_csv(const CMatrix& M, std::ostream& out) {
  out << "row,col,re,im\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      out << i << ',' << j << ',' << format_double(M(i, j).real()) << ','
          << format_double(M(i, j).imag()) << '\n';
    }
  }
}

}  // namespace qsc
