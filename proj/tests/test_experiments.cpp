#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "qsc/experiments.hpp"
#include "test_helpers.hpp"

using namespace qsc;

namespace {

std::filesystem::path test_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "qsc_experiment_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

SpectralSignal single_tone(int n, double f = 0.3) {
  SpectralSignal sig;
  sig.n = n;
  sig.components = {{f, 1.0, 0.1}};
  return sig;
}

// (model_tag, snr_db cell, param_index) -> crb_value cell
std::map<std::tuple<std::string, std::string, std::string>, std::string> crb_cells(
    const Dataset& ds) {
  const auto mi = ds.column_index("model_tag");
  const auto si = ds.column_index("snr_db");
  const auto pi = ds.column_index("param_index");
  const auto ci = ds.column_index("crb_value");
  std::map<std::tuple<std::string, std::string, std::string>, std::string> out;
  for (const auto& row : ds.rows) out[{row[mi], row[si], row[pi]}] = row[ci];
  return out;
}

}  // namespace

TEST_CASE("format_double survives a string round trip", "[experiments]") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e17, 1e-300, 0.0, 3.425397809292711}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_int(-42) == "-42");
  CHECK(format_u64(18446744073709551615ULL) == "18446744073709551615");
}

TEST_CASE("datasets enforce their shape", "[experiments]") {
  Dataset ds;
  ds.name = "demo";
  ds.columns = {"a", "b"};
  ds.add_row({"1", "2"});
  REQUIRE_THROWS_AS(ds.add_row({"1"}), std::invalid_argument);
  CHECK(ds.column_index("b") == 1);
  REQUIRE_THROWS_AS(ds.column_index("c"), std::invalid_argument);
  CHECK(ds.to_csv() == "a,b\n1,2\n");
}

TEST_CASE("csv files round trip", "[experiments]") {
  Dataset ds;
  ds.name = "roundtrip";
  ds.columns = {"x", "y", "tag"};
  ds.add_row({format_double(0.25), format_double(-1e-12), "alpha"});
  ds.add_row({format_double(1e17), "", "beta"});

  const auto path = test_dir() / "roundtrip.csv";
  write_csv(ds, path);
  const Dataset back = read_csv(path);
  CHECK(back.name == "roundtrip");
  CHECK(back.columns == ds.columns);
  REQUIRE(back.rows == ds.rows);
}

TEST_CASE("quantizer choices parse and print", "[experiments]") {
  CHECK(parse_quantizer("none").bits == 0);
  CHECK(parse_quantizer("sign").bits == 1);
  const auto q3 = parse_quantizer("lloyd:3");
  CHECK(q3.kind == QuantizerChoice::Kind::lloyd);
  CHECK(q3.bits == 3);
  CHECK(quantizer_name(q3) == "lloyd:3");
  CHECK(quantizer_name(parse_quantizer("sign")) == "sign");
  CHECK(quantizer_name(parse_quantizer("none")) == "none");
  REQUIRE_THROWS_AS(parse_quantizer("uniform"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_quantizer("lloyd:0"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_quantizer("lloyd:17"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_quantizer("lloyd:x"), std::invalid_argument);

  CHECK_FALSE(make_quantizer(parse_quantizer("none"), 1.0, 1.0).has_value());
  const auto sq = make_quantizer(parse_quantizer("sign"), 1.0, 1.0);
  REQUIRE(sq.has_value());
  CHECK(sq->thresholds == std::vector<double>{0.0});
  const auto lq = make_quantizer(parse_quantizer("lloyd:2"), 3.0, 1.0);
  const auto want = lloyd_max(2, matched_input_std(3.0, 1.0));
  REQUIRE(lq.has_value());
  CHECK(lq->thresholds == want.thresholds);
  CHECK(lq->representatives == want.representatives);
}

TEST_CASE("experiment configs round trip through JSON", "[experiments]") {
  ExperimentConfig c;
  c.kind = "error_vs_m";
  c.n = 32;
  c.signal = single_tone(32, 0.4);
  c.K = 1;
  c.min_separation = 0.05;
  c.amplitude_range = {0.25, 2.0};
  c.m = 77;
  c.bit_budget = 64;
  c.snr_db = {-10.0, 0.0, 12.5};
  c.m_grid = {10, 20};
  c.k_grid = {1, 2};
  c.snapshot_grid = {2, 4};
  c.models = {"sign", "none"};
  c.quantizer = "lloyd:2";
  c.trials = 7;
  c.seed = 99;
  c.eta = 1.25;
  c.tau = 0.5;
  c.solver.tol = 1e-5;
  c.solver.max_iter = 123;
  c.solver.rho = 3.0;
  c.solver.adapt_rho = false;
  c.solver.checkpoint_every = 11;
  c.output_dir = "out";

  const ExperimentConfig b = config_from_json(config_to_json(c));
  CHECK(b.kind == c.kind);
  CHECK(b.n == c.n);
  REQUIRE(b.signal.has_value());
  CHECK(b.signal->components[0].f == c.signal->components[0].f);
  CHECK(b.min_separation == c.min_separation);
  CHECK(b.amplitude_range == c.amplitude_range);
  CHECK(b.m == c.m);
  CHECK(b.bit_budget == c.bit_budget);
  CHECK(b.snr_db == c.snr_db);
  CHECK(b.m_grid == c.m_grid);
  CHECK(b.k_grid == c.k_grid);
  CHECK(b.snapshot_grid == c.snapshot_grid);
  CHECK(b.models == c.models);
  CHECK(b.quantizer == c.quantizer);
  CHECK(b.trials == c.trials);
  CHECK(b.seed == c.seed);
  CHECK(b.eta == c.eta);
  CHECK(b.tau == c.tau);
  CHECK(b.solver.tol == c.solver.tol);
  CHECK(b.solver.max_iter == c.solver.max_iter);
  CHECK(b.solver.rho == c.solver.rho);
  CHECK(b.solver.adapt_rho == c.solver.adapt_rho);
  CHECK(b.solver.checkpoint_every == c.solver.checkpoint_every);
  CHECK(b.output_dir == c.output_dir);
}

TEST_CASE("config validation rejects broken setups", "[experiments]") {
  ExperimentConfig c;
  c.kind = "lambda_curve";
  c.snr_db = {0.0};
  validate_config(c);

  ExperimentConfig bad = c;
  bad.kind = "fft_sweep";
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);

  bad = c;
  bad.snr_db.clear();
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);

  bad = c;
  bad.signal = single_tone(32);
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);  // n mismatch

  bad = c;
  bad.kind = "crb_fixed_bits";
  bad.bit_budget = 100;
  bad.models = {"sign", "lloyd:3"};
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);  // 100 % 3 != 0

  bad = c;
  bad.kind = "error_vs_m";
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);  // empty m_grid

  bad = c;
  bad.kind = "error_vs_k";
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);  // empty k_grid

  bad = c;
  bad.kind = "mmv_sweep";
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);  // empty snapshots

  bad = c;
  bad.quantizer = "bogus";
  REQUIRE_THROWS_AS(validate_config(bad), std::invalid_argument);

  ExperimentConfig unknown;
  unknown.kind = "nope";
  unknown.snr_db = {0.0};
  REQUIRE_THROWS_AS(run_experiment(unknown), std::invalid_argument);
}

TEST_CASE("config hashes are stable and sensitive", "[experiments]") {
  ExperimentConfig c;
  c.kind = "lambda_curve";
  c.snr_db = {0.0, 10.0};
  const std::string h = config_hash(c);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(c) == h);

  ExperimentConfig c2 = c;
  c2.seed = 2;
  CHECK(config_hash(c2) != h);
}

TEST_CASE("type-7 quartiles", "[experiments]") {
  const auto q = detail::quartiles({4.0, 1.0, 3.0, 2.0});
  REQUIRE(q.has_value());
  CHECK(q->q1 == Catch::Approx(1.75).margin(1e-15));
  CHECK(q->median == Catch::Approx(2.5).margin(1e-15));
  CHECK(q->q3 == Catch::Approx(3.25).margin(1e-15));
  CHECK(detail::quartiles({5.0, 1.0, 3.0})->median == 3.0);
  CHECK_FALSE(detail::quartiles({}).has_value());
}

TEST_CASE("lambda_curve experiment tabulates the shrinkage factor", "[experiments]") {
  ExperimentConfig c;
  c.kind = "lambda_curve";
  c.snr_db = {-10.0, 0.0, 10.0, 20.0};
  c.seed = 5;

  const ExperimentResult res = run_experiment(c);
  const Dataset& ds = res.dataset("lambda_curve");
  REQUIRE(ds.rows.size() == 4);
  const auto li = ds.column_index("lambda");
  double prev = 0.0;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const double lam = std::stod(ds.rows[i][li]);
    CHECK(lam > prev);
    prev = lam;
    const double snr = std::pow(10.0, c.snr_db[i] / 10.0);
    CHECK(lam == Catch::Approx(expected_scale(snr)).epsilon(1e-15));
  }
  CHECK(res.manifest.at("config_hash").get<std::string>() == config_hash(c));
}

TEST_CASE("crb_vs_snr scales and orders the bounds", "[experiments]") {
  ExperimentConfig c;
  c.kind = "crb_vs_snr";
  c.n = 16;
  c.signal = single_tone(16);
  c.m = 24;
  c.models = {"sign", "none"};
  c.snr_db = {0.0, 20.0};
  c.seed = 11;

  const ExperimentResult res = run_experiment(c);
  const Dataset& ds = res.dataset("crb_vs_snr");
  REQUIRE(ds.rows.size() == 2 * 2 * 3);
  const auto cells = crb_cells(ds);

  for (const auto& [key, cell] : cells) REQUIRE_FALSE(cell.empty());

  // Unquantized bounds scale exactly with the noise power: 20 dB = x100.
  for (int p = 0; p < 3; ++p) {
    const double lo = std::stod(cells.at({"unquantized", format_double(0.0), format_int(p)}));
    const double hi = std::stod(cells.at({"unquantized", format_double(20.0), format_int(p)}));
    CHECK(lo / hi == Catch::Approx(100.0).epsilon(1e-9));
  }

  // Coarse quantization never tightens a diagonal bound.
  for (const auto& snr : {format_double(0.0), format_double(20.0)}) {
    for (int p = 0; p < 3; ++p) {
      const double ob = std::stod(cells.at({"onebit", snr, format_int(p)}));
      const double un = std::stod(cells.at({"unquantized", snr, format_int(p)}));
      CHECK(ob >= un * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("crb_fixed_bits splits the budget by bit depth", "[experiments]") {
  ExperimentConfig c;
  c.kind = "crb_fixed_bits";
  c.n = 16;
  c.signal = single_tone(16);
  c.bit_budget = 48;
  c.models = {"sign", "lloyd:2", "none"};
  c.snr_db = {10.0};
  c.seed = 11;

  const ExperimentResult res = run_experiment(c);
  const Dataset& ds = res.dataset("crb_fixed_bits");
  REQUIRE(ds.rows.size() == 2 * 3);  // "none" has no bit cost and is skipped

  const auto mi = ds.column_index("m");
  const auto ti = ds.column_index("model_tag");
  const auto bi = ds.column_index("bit_depth");
  for (const auto& row : ds.rows) {
    REQUIRE(row[ti] != "unquantized");
    if (row[ti] == "onebit") {
      CHECK(row[mi] == "48");
      CHECK(row[bi] == "1");
    } else {
      CHECK(row[mi] == "24");
      CHECK(row[bi] == "2");
    }
  }

  // The 1-bit rows coincide with a plain CRB sweep at m = B: same matrix seed,
  // same budget-wide matrix prefix.
  ExperimentConfig full = c;
  full.kind = "crb_vs_snr";
  full.m = 48;
  full.models = {"sign"};
  const ExperimentResult ref_res = run_experiment(full);
  const Dataset& ref = ref_res.dataset("crb_vs_snr");
  const auto got = crb_cells(ds);
  const auto want = crb_cells(ref);
  for (int p = 0; p < 3; ++p) {
    const auto key = std::make_tuple(std::string("onebit"), format_double(10.0),
                                     format_int(p));
    CHECK(got.at(key) == want.at(key));
  }
}

TEST_CASE("dual_poly_demo exports certificate and frequencies", "[experiments]") {
  ExperimentConfig c;
  c.kind = "dual_poly_demo";
  c.n = 16;
  c.signal = single_tone(16);
  c.m = 200;
  c.snr_db = {30.0};
  c.quantizer = "sign";
  c.seed = 3;

  const ExperimentResult res = run_experiment(c);
  CHECK(res.total_solves == 1);

  const Dataset& poly = res.dataset("dual_polynomial");
  REQUIRE(poly.rows.size() == 16u * 16u);
  const auto vi = poly.column_index("value");
  for (const auto& row : poly.rows) CHECK(std::stod(row[vi]) >= 0.0);

  const Dataset& freqs = res.dataset("frequencies");
  const auto ty = freqs.column_index("type");
  const auto fi = freqs.column_index("f");
  int truth_rows = 0;
  bool hit = false;
  for (const auto& row : freqs.rows) {
    if (row[ty] == "truth") {
      ++truth_rows;
    } else {
      REQUIRE(row[ty] == "estimate");
      if (wrap_distance(std::stod(row[fi]), 0.3) < 0.5 / 16) hit = true;
    }
  }
  CHECK(truth_rows == 1);
  CHECK(hit);
}

TEST_CASE("recovery sweep datasets and reruns are reproducible", "[experiments]") {
  ExperimentConfig c;
  c.kind = "error_vs_m";
  c.n = 8;
  c.signal = single_tone(8, 0.3);
  c.m_grid = {32};
  c.snr_db = {20.0};
  c.quantizer = "sign";
  c.trials = 2;
  c.seed = 7;
  c.solver.tol = 1e-5;

  const ExperimentResult a = run_experiment(c);
  const ExperimentResult b = run_experiment(c);
  REQUIRE(a.datasets.size() == b.datasets.size());
  for (std::size_t i = 0; i < a.datasets.size(); ++i) {
    CHECK(a.datasets[i].to_csv() == b.datasets[i].to_csv());
  }
  CHECK(a.manifest.dump() == b.manifest.dump());

  const Dataset& trials = a.dataset("trials");
  REQUIRE(trials.rows.size() == 2);
  const auto ci = trials.column_index("converged");
  const auto ni = trials.column_index("normalized_error");
  for (const auto& row : trials.rows) {
    CHECK(row[ci] == "1");
    CHECK(std::stod(row[ni]) < 0.5);
  }

  const Dataset& summary = a.dataset("summary");
  REQUIRE(summary.rows.size() == 1);
  CHECK(summary.rows[0][summary.column_index("m")] == "32");
  CHECK(summary.rows[0][summary.column_index("unconverged")] == "0");
  CHECK_FALSE(summary.rows[0][summary.column_index("median_normalized_error")].empty());

  CHECK(a.manifest.at("trial_seeds").size() == 2);
  CHECK(a.manifest.at("code_version").get<std::string>() == kVersion);
}

TEST_CASE("mse_vs_crb pairs estimates with per-trial bounds", "[experiments]") {
  ExperimentConfig c;
  c.kind = "mse_vs_crb";
  c.n = 8;
  c.signal = single_tone(8, 0.3);
  c.m = 48;
  c.snr_db = {20.0};
  c.quantizer = "sign";
  c.trials = 2;
  c.seed = 13;
  c.solver.tol = 1e-5;

  const ExperimentResult res = run_experiment(c);
  const Dataset& trials = res.dataset("trials");
  REQUIRE(trials.rows.size() == 2);  // trials x K
  const auto fh = trials.column_index("f_hat");
  const auto cb = trials.column_index("crb_f");
  for (const auto& row : trials.rows) {
    REQUIRE_FALSE(row[fh].empty());
    CHECK(wrap_distance(std::stod(row[fh]), 0.3) < 0.5 / 8);
    REQUIRE_FALSE(row[cb].empty());
    CHECK(std::stod(row[cb]) > 0.0);
  }

  const Dataset& summary = res.dataset("summary");
  REQUIRE(summary.rows.size() == 1);
  CHECK(summary.rows[0][summary.column_index("model_tag")] == "sign");
  CHECK(summary.rows[0][summary.column_index("trials_used")] == "2");
  CHECK(std::stod(summary.rows[0][summary.column_index("mse")]) < 1e-2);
  CHECK(std::stod(summary.rows[0][summary.column_index("mean_crb")]) > 0.0);
}

TEST_CASE("mmv_sweep recovers shared support across snapshots", "[experiments]") {
  ExperimentConfig c;
  c.kind = "mmv_sweep";
  c.n = 8;
  c.signal = single_tone(8, 0.25);
  c.m = 40;
  c.snapshot_grid = {2};
  c.snr_db = {10.0};
  c.quantizer = "sign";
  c.trials = 2;
  c.seed = 21;
  c.solver.tol = 1e-5;

  const ExperimentResult res = run_experiment(c);
  const Dataset& trials = res.dataset("trials");
  REQUIRE(trials.rows.size() == 2);
  const auto li = trials.column_index("localized");
  const auto hi = trials.column_index("sq_hausdorff");
  for (const auto& row : trials.rows) {
    CHECK(row[li] == "1");
    CHECK(std::stod(row[hi]) < 0.01);
  }
  const Dataset& summary = res.dataset("summary");
  REQUIRE(summary.rows.size() == 1);
  CHECK(summary.rows[0][summary.column_index("snapshots")] == "2");

  ExperimentConfig bad = c;
  bad.quantizer = "none";
  REQUIRE_THROWS_AS(run_experiment(bad), std::invalid_argument);
}

TEST_CASE("experiment results land on disk with a manifest", "[experiments]") {
  ExperimentConfig c;
  c.kind = "lambda_curve";
  c.snr_db = {0.0, 6.0};
  c.seed = 4;

  const ExperimentResult res = run_experiment(c);
  const auto dir = test_dir() / "lambda_run";
  const auto paths = write_experiment_result(res, dir);
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].filename() == "lambda_curve.csv");
  CHECK(paths[1].filename() == "manifest.json");

  const Dataset back = read_csv(paths[0]);
  CHECK(back.to_csv() == res.datasets[0].to_csv());

  std::ifstream in(paths[1]);
  const auto manifest = nlohmann::json::parse(in);
  CHECK(manifest.at("config_hash") == config_hash(c));
  CHECK(manifest.at("datasets") == std::vector<std::string>{"lambda_curve"});
  CHECK(manifest.at("kind") == "lambda_curve");
  CHECK_FALSE(manifest.contains("timestamp"));
}

TEST_CASE("plots are deterministic SVG", "[experiments]") {
  Dataset ds;
  ds.name = "points";
  ds.columns = {"x", "y", "g"};
  ds.add_row({"1", "2", "a"});
  ds.add_row({"2", "4", "a"});
  ds.add_row({"1", "3", "b"});
  ds.add_row({"2", "9", "b"});

  const PlotStyle style = plot_style_from_json(
      {{"x", "x"}, {"y", "y"}, {"group", "g"}, {"log_y", true}, {"title", "demo"}});
  const std::string svg = emit_plot(ds, style);
  CHECK(svg == emit_plot(ds, style));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find(">demo</text>") != std::string::npos);
  const auto pa = svg.find(">a</text>");
  const auto pb = svg.find(">b</text>");
  REQUIRE(pa != std::string::npos);
  REQUIRE(pb != std::string::npos);
  CHECK(pa < pb);  // groups render in sorted order

  PlotStyle missing = style;
  missing.y_column = "z";
  REQUIRE_THROWS_AS(emit_plot(ds, missing), std::invalid_argument);

  Dataset holes;
  holes.columns = {"x", "y"};
  holes.add_row({"1", ""});
  holes.add_row({"2", ""});
  REQUIRE_THROWS_AS(emit_plot(holes, plot_style_from_json({{"x", "x"}, {"y", "y"}})),
                    std::invalid_argument);

  Dataset nonpos;
  nonpos.columns = {"x", "y"};
  nonpos.add_row({"1", "-5"});
  REQUIRE_THROWS_AS(
      emit_plot(nonpos, plot_style_from_json({{"x", "x"}, {"y", "y"}, {"log_y", true}})),
      std::invalid_argument);
}

TEST_CASE("raw exports keep measurement layout", "[experiments]") {
  const CVector x = synthesize(single_tone(4, 0.2));
  const CMatrix A = gaussian_matrix(6, 4, 2);
  const MeasurementSet ms = measure(A, x, 0.0, 2);

  std::ostringstream csv;
  write_measurements_csv(ms, csv);
  const std::string text = csv.str();
  CHECK(text.rfind("row,re_z,im_z\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);

  CMatrix M(2, 3);
  M << Complex(1, -1), Complex(2, 0), Complex(0, 3), Complex(-4, 5), Complex(6, -7),
      Complex(8, 9);
  std::ostringstream bin(std::ios::binary);
  write_complex_matrix_binary(M, bin);
  const std::string bytes = bin.str();
  REQUIRE(bytes.size() == 16 + 2 * 3 * 16);
  std::uint64_t rows = 0, cols = 0;
  std::memcpy(&rows, bytes.data(), 8);
  std::memcpy(&cols, bytes.data() + 8, 8);
  CHECK(rows == 2);
  CHECK(cols == 3);
  double re00 = 0.0, im00 = 0.0;
  std::memcpy(&re00, bytes.data() + 16, 8);
  std::memcpy(&im00, bytes.data() + 24, 8);
  CHECK(re00 == 1.0);
  CHECK(im00 == -1.0);

  std::ostringstream mcsv;
  write_complex_matrix_csv(M, mcsv);
  const std::string mtext = mcsv.str();
  CHECK(mtext.rfind("row,col,re,im\n", 0) == 0);
  CHECK(std::count(mtext.begin(), mtext.end(), '\n') == 7);
}
