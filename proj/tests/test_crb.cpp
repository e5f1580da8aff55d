#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "qsc/crb.hpp"
#include "qsc/rng.hpp"
#include "qsc/sensing.hpp"

#include "test_helpers.hpp"

using namespace qsc;
using qsc_test::rel_err;

namespace {
const std::vector<double> kSignThresholds{0.0};
// Frozen 2-bit Lloyd thresholds for a unit-deviation Gaussian input, pinned
// here so the information-weight checks do not depend on lloyd_max.
const std::vector<double> kLloyd2Thresholds{-0.9815988215677922, 0.0,
                                            0.9815988215677922};
}  // namespace

TEST_CASE("information weight of the sign quantizer", "[crb]") {
  CHECK(rel_err(gamma_weight(kSignThresholds, 0.0, 1.0), 4.0) < 1e-13);
  CHECK(rel_err(gamma_weight(kSignThresholds, 0.5, 1.0), 3.3276499801081543) < 1e-12);
  CHECK(rel_err(gamma_weight(kSignThresholds, 1.3, 0.7), 0.23506105271279516) < 1e-12);
  CHECK(rel_err(gamma_weight(kSignThresholds, 5.0, 1.0), 2.5090085021480945e-10) < 1e-12);
  CHECK(rel_err(gamma_weight(kSignThresholds, 8.0, 1.0), 4.583288081206129e-27) < 1e-11);
  CHECK(rel_err(gamma_weight(kSignThresholds, 26.0, 1.0), 2.40895754026231e-292) < 1e-10);
  // Past the representable range the weight is exactly zero, never NaN/Inf.
  const double far = gamma_weight(kSignThresholds, 30.0, 1.0);
  CHECK(far >= 0.0);
  CHECK(far < 1e-300);
}

TEST_CASE("information weight of a four-level quantizer", "[crb]") {
  CHECK(rel_err(gamma_weight(kLloyd2Thresholds, 0.0, 1.0), 5.3598364808747944) < 1e-12);
  CHECK(rel_err(gamma_weight(kLloyd2Thresholds, 0.5, 1.0), 5.2326335608644291) < 1e-12);
  CHECK(rel_err(gamma_weight(kLloyd2Thresholds, 1.7, 1.0), 2.8002119144917552) < 1e-12);
  CHECK(rel_err(gamma_weight(kLloyd2Thresholds, 5.0, 1.0), 1.4236655646536713e-6) < 1e-12);
  CHECK(rel_err(gamma_weight(kLloyd2Thresholds, 8.0, 1.0), 1.0178569883427751e-20) < 1e-11);
  CHECK(rel_err(gamma_weight(kLloyd2Thresholds, -7.0, 0.5), 5.1169956184556123e-62) < 1e-11);
}

TEST_CASE("information weights are symmetric, finite, positive", "[crb]") {
  for (double s : {0.0, 0.2, 1.0, 3.5, 7.0, 15.0, 40.0, 1e3, 1e6}) {
    for (const auto* th : {&kSignThresholds, &kLloyd2Thresholds}) {
      const double g = gamma_weight(*th, s, 1.0);
      const double gm = gamma_weight(*th, -s, 1.0);
      CHECK(std::isfinite(g));
      CHECK(g >= 0.0);
      CHECK(rel_err(gm, g) < 1e-12);
    }
  }
  CHECK_THROWS_AS(gamma_weight(kSignThresholds, 0.0, 0.0), std::domain_error);
}

TEST_CASE("sign closed form equals the interval sum", "[crb]") {
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (double s : {0.0, 0.3, -0.3, 1.0, 2.7, -2.7, 5.0, 10.0, -10.0, 20.0}) {
      CHECK(rel_err(onebit_gamma(s / sigma), gamma_weight(kSignThresholds, s, sigma)) <
            1e-12);
    }
  }
}

TEST_CASE("partition refinement never loses information", "[crb]") {
  // The four-level partition refines the sign partition (it contains 0), so
  // its scalar information weight dominates pointwise.
  for (double s = -6.0; s <= 6.0; s += 0.37) {
    CHECK(gamma_weight(kLloyd2Thresholds, s, 1.0) >=
          onebit_gamma(s) * (1.0 - 1e-12));
  }
}

TEST_CASE("signal_jacobian matches finite differences of the measurement mean",
          "[crb]") {
  const auto sig = random_signal(8, 2, 0.1, {0.5, 1.5}, 11);
  const CMatrix A = gaussian_matrix(6, 8, 12);
  const CMatrix D = A * signal_jacobian(sig);
  const double h = 1e-6;

  auto perturbed = [&](int param, double delta) {
    SpectralSignal p = sig;
    const int k = param / 3;
    switch (param % 3) {
      case 0:
        p.components[k].f += delta;
        break;
      case 1:
        p.components[k].amp += delta;
        break;
      default:
        p.components[k].phase += delta;
        break;
    }
    return CVector(A * synthesize(p));
  };

  for (int j = 0; j < 6; ++j) {
    const CVector fd = (perturbed(j, h) - perturbed(j, -h)) / (2.0 * h);
    for (int i = 0; i < 6; ++i) {
      CHECK(std::abs(fd(i) - D(i, j)) < 1e-4 * std::max(1.0, std::abs(D(i, j))));
    }
  }
}

TEST_CASE("sign-quantizer FIM equals the general quantized FIM", "[crb]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sig = random_signal(8, 2, 0.08, {0.5, 1.5}, seed);
    const CMatrix A = gaussian_matrix(16, 8, seed + 100);
    const double sigma = 0.3 + 0.5 * static_cast<double>(seed);
    const auto direct = fim_onebit(A, sig, sigma);
    const auto general = fim_quantized(A, sig, sigma, sign_quantizer());
    const double scale = direct.fim.cwiseAbs().maxCoeff();
    CHECK(((direct.fim - general.fim).cwiseAbs().maxCoeff()) < 1e-10 * scale);
    CHECK(direct.bits == 1);
    CHECK(general.bits == 1);
  }
}

TEST_CASE("FIM matrices are symmetric and positive semidefinite", "[crb]") {
  const auto sig = qsc_test::reference_signal();
  const CMatrix A = gaussian_matrix(100, 64, 21);
  for (int model = 0; model < 3; ++model) {
    FimResult r;
    if (model == 0) {
      r = fim_onebit(A, sig, 1.0);
    } else if (model == 1) {
      r = fim_quantized(A, sig, 1.0, lloyd_max(2, matched_input_std(3.425397809292711, 1.0)));
    } else {
      r = fim_unquantized(A, sig, 1.0);
    }
    REQUIRE(r.fim.rows() == 9);
    CHECK((r.fim - r.fim.transpose()).cwiseAbs().maxCoeff() <
          1e-12 * r.fim.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<RMatrix> eig(r.fim);
    CHECK(eig.eigenvalues().minCoeff() > -1e-9 * eig.eigenvalues().maxCoeff());
  }
}

TEST_CASE("unquantized FIM is the weighted Jacobian Gram matrix", "[crb]") {
  const auto sig = random_signal(8, 2, 0.08, {0.5, 1.5}, 3);
  const CMatrix A = gaussian_matrix(12, 8, 4);
  const double sigma = 0.7;
  const auto r = fim_unquantized(A, sig, sigma);
  const CMatrix D = A * signal_jacobian(sig);
  const RMatrix expected =
      (2.0 / (sigma * sigma)) *
      (D.real().transpose() * D.real() + D.imag().transpose() * D.imag());
  CHECK((r.fim - expected).cwiseAbs().maxCoeff() < 1e-10 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("unquantized CRB scales as sigma squared", "[crb]") {
  const auto sig = qsc_test::reference_signal();
  const CMatrix A = gaussian_matrix(100, 64, 33);
  auto r1 = fim_unquantized(A, sig, 1.0);
  auto r2 = fim_unquantized(A, sig, 2.0);
  const RVector c1 = crb_from_fim(r1.fim);
  const RVector c2 = crb_from_fim(r2.fim);
  for (int i = 0; i < c1.size(); ++i) CHECK(rel_err(c2(i), 4.0 * c1(i)) < 1e-10);
}

TEST_CASE("more measurements never raise the CRB", "[crb]") {
  const auto sig = qsc_test::reference_signal();
  const CMatrix A = gaussian_matrix(64, 64, 5);
  auto small = fim_onebit(A.topRows(32), sig, 1.0);
  auto large = fim_onebit(A, sig, 1.0);
  const RVector cs = crb_from_fim(small.fim);
  const RVector cl = crb_from_fim(large.fim);
  for (int i = 0; i < cs.size(); ++i) CHECK(cl(i) <= cs(i) * (1.0 + 1e-9));
}

TEST_CASE("crb_from_fim inverts and guards conditioning", "[crb]") {
  RMatrix eye = RMatrix::Identity(3, 3);
  const RVector c = crb_from_fim(eye);
  for (int i = 0; i < 3; ++i) CHECK(rel_err(c(i), 1.0) < 1e-14);

  RMatrix d = RMatrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 0.25;
  const RVector cd = crb_from_fim(d);
  CHECK(rel_err(cd(0), 0.25) < 1e-13);
  CHECK(rel_err(cd(1), 4.0) < 1e-13);

  RMatrix full(2, 2);
  full << 2.0, 1.0, 1.0, 2.0;
  const RVector cf = crb_from_fim(full);
  CHECK(rel_err(cf(0), 2.0 / 3.0) < 1e-12);
  CHECK(rel_err(cf(1), 2.0 / 3.0) < 1e-12);

  RMatrix sing(2, 2);
  sing << 1.0, 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(crb_from_fim(sing), SingularFim);
  try {
    crb_from_fim(sing);
  } catch (const SingularFim& e) {
    CHECK(e.condition > 1e12);
  }

  auto r = fim_unquantized(gaussian_matrix(20, 8, 1),
                           random_signal(8, 1, 0.1, {0.5, 1.0}, 2), 1.0);
  crb_from_fim(r);
  REQUIRE(r.crb_diagonal.has_value());
  CHECK(r.crb_diagonal->size() == 3);
}

TEST_CASE("parameter bookkeeping", "[crb]") {
  CHECK(std::string(param_kind(0)) == "f");
  CHECK(std::string(param_kind(1)) == "A");
  CHECK(std::string(param_kind(2)) == "phi");
  CHECK(std::string(param_kind(6)) == "f");
  CHECK(model_tag(MeasurementModel::onebit) == "onebit");
  CHECK(model_tag(MeasurementModel::quantized) == "quantized");
  CHECK(model_tag(MeasurementModel::unquantized) == "unquantized");
  CHECK_THROWS_AS(fim_onebit(gaussian_matrix(4, 8, 1),
                             random_signal(8, 1, 0.1, {0.5, 1.0}, 2), 0.0),
                  std::domain_error);
}
