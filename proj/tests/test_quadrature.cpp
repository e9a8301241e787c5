#include <cmath>
#include <vector>

#include "doctest.h"
#include "slowvol/common.hpp"
#include "slowvol/quadrature.hpp"

using slowvol::GaussHermite;
using slowvol::adaptive_simpson;

TEST_CASE("gauss-hermite reproduces standard normal moments") {
  const GaussHermite gh(128);
  const std::vector<double> even{1.0, 1.0, 3.0, 15.0, 105.0};  // E[N^{2k}]
  for (std::size_t k = 0; k < even.size(); ++k) {
    const double got = gh.integrate([&](double u) { return std::pow(u, 2.0 * k); });
    CHECK(got == doctest::Approx(even[k]).epsilon(1e-12));
  }
  for (int odd = 1; odd <= 9; odd += 2) {
    const double got = gh.integrate([&](double u) { return std::pow(u, odd); });
    CHECK(std::fabs(got) < 1e-10);
  }
}

TEST_CASE("gauss-hermite reproduces lognormal means") {
  const GaussHermite gh(128);
  for (double k : {0.5, 1.0, 2.0}) {
    const double got = gh.integrate([&](double u) { return std::exp(k * u); });
    CHECK(got == doctest::Approx(std::exp(0.5 * k * k)).epsilon(1e-12));
  }
}

TEST_CASE("gauss-hermite tables are symmetric and normalized") {
  const GaussHermite gh(64);
  REQUIRE(gh.size() == 64);
  const auto& x = gh.nodes();
  const auto& w = gh.weights();
  double wsum = 0.0;
  for (int i = 0; i < gh.size(); ++i) {
    CHECK(x[i] == doctest::Approx(-x[gh.size() - 1 - i]).epsilon(1e-14));
    CHECK(w[i] == doctest::Approx(w[gh.size() - 1 - i]).epsilon(1e-14));
    CHECK(w[i] > 0.0);
    wsum += w[i];
  }
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-13));
  for (int i = 1; i < gh.size(); ++i) CHECK(x[i] > x[i - 1]);
}

TEST_CASE("cached tables are shared and match fresh construction") {
  const GaussHermite& a = GaussHermite::cached(128);
  const GaussHermite& b = GaussHermite::cached(128);
  CHECK(&a == &b);
  const GaussHermite fresh(128);
  REQUIRE(a.size() == fresh.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.nodes()[i] == fresh.nodes()[i]);
    CHECK(a.weights()[i] == fresh.weights()[i]);
  }
}

TEST_CASE("node count is validated") {
  CHECK_THROWS_AS(GaussHermite(0), slowvol::validation_error);
  CHECK_THROWS_AS(GaussHermite(-3), slowvol::validation_error);
  CHECK_THROWS_AS(GaussHermite(1025), slowvol::validation_error);
  CHECK_NOTHROW(GaussHermite(1));
  CHECK_NOTHROW(GaussHermite(1024));
}

TEST_CASE("adaptive simpson handles smooth and steep integrands") {
  const double quad = adaptive_simpson([](double x) { return x * x; }, 0.0, 3.0, 1e-12);
  CHECK(quad == doctest::Approx(9.0).epsilon(1e-12));

  const double sine = adaptive_simpson([](double x) { return std::sin(x); }, 0.0,
                                       std::acos(-1.0), 1e-12);
  CHECK(sine == doctest::Approx(2.0).epsilon(1e-11));

  // Boundary layer at the left endpoint; exact value (1 - e^{-100}) / 100.
  const double steep = adaptive_simpson([](double x) { return std::exp(-100.0 * x); },
                                        0.0, 1.0, 1e-12);
  CHECK(steep == doctest::Approx((1.0 - std::exp(-100.0)) / 100.0).epsilon(1e-10));
}
