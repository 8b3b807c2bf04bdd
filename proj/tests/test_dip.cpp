#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>
#include "doctest.h"
#include "foldnet/dip.hpp"
#include "foldnet/rng.hpp"
#include "oracles.hpp"

using namespace foldnet;

namespace {

std::vector<double> gaussian_sample(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> s(n);
  for (double& v : s) v = rng.gaussian();
  return s;
}

}  // namespace

TEST_CASE("two distinct points reach the n=2 bound") {
  const DipResult r = dip_statistic({0.0, 1.0});
  CHECK(r.dip == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("all-equal samples dip to zero by convention") {
  CHECK(dip_statistic({3.0, 3.0, 3.0, 3.0}).dip == 0.0);
  CHECK(dip_statistic({-1.5}).dip == 0.0);
}

TEST_CASE("four equally spaced points") {
  const DipResult r = dip_statistic({0.0, 1.0, 2.0, 3.0});
  CHECK(r.dip == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(oracle::dip_brute_force({0.0, 1.0, 2.0, 3.0}) == doctest::Approx(0.125).epsilon(1e-6));
}

TEST_CASE("hand-computed small samples") {
  // Values derivable by hand from the unimodal-fit geometry.
  CHECK(dip_statistic({0.0, 0.0, 1.0, 1.0}).dip == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(dip_statistic({0.0, 0.0, 1.0}).dip == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(dip_statistic({0.0, 1.0, 1.0, 2.0}).dip == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(dip_statistic({1, 2, 2, 3, 3, 3, 4, 4, 5}).dip == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(dip_statistic({0, 0, 0, 1, 1, 1}).dip == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("strongly bimodal beats unimodal gaussian by 5x") {
  std::vector<double> bimodal;
  for (int i = 0; i < 500; ++i) bimodal.push_back(0.0);
  for (int i = 0; i < 500; ++i) bimodal.push_back(1.0);
  const double db = dip_statistic(bimodal).dip;
  const double dg = dip_statistic(gaussian_sample(11, 1000)).dip;
  CHECK(db > 5.0 * dg);
  CHECK(db == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("errors: empty and non-finite samples") {
  CHECK_THROWS_AS(dip_statistic({}), std::invalid_argument);
  CHECK_THROWS_AS(dip_statistic({0.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(dip_statistic({0.0, std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
}

TEST_CASE("agrees with the brute-force unimodal-fit oracle on small samples") {
  Rng rng(2024);
  double worst = 0.0;
  for (int rep = 0; rep < 160; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(7));  // 2..8
    std::vector<double> s(static_cast<std::size_t>(n));
    const int kind = rep % 4;
    for (double& v : s) {
      if (kind == 0) v = rng.uniform(-2.0, 2.0);
      else if (kind == 1) v = static_cast<double>(rng.below(4));  // heavy ties
      else if (kind == 2) v = rng.gaussian();
      else v = rng.uniform(0.0, 1.0) < 0.5 ? rng.gaussian() : 6.0 + rng.gaussian();
    }
    const double lib = dip_statistic(s).dip;
    const double ref = oracle::dip_brute_force(s);
    worst = std::max(worst, std::abs(lib - ref));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("invariances and bounds over large random samples") {
  Rng rng(7);
  for (int rep = 0; rep < 6; ++rep) {
    const std::size_t n = 10000;
    std::vector<double> s(n);
    for (double& v : s) {
      v = rep % 2 == 0 ? rng.gaussian() : (rng.uniform(0.0, 1.0) < 0.4 ? -3.0 : 3.0) + rng.gaussian() * 0.3;
    }
    const double base = dip_statistic(s).dip;
    CHECK(base >= 1.0 / (2.0 * static_cast<double>(n)));
    CHECK(base <= 0.25);

    std::vector<double> moved(s);
    for (double& v : moved) v = 2.5 * v - 7.0;  // positive scale + translation
    CHECK(dip_statistic(moved).dip == doctest::Approx(base).epsilon(1e-12));

    std::vector<double> shuffled(s);
    Rng perm(100 + static_cast<std::uint64_t>(rep));
    perm.shuffle(shuffled);
    CHECK(dip_statistic(shuffled).dip == base);
  }
}

TEST_CASE("modal interval brackets the mode of a peaked sample") {
  Rng rng(5);
  std::vector<double> s;
  for (int i = 0; i < 4000; ++i) s.push_back(rng.gaussian() * 0.2);      // peak at 0
  for (int i = 0; i < 1000; ++i) s.push_back(rng.uniform(-6.0, 6.0));    // background
  const DipResult r = dip_statistic(s);
  CHECK(r.modal_lo <= r.modal_hi);
  CHECK(r.modal_lo >= -6.0);
  CHECK(r.modal_hi <= 6.0);
  // The dip-defining modal interval of a sharp central peak stays near it.
  CHECK(r.modal_lo <= 1.0);
  CHECK(r.modal_hi >= -1.0);
}
