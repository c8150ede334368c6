#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "layerprobe/error.hpp"
#include "layerprobe/pooling.hpp"

using namespace layerprobe;

TEST_SUITE("pooling") {
  TEST_CASE("constants are fixed points") {
    const std::vector<double> x(7, 0.37);
    for (double omega : {-100.0, -1.0, -0.1, 0.1, 1.0, 100.0, 1e4}) {
      CHECK(mellowmax(x, omega) == doctest::Approx(0.37).epsilon(1e-15));
    }
  }

  TEST_CASE("reference values") {
    const std::vector<double> x = {0.0, 1.0};
    // ln((1 + e) / 2), evaluated at 30 digits.
    CHECK(mellowmax(x, 1.0) == doctest::Approx(0.62011450695827752).epsilon(1e-14));
    CHECK(std::abs(mellowmax(x, 100.0) - 1.0) <= 1e-2);
    CHECK(std::abs(mellowmax(x, 100.0) - 1.0) <= std::log(2.0) / 100.0 + 1e-15);  // bound is tight at two points
    CHECK(std::abs(mellowmax(x, -100.0) - 0.0) <= 1e-2);
  }

  TEST_CASE("tiny omega approaches the mean") {
    const std::vector<double> x = {0.2, 0.8};
    CHECK(mellowmax(x, 1e-9) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(mellowmax(x, -1e-300) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(mellowmax({}, 1.0), Error);
    const std::vector<double> x = {1.0};
    CHECK_THROWS_AS(mellowmax(x, 0.0), Error);
    CHECK_THROWS_AS(pool({}, PoolingStrategy::mean()), Error);
    CHECK_THROWS_AS(PoolingStrategy::mellowmax(0.0), Error);
  }

  TEST_CASE("extreme omega stays finite and clamps to the extremes") {
    const std::vector<double> x = {0.0, 0.3, 1.0};
    for (double omega : {1e6, 1e300, -1e6, -1e300}) {
      const double v = mellowmax(x, omega);
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(mellowmax(x, 1e300) == doctest::Approx(1.0));
    CHECK(mellowmax(x, -1e300) == doctest::Approx(0.0));
  }

  TEST_CASE("pool strategies") {
    const std::vector<double> s = {0.2, 0.8};
    CHECK(pool(s, PoolingStrategy::mean()) == 0.5);
    CHECK(pool(s, PoolingStrategy::max()) == 0.8);
    CHECK(pool(s, PoolingStrategy::min()) == 0.2);
    const double mm = pool(s, PoolingStrategy::mellowmax(0.1));
    CHECK(mm > 0.5);
    CHECK(mm < 0.8);
    CHECK(std::abs(mm - 0.5) <= 1e-2);
    CHECK(mm == doctest::Approx(0.50449932516195575).epsilon(1e-13));
  }

  TEST_CASE("serialization") {
    CHECK(PoolingStrategy::mellowmax(10).to_string() == "mm:10");
    CHECK(PoolingStrategy::mellowmax(-0.1).to_string() == "mm:-0.1");
    for (const char* text : {"min", "mean", "max", "mm:10", "mm:-0.1", "mm:100", "mm:0.5"}) {
      CHECK(PoolingStrategy::parse(text).to_string() == text);
    }
    CHECK(PoolingStrategy::parse("mm:-1") == PoolingStrategy::mellowmax(-1));
    CHECK_THROWS_AS(PoolingStrategy::parse("mm:0"), Error);
    CHECK_THROWS_AS(PoolingStrategy::parse("mm:"), Error);
    CHECK_THROWS_AS(PoolingStrategy::parse("mm:1x"), Error);
    CHECK_THROWS_AS(PoolingStrategy::parse("median"), Error);
  }

  TEST_CASE("properties on random vectors") {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 40);
    const std::vector<double> omegas = {-100, -10, -1, -0.1, 0.1, 1, 10, 100};
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<double> x(static_cast<std::size_t>(len(gen)));
      for (auto& v : x) v = unit(gen);
      const double lo = *std::min_element(x.begin(), x.end());
      const double hi = *std::max_element(x.begin(), x.end());
      double previous = lo;
      for (double omega : omegas) {
        const double v = mellowmax(x, omega);
        CHECK(v >= lo);
        CHECK(v <= hi);
        CHECK(v >= previous - 1e-12);  // nondecreasing in omega
        previous = v;
        std::vector<double> neg(x.size());
        std::transform(x.begin(), x.end(), neg.begin(), [](double a) { return -a; });
        CHECK(mellowmax(x, -omega) == -mellowmax(neg, omega));
      }
    }
  }
}
