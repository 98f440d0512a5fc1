#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "retino/error.hpp"
#include "retino/robust.hpp"

using namespace retino;
using namespace retino::robust;

TEST_CASE("median") {
    CHECK(median({3.0}) == 3.0);
    CHECK(median({1.0, 9.0}) == 5.0);
    CHECK(median({5.0, 1.0, 9.0}) == 5.0);
    CHECK(median({4.0, 1.0, 9.0, 5.0}) == 4.5);
    CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("exact line recovered without noise") {
    std::vector<double> t, y;
    for (int i = 0; i < 20; ++i) {
        t.push_back(i);
        y.push_back(3.5 - 0.75 * i);
    }
    const LineFit fit = huber_line_fit(t, y);
    REQUIRE(fit.valid);
    CHECK(fit.intercept == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(fit.slope == doctest::Approx(-0.75).epsilon(1e-12));
}

TEST_CASE("single gross outlier barely moves the fit") {
    std::vector<double> t, y;
    for (int i = 0; i < 30; ++i) {
        t.push_back(i);
        y.push_back(1.0 + 0.5 * i);
    }
    y[13] += 400.0;
    const LineFit fit = huber_line_fit(t, y);
    REQUIRE(fit.valid);
    CHECK(fit.slope == doctest::Approx(0.5).epsilon(0.02));
    CHECK(fit.intercept == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("gaussian noise: slope within a few percent") {
    std::mt19937 rng(17);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<double> t, y;
    for (int i = 0; i < 40; ++i) {
        t.push_back(i);
        y.push_back(10.0 + 2.0 * i + noise(rng));
    }
    const LineFit fit = huber_line_fit(t, y);
    REQUIRE(fit.valid);
    CHECK(std::abs(fit.slope - 2.0) / 2.0 < 0.05);
}

TEST_CASE("degenerate inputs are rejected") {
    CHECK_FALSE(huber_line_fit(std::vector<double>{1.0}, std::vector<double>{2.0}).valid);
    // All abscissae identical: no slope.
    std::vector<double> t(5, 3.0), y{1, 2, 3, 4, 5};
    CHECK_FALSE(huber_line_fit(t, y).valid);
}
