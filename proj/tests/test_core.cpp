#include "doctest.h"

#include "knncls/core.hpp"
#include "knncls/errors.hpp"

#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace knncls;

TEST_CASE("squared_l2 worked examples") {
    CHECK(squared_l2(Vector{1, 2}, Vector{1, 2}) == 0.0);
    CHECK(squared_l2(Vector{0, 0}, Vector{3, 4}) == 25.0);
    CHECK(squared_l2(Vector{1, 0, 2}, Vector{0, 1, 0}) == 6.0);
}

TEST_CASE("squared_l2 rejects mismatched dimensions") {
    CHECK_THROWS_AS(squared_l2(Vector{1, 2}, Vector{1, 2, 3}), DimensionError);
    const std::vector<float> key{1.0f};
    CHECK_THROWS_AS(squared_l2(Vector{1, 2}, std::span<const float>(key)), DimensionError);
}

TEST_CASE("squared_l2 is symmetric and zero on identical inputs") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> dims(1, 64);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = dims(rng);
        const auto a = testing::random_vector(d, rng, 10.0);
        const auto b = testing::random_vector(d, rng, 10.0);
        CHECK(squared_l2(a, b) == squared_l2(b, a));
        CHECK(squared_l2(a, a) == 0.0);
        CHECK(squared_l2(a, b) >= 0.0);
    }
}

TEST_CASE("softmax worked examples") {
    const auto half = softmax(Vector{0, 0});
    CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));

    for (double c : {-1e6, -3.5, 0.0, 42.0, 1e6}) {
        const auto third = softmax(Vector{c, c, c});
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(third[i] - 1.0 / 3.0) < 1e-15);
    }
}

TEST_CASE("softmax does not overflow on large logits") {
    // Extended-precision oracle: p1 = e^-1000 / (1 + e^-1000) ~ 5.08e-435,
    // below the smallest double subnormal, so it must come out as 0.
    const long double tail = std::exp(-1000.0L);
    const long double p0 = 1.0L / (1.0L + tail);
    const auto p = softmax(Vector{1000, 0});
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == static_cast<double>(p0));
    CHECK(p[1] == static_cast<double>(tail / (1.0L + tail)));
    CHECK(p[1] == 0.0);
}

TEST_CASE("softmax rejects empty and non-finite input") {
    CHECK_THROWS_AS(softmax(Vector{}), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector{1.0, NAN}), InvalidArgument);
    CHECK_THROWS_AS(softmax(Vector{INFINITY}), InvalidArgument);
}

TEST_CASE("softmax sums to one and is shift invariant") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> sizes(1, 20);
    std::uniform_real_distribution<double> shift(-500, 500);
    for (int trial = 0; trial < 500; ++trial) {
        const auto x = testing::random_vector(sizes(rng), rng, 20.0);
        auto shifted = x;
        const double c = shift(rng);
        for (double& v : shifted) v += c;
        const auto p = softmax(x);
        const auto q = softmax(shifted);
        double sum = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            sum += p[i];
            CHECK(std::abs(p[i] - q[i]) < 1e-9);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("argmax_label picks the largest entry, lowest index on ties") {
    CHECK(argmax_label(LabelDistribution({0.1, 0.7, 0.2})) == 1);
    CHECK(argmax_label(LabelDistribution({0.5, 0.5})) == 0);
    CHECK(argmax_label(LabelDistribution({0.0, 0.0, 1.0})) == 2);
}

TEST_CASE("argmax of softmax matches argmax of logits") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> small(-3, 3);
    for (int trial = 0; trial < 500; ++trial) {
        // Small integer logits make ties common.
        Vector x(6);
        for (double& v : x) v = small(rng);
        std::size_t best = 0;
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (x[i] > x[best]) best = i;
        }
        CHECK(argmax_label(softmax(x)) == best);
    }
}

TEST_CASE("LabelDistribution validates its entries") {
    CHECK_THROWS_AS(LabelDistribution({}), InvalidArgument);
    CHECK_THROWS_AS(LabelDistribution({0.5, 0.6}), InvalidArgument);
    CHECK_THROWS_AS(LabelDistribution({-0.1, 1.1}), InvalidArgument);
    CHECK_THROWS_AS(LabelDistribution({NAN, 1.0}), InvalidArgument);
    CHECK_NOTHROW(LabelDistribution({0.25, 0.75}));
    CHECK(LabelDistribution::uniform(4)[3] == 0.25);
    CHECK(LabelDistribution::one_hot(3, 2)[2] == 1.0);
    CHECK_THROWS_AS(LabelDistribution::one_hot(3, 3), InvalidArgument);
}
