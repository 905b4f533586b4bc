#include "tdsched/schedule.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace tdsched;

TEST_CASE("make_schedule validates its input") {
    LambdaSchedule s = make_schedule(std::vector<double>{0.5}, 1);
    CHECK(s.truncation() == 1);
    CHECK(s.value(1) == 0.5);
    CHECK(s.value(2) == 0.0);  // implicit zero beyond L

    CHECK_THROWS_AS(make_schedule(std::vector<double>{1.2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(std::vector<double>{-0.1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(std::vector<double>{}, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_schedule(std::vector<double>{0.5, 0.5}, 3), std::invalid_argument);
}

TEST_CASE("equal_weights reproduces the stated schedules") {
    SUBCASE("(3,5)") {
        LambdaSchedule s = equal_weights(3, 5);
        CHECK(s.truncation() == 5);
        CHECK(s.exact_value(1) == Rational(1));
        CHECK(s.exact_value(2) == Rational(1));
        CHECK(s.exact_value(3) == Rational(2, 3));
        CHECK(s.exact_value(4) == Rational(1, 2));
        CHECK(s.exact_value(5) == Rational(0));
        CHECK(s.exact_value(6) == Rational(0));

        // The explicit-value construction gives the same schedule.
        LambdaSchedule manual = make_schedule(std::vector<double>{1, 1, 2.0 / 3.0, 0.5}, 4);
        for (int j = 1; j <= 6; ++j) CHECK(s.value(j) == doctest::Approx(manual.value(j)).epsilon(1e-15));
    }
    SUBCASE("(n,n) is the n-step TD schedule") {
        for (int n : {1, 2, 5}) {
            LambdaSchedule s = equal_weights(n, n);
            CHECK(s.truncation() == n);
            for (int i = 1; i < n; ++i) CHECK(s.exact_value(i) == Rational(1));
            CHECK(s.exact_value(n) == Rational(0));
        }
    }
    SUBCASE("(1,3)") {
        LambdaSchedule s = equal_weights(1, 3);
        CHECK(s.exact_value(1) == Rational(2, 3));
        CHECK(s.exact_value(2) == Rational(1, 2));
        CHECK(s.exact_value(3) == Rational(0));

        WeightMatrix w = weight_matrix(s, 4);
        CHECK(w.exact_at(4, 1) == Rational(1, 3));
        CHECK(w.exact_at(4, 2) == Rational(1, 3));
        CHECK(w.exact_at(4, 3) == Rational(1, 3));
        CHECK(w.exact_at(4, 4) == Rational(0));
    }
    CHECK_THROWS_AS(equal_weights(0, 2), std::invalid_argument);
    CHECK_THROWS_AS(equal_weights(3, 2), std::invalid_argument);
}

TEST_CASE("weight_matrix matches the displayed EqualWeights(3,5) matrix exactly") {
    WeightMatrix w = weight_matrix(equal_weights(3, 5), 5);
    std::vector<std::vector<Rational>> expected = {
        {Rational(1)},
        {Rational(0), Rational(1)},
        {Rational(0), Rational(0), Rational(1)},
        {Rational(0), Rational(0), Rational(1, 3), Rational(2, 3)},
        {Rational(0), Rational(0), Rational(1, 3), Rational(1, 3), Rational(1, 3)},
    };
    REQUIRE(w.exact_rows.has_value());
    for (int m = 1; m <= 5; ++m)
        for (int k = 1; k <= m; ++k)
            CHECK(w.exact_at(m, k) == expected[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(k - 1)]);
}

TEST_CASE("weight_matrix special cases") {
    SUBCASE("constant schedule gives geometric TD(lambda) rows") {
        const double lam = 0.7;
        LambdaSchedule s = make_schedule(std::vector<double>(6, lam), 6);
        WeightMatrix w = weight_matrix(s, 9);
        for (int k = 1; k < 6; ++k)
            CHECK(w.at(6, k) == doctest::Approx((1 - lam) * std::pow(lam, k - 1)).epsilon(1e-14));
        CHECK(w.at(6, 6) == doctest::Approx(std::pow(lam, 5)).epsilon(1e-14));
        // Past the truncation the first L columns are purely geometric and
        // the residual mass sits at column L+1.
        for (int k = 1; k <= 6; ++k)
            CHECK(w.at(9, k) == doctest::Approx((1 - lam) * std::pow(lam, k - 1)).epsilon(1e-14));
        CHECK(w.at(9, 7) == doctest::Approx(std::pow(lam, 6)).epsilon(1e-14));
        CHECK(w.at(9, 8) == 0.0);
    }
    SUBCASE("all-zero schedule pins the first column") {
        LambdaSchedule s = make_schedule(std::vector<double>{0.0}, 1);
        WeightMatrix w = weight_matrix(s, 3);
        CHECK(w.rows[0] == std::vector<double>{1.0});
        CHECK(w.rows[1] == std::vector<double>{1.0, 0.0});
        CHECK(w.rows[2] == std::vector<double>{1.0, 0.0, 0.0});
    }
    SUBCASE("at least one row is required") {
        CHECK_THROWS_AS(weight_matrix(equal_weights(1, 2), 0), std::invalid_argument);
    }
    SUBCASE("rows beyond L+1 repeat the frozen pattern padded with zeros") {
        WeightMatrix w = weight_matrix(equal_weights(3, 5), 9);
        for (int m = 6; m <= 9; ++m) {
            for (int k = 1; k <= 5; ++k) CHECK(w.exact_at(m, k) == w.exact_at(5, k));
            for (int k = 6; k <= m; ++k) CHECK(w.exact_at(m, k) == Rational(0));
        }
    }
}

TEST_CASE("schedule prefix products") {
    LambdaSchedule half = make_schedule(std::vector<double>{0.5}, 1);
    CHECK(half.prefix_product(0, 0.9) == 1.0);  // empty product convention
    CHECK(half.prefix_product(1, 0.9) == doctest::Approx(0.45).epsilon(1e-15));
    CHECK(equal_weights(3, 5).prefix_product(5, 0.95) == 0.0);
    CHECK_THROWS_AS(half.prefix_product(-1, 0.9), std::invalid_argument);
}

TEST_CASE("weight matrix structural invariants hold for random schedules") {
    Rng rng(20240517);
    for (int rep = 0; rep < 200; ++rep) {
        LambdaSchedule s = testutil::random_schedule(rng, 8);
        WeightMatrix w = weight_matrix(s, 20);
        for (int m = 1; m <= 20; ++m) {
            double sum = 0.0;
            for (int k = 1; k <= m; ++k) sum += w.at(m, k);
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
        for (int j = 2; j <= 20; ++j)
            CHECK(std::abs(w.at(j, j - 1) + w.at(j, j) - w.at(j - 1, j - 1)) <= 1e-12);
    }
}

TEST_CASE("rational schedules satisfy the recurrence exactly") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        LambdaSchedule s = testutil::random_rational_schedule(rng, 8);
        WeightMatrix w = weight_matrix(s, 20);
        REQUIRE(w.exact_rows.has_value());
        for (int m = 1; m <= 20; ++m) {
            Rational sum(0);
            for (int k = 1; k <= m; ++k) sum += w.exact_at(m, k);
            CHECK(sum == Rational(1));
        }
        for (int j = 2; j <= 20; ++j)
            CHECK(w.exact_at(j, j - 1) + w.exact_at(j, j) == w.exact_at(j - 1, j - 1));
    }
}

TEST_CASE("equal weights rows assign exactly 1/(n2-n1+1) past n2") {
    for (auto [n1, n2] : std::vector<std::pair<int, int>>{{3, 5}, {1, 4}, {2, 2}, {4, 9}}) {
        WeightMatrix w = weight_matrix(equal_weights(n1, n2), n2 + 6);
        for (int m = n2 + 1; m <= n2 + 6; ++m) {
            for (int k = 1; k <= m; ++k) {
                Rational expect = (k >= n1 && k <= n2) ? Rational(1, n2 - n1 + 1) : Rational(0);
                CHECK(w.exact_at(m, k) == expect);
            }
        }
    }
}

// The discount-aware mixture weights gamma^{m-1}(1-gamma) over episode
// lengths, so row-stochasticity makes the total reward-coefficient telescope:
// sum_{m<=M} gamma^{m-1}(1-gamma) * (row m sum) = 1 - gamma^M.
TEST_CASE("row sums telescope the discount-aware coefficients") {
    Rng rng(99);
    LambdaSchedule s = testutil::random_rational_schedule(rng, 6);
    WeightMatrix w = weight_matrix(s, 12);
    Rational gamma(9, 10);
    Rational total(0), gpow(1);
    for (int m = 1; m <= 12; ++m) {
        Rational row_sum(0);
        for (int k = 1; k <= m; ++k) row_sum += w.exact_at(m, k);
        total += gpow * (Rational(1) - gamma) * row_sum;
        gpow *= gamma;
    }
    CHECK(total == Rational(1) - gpow);
}

TEST_CASE("schedule parsing and formatting") {
    LambdaSchedule named = parse_schedule("equal_weights(3,5)");
    CHECK(named.truncation() == 5);
    CHECK(named.is_exact());

    LambdaSchedule listed = parse_schedule("[1, 1, 0.6667, 0.5]");
    CHECK(listed.truncation() == 4);
    CHECK(listed.value(3) == doctest::Approx(0.6667));

    LambdaSchedule round = parse_schedule(format_schedule(listed));
    for (int j = 1; j <= 4; ++j) CHECK(round.value(j) == listed.value(j));

    CHECK_THROWS_AS(parse_schedule(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_schedule("[1, oops]"), std::invalid_argument);
    CHECK_THROWS_AS(parse_schedule("equal_weights(3)"), std::invalid_argument);
    CHECK_THROWS_AS(parse_schedule("[1.5]"), std::invalid_argument);
}
