#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "factens/error.hpp"
#include "factens/metrics.hpp"
#include "factens/rng.hpp"
#include "support.hpp"

using namespace factens;

TEST_CASE("balanced accuracy examples") {
    std::vector<int> gold{1, 1, 0, 0};
    CHECK(balanced_accuracy(gold, gold) == 1.0);
    CHECK(balanced_accuracy(std::vector<int>{1, 1, 1, 1}, gold) == 0.5);

    // TPR 4/5, TNR 3/5
    std::vector<int> g{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    std::vector<int> p{1, 1, 1, 1, 0, 0, 0, 0, 1, 1};
    CHECK(balanced_accuracy(p, g) == doctest::Approx(0.7).epsilon(1e-15));

    CHECK_THROWS_AS(balanced_accuracy(std::vector<int>{1, 0}, std::vector<int>{1, 1}), SingleClassGold);
    CHECK_THROWS_AS(balanced_accuracy(std::vector<int>{1}, std::vector<int>{1, 0}), PreconditionError);
}

TEST_CASE("balanced accuracy is invariant under relabeling both sides") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> p(40), g(40);
        for (int i = 0; i < 40; ++i) {
            p[i] = rng.bernoulli(0.5);
            g[i] = i < 20 ? 1 : 0;
        }
        std::vector<int> pf(40), gf(40);
        for (int i = 0; i < 40; ++i) {
            pf[i] = 1 - p[i];
            gf[i] = 1 - g[i];
        }
        CHECK(balanced_accuracy(p, g) == doctest::Approx(balanced_accuracy(pf, gf)).epsilon(1e-15));
    }
}

TEST_CASE("precision and recall") {
    std::vector<int> gold{1, 1, 0, 0};
    auto r = precision_recall(gold, gold);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);

    r = precision_recall(std::vector<int>{1, 1, 1, 1}, gold);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 1.0);

    r = precision_recall(std::vector<int>{0, 0, 0, 0}, gold);
    CHECK_FALSE(r.precision_defined);
    CHECK(r.recall == 0.0);
    CHECK(r.recall_defined);
}

TEST_CASE("ece hand fixture") {
    std::vector<double> p{0.9, 0.9, 0.6, 0.6};
    std::vector<int> g{1, 0, 1, 1};
    const auto r = expected_calibration_error(p, g, 8);
    CHECK(r.ece == doctest::Approx(0.40).epsilon(1e-12));
}

TEST_CASE("ece trivial cases") {
    CHECK(expected_calibration_error(std::vector<double>{1.0}, std::vector<int>{1}).ece == 0.0);
    // Empirical rate 0.25 inside the bin holding 0.25.
    std::vector<double> p(8, 0.25);
    std::vector<int> g{1, 1, 0, 0, 0, 0, 0, 0};
    CHECK(expected_calibration_error(p, g).ece == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("ece of a constant predictor is |rate - p|") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const double c = rng.uniform();
        std::vector<double> p(50, c);
        std::vector<int> g(50);
        int ones = 0;
        for (auto& x : g) ones += (x = rng.bernoulli(0.4));
        const auto r = expected_calibration_error(p, g, 8);
        CHECK(r.ece == doctest::Approx(std::abs(ones / 50.0 - c)).epsilon(1e-12));
    }
}

TEST_CASE("reliability bins partition samples and bracket their confidence") {
    Rng rng(5);
    std::vector<double> p(300);
    std::vector<int> g(300);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = i % 37 == 0 ? 1.0 : rng.uniform();
        g[i] = rng.bernoulli(p[i]);
    }
    for (auto mode : {ConfidenceMode::PositiveClass, ConfidenceMode::MaxClass}) {
        const auto r = expected_calibration_error(p, g, 8, mode);
        CHECK(r.ece >= 0.0);
        CHECK(r.ece <= 1.0);
        std::size_t total = 0, pos = 0, neg = 0;
        for (const auto& b : r.bins) {
            total += b.count;
            if (b.count == 0) continue;
            CHECK(b.mean_confidence >= b.lo);
            CHECK(b.mean_confidence <= b.hi);
            CHECK(b.empirical_accuracy >= 0.0);
            CHECK(b.empirical_accuracy <= 1.0);
        }
        for (const auto& b : r.positive_bins) pos += b.count;
        for (const auto& b : r.negative_bins) neg += b.count;
        std::size_t predicted_pos = 0;
        for (double x : p) predicted_pos += x >= 0.5;
        CHECK(total == p.size());
        CHECK(pos == predicted_pos);
        CHECK(neg == p.size() - predicted_pos);
    }
}

TEST_CASE("reliability csv rows cover every split") {
    std::vector<double> p{0.9, 0.9, 0.6, 0.1};
    std::vector<int> g{1, 0, 1, 0};
    const auto rows = reliability_rows(expected_calibration_error(p, g, 4));
    CHECK(rows.size() == 12);
    CHECK(rows.front().size() == 6);
    CHECK(rows[0][2] == "all");
    CHECK(rows[4][2] == "positive");
    CHECK(rows[8][2] == "negative");
}

TEST_CASE("bonferroni") {
    CHECK(bonferroni(0.004, 4) == doctest::Approx(0.016).epsilon(1e-15));
    CHECK(bonferroni(0.4, 4) == 1.0);
}

TEST_CASE("bootstrap on identical systems never reports significance") {
    Rng rng(8);
    std::vector<int> g(200), p(200);
    for (int i = 0; i < 200; ++i) {
        g[i] = i % 2;
        p[i] = rng.bernoulli(0.6) ? g[i] : 1 - g[i];
    }
    BootstrapOptions o;
    o.resamples = 2000;
    o.seed = 1;
    const auto r = bootstrap_compare(p, p, g, o);
    CHECK(r.delta_observed == 0.0);
    CHECK(r.p_value >= 0.5);
}

TEST_CASE("bootstrap detects a planted advantage") {
    // A is right and B wrong on 30% of items; they agree elsewhere.
    Rng rng(21);
    const std::size_t n = 1000;
    std::vector<int> g(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = static_cast<int>(i % 2);
        const bool gap = rng.bernoulli(0.3);
        const int shared = rng.bernoulli(0.5) ? g[i] : 1 - g[i];
        a[i] = gap ? g[i] : shared;
        b[i] = gap ? 1 - g[i] : shared;
    }
    BootstrapOptions o;
    o.resamples = 2000;
    o.seed = 99;
    o.comparisons = 4;
    const auto r = bootstrap_compare(a, b, g, o);
    CHECK(r.delta_observed > 0.2);
    CHECK(r.p_value < 0.01);
    CHECK(r.p_value_bonferroni == doctest::Approx(std::min(1.0, r.p_value * 4)).epsilon(1e-15));
}

TEST_CASE("bootstrap is deterministic and thread-count independent") {
    Rng rng(2);
    std::vector<int> g(120), a(120), b(120);
    for (int i = 0; i < 120; ++i) {
        g[i] = i < 6 ? 1 : 0;  // rare positives force redraws
        a[i] = rng.bernoulli(0.5);
        b[i] = rng.bernoulli(0.5);
    }
    BootstrapOptions o;
    o.resamples = 500;
    o.seed = 7;
    const auto r1 = bootstrap_compare(a, b, g, o);
    o.threads = 4;
    const auto r4 = bootstrap_compare(a, b, g, o);
    CHECK(r1.p_value == r4.p_value);
    CHECK(r1.redraws == r4.redraws);
    CHECK(r1.redraws > 0);
    o.sided = Sidedness::TwoSided;
    const auto two = bootstrap_compare(a, b, g, o);
    CHECK(two.p_value <= 1.0);
    CHECK(two.p_value >= 0.0);
}

TEST_CASE("binomial ci") {
    CHECK(binomial_ci95(0.5, 100) == doctest::Approx(0.098).epsilon(1e-12));
    CHECK(binomial_ci95(1.0, 50) == 0.0);
    CHECK(binomial_ci95(0.702, 560) == doctest::Approx(0.038).epsilon(0.02));
    CHECK_THROWS_AS(binomial_ci95(0.5, 0), PreconditionError);
}

TEST_CASE("evaluation report json carries every field") {
    std::vector<double> p{0.9, 0.2, 0.7, 0.4};
    std::vector<int> g{1, 0, 0, 1};
    const auto rep = evaluate_predictions(p, g);
    CHECK(rep.n == 4);
    CHECK(rep.balanced_accuracy == 0.5);
    const auto j = to_json(rep);
    CHECK(j.at("n") == 4);
    CHECK(j.at("reliability_bins").at("positive").size() == kDefaultEceBins);
    CHECK(j.contains("ci95"));
}
