#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "factens/calibrate.hpp"
#include "factens/error.hpp"
#include "factens/metrics.hpp"
#include "support.hpp"

using namespace factens;
using namespace factens::testing;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double ece_of(const std::vector<double>& p, const std::vector<int>& y) {
    return expected_calibration_error(p, y, 8).ece;
}

}  // namespace

TEST_CASE("platt rejects one-class labels") {
    std::vector<double> s{0.1, 0.5, 0.9};
    std::vector<int> y{1, 1, 1};
    CHECK_THROWS_AS(fit_platt(s, y), DegenerateLabels);
    CHECK_THROWS_AS(fit_calibrator(CalibratorKind::Platt, s, std::vector<int>{0, 0, 0}), DegenerateLabels);
}

TEST_CASE("platt with a=1, b=0 is a sigmoid, not the identity") {
    Calibrator c;
    c.kind = CalibratorKind::Platt;
    CHECK(apply(c, 0.5) == doctest::Approx(0.6225).epsilon(1e-3));
}

TEST_CASE("platt on overconfident scores pulls 0.9 down to about 0.7") {
    const auto d = overconfident(10000, 1);
    const auto c = fit_platt(d.scores, d.labels);
    CHECK(c.a >= 0);
    CHECK(std::abs(apply(c, 0.9) - 0.7) <= 0.05);
}

TEST_CASE("platt on calibrated scores stays near the identity") {
    const auto d = calibrated(10000, 2);
    const auto c = fit_platt(d.scores, d.labels);
    CHECK(c.a >= 0);
    double worst = 0;
    for (double p = 0.1; p <= 0.9 + 1e-12; p += 0.01) worst = std::max(worst, std::abs(apply(c, p) - p));
    CHECK(worst < 0.045);

    // No sigmoid gets within 0.02 of the identity on all of [0.1, 0.9]: scan
    // a fine (a, b) grid and confirm the best sup-deviation stays above it.
    double best = 1;
    for (double a = 3.0; a <= 6.0; a += 0.01) {
        for (double b = -a / 2 - 0.2; b <= -a / 2 + 0.2; b += 0.01) {
            double dev = 0;
            for (double p = 0.1; p <= 0.9 + 1e-12; p += 0.01) dev = std::max(dev, std::abs(sigmoid(a * p + b) - p));
            best = std::min(best, dev);
        }
    }
    CHECK(best > 0.02);
}

TEST_CASE("platt preserves ranking") {
    const auto d = overconfident(2000, 4);
    const auto c = fit_platt(d.scores, d.labels);
    auto order = [](const std::vector<double>& v) {
        std::vector<std::size_t> o(v.size());
        std::iota(o.begin(), o.end(), 0);
        std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        return o;
    };
    CHECK(order(d.scores) == order(apply_all(c, d.scores)));
}

TEST_CASE("isotonic examples") {
    auto c = fit_isotonic(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1});
    CHECK(apply(c, 0.0) == 0.0);
    CHECK(apply(c, 0.5) == 0.0);
    CHECK(apply(c, 0.95) == 1.0);

    c = fit_isotonic(std::vector<double>{0.2, 0.8}, std::vector<int>{1, 0});
    CHECK(apply(c, 0.1) == 0.5);
    CHECK(apply(c, 0.9) == 0.5);

    for (int v : {0, 1}) {
        c = fit_isotonic(std::vector<double>{0.3, 0.1, 0.7}, std::vector<int>{v, v, v});
        for (double p : {0.0, 0.2, 0.5, 1.0}) CHECK(apply(c, p) == v);
    }
    CHECK_THROWS_AS(fit_isotonic(std::vector<double>{0.5}, std::vector<int>{1}), PreconditionError);
}

TEST_CASE("isotonic equals the exhaustive monotone fit") {
    Rng rng(2718);
    std::size_t instances = 0;
    for (std::size_t n = 2; n <= 8; ++n) {
        for (int draw = 0; draw < 12; ++draw) {
            std::vector<double> scores(n);
            for (auto& s : scores) s = static_cast<double>(rng.index(9)) / 8.0;
            for (unsigned pattern = 0; pattern < (1u << n); ++pattern) {
                std::vector<int> labels(n);
                for (std::size_t i = 0; i < n; ++i) labels[i] = (pattern >> i) & 1u;
                const auto c = fit_isotonic(scores, labels);
                const auto oracle = exhaustive_isotonic(scores, labels);
                for (const auto& [score, value] : oracle) CHECK(apply(c, score) == value);
                for (std::size_t k = 1; k < c.knot_values.size(); ++k) CHECK(c.knot_values[k - 1] <= c.knot_values[k]);
                ++instances;
            }
        }
    }
    CHECK(instances > 5000);
}

TEST_CASE("histogram binning examples") {
    std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    std::vector<int> y{0, 0, 1, 1};
    auto c = fit_histogram(s, y, 1);
    for (double p : {0.0, 0.5, 1.0}) CHECK(apply(c, p) == 0.5);

    c = fit_histogram(s, y, 2);
    CHECK(c.histogram.edges == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(apply(c, 0.15) == 0.0);
    CHECK(apply(c, 0.85) == 1.0);

    CHECK_THROWS_AS(fit_histogram(s, y, 0), PreconditionError);
}

TEST_CASE("histogram edges are strictly increasing and span [0, 1]") {
    std::vector<double> s{0.5, 0.5, 0.5, 0.5, 0.5, 0.9, 0.2, 0.2, 0.0, 1.0};
    for (std::size_t bins = 1; bins <= 12; ++bins) {
        const auto e = equal_frequency_edges(s, bins);
        CHECK(e.front() == 0.0);
        CHECK(e.back() == 1.0);
        for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i - 1] < e[i]);
    }
}

TEST_CASE("histogram on a large calibrated sample") {
    // Per-bin standard error is about 0.005 at this size.
    const auto d = calibrated(100000, 7);
    const auto c = fit_histogram(d.scores, d.labels, 10);
    std::vector<double> sum(c.histogram.values.size()), cnt(c.histogram.values.size());
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
        const auto b = c.histogram.bin_of(d.scores[i]);
        sum[b] += d.scores[i];
        cnt[b] += 1;
    }
    for (std::size_t b = 0; b < cnt.size(); ++b) {
        REQUIRE(cnt[b] > 0);
        CHECK(std::abs(c.histogram.values[b] - sum[b] / cnt[b]) < 0.03);
    }
}

TEST_CASE("bbq hand computation with a single candidate") {
    std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    std::vector<int> y{0, 0, 1, 1};
    const auto c = fit_bbq(s, y, std::vector<std::size_t>{2});
    REQUIRE(c.models.size() == 1);
    CHECK(c.weights[0] == 1.0);
    CHECK(apply(c, 0.15) == doctest::Approx(0.25));
    CHECK(apply(c, 0.85) == doctest::Approx(0.75));
    CHECK_THROWS_AS(fit_bbq(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{0, 1, 0}), PreconditionError);
}

TEST_CASE("bbq weights sum to one") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 4 + rng.index(300);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.uniform();
            y[i] = rng.bernoulli(s[i]);
        }
        const auto c = fit_bbq(s, y);
        const double total = std::accumulate(c.weights.begin(), c.weights.end(), 0.0);
        CHECK(std::abs(total - 1.0) <= 1e-12);
        for (double w : c.weights) CHECK(w >= 0);
        const auto hi = static_cast<std::size_t>(std::ceil(2 * std::cbrt(static_cast<double>(n))));
        CHECK(c.models.size() == std::max<std::size_t>(2, hi) - 1);
    }
}

TEST_CASE("every calibrator lowers ECE on held-out overconfident scores") {
    const auto fit_data = overconfident(10000, 100);
    const auto eval = overconfident(10000, 101);
    const double before = ece_of(eval.scores, eval.labels);
    CHECK(before > 0.1);
    for (auto kind : kAllCalibratorKinds) {
        const auto c = fit_calibrator(kind, fit_data.scores, fit_data.labels);
        const double after = ece_of(apply_all(c, eval.scores), eval.labels);
        CHECK_MESSAGE(after < before, to_string(kind));
    }
}

TEST_CASE("outputs stay in [0, 1] at the extremes") {
    const auto d = overconfident(500, 5);
    for (auto kind : kAllCalibratorKinds) {
        const auto c = fit_calibrator(kind, d.scores, d.labels);
        for (double p : {0.0, 1.0}) {
            CHECK(apply(c, p) >= 0.0);
            CHECK(apply(c, p) <= 1.0);
        }
    }
}

TEST_CASE("calibrator json round trip is exact") {
    const auto d = overconfident(700, 9);
    for (auto kind : kAllCalibratorKinds) {
        const auto c = fit_calibrator(kind, d.scores, d.labels);
        const auto back = calibrator_from_json(nlohmann::json::parse(to_json(c).dump()));
        CHECK(back.kind == kind);
        CHECK(back.a == c.a);
        CHECK(back.b == c.b);
        CHECK(back.knots == c.knots);
        CHECK(back.histogram.edges == c.histogram.edges);
        CHECK(back.weights == c.weights);
        for (double p = 0; p <= 1.0; p += 0.013) CHECK(apply(back, p) == apply(c, p));
    }
    CHECK_THROWS_AS(calibrator_from_json(nlohmann::json{{"format_version", 99}}), SchemaError);
}
