#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "factens/error.hpp"
#include "factens/featurize.hpp"
#include "factens/rng.hpp"

using namespace factens;
namespace fs = std::filesystem;

namespace {

std::vector<LabeledExample> examples(std::size_t n) {
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({"e" + std::to_string(i), DatasetId::custom("d"), "doc", "sum", int(i % 2)});
    return out;
}

Verdict v(const std::string& ex, const std::string& pr, VerdictValue value) { return {value, "", pr, ex}; }

FeatureMatrix column(std::vector<std::int8_t> values) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < values.size(); ++i) ids.push_back("r" + std::to_string(i));
    return {ids, {"p"}, std::move(values)};
}

FeatureMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double abstain) {
    Rng rng(seed);
    std::vector<std::string> ex, pr;
    std::vector<std::int8_t> vals;
    std::vector<int> labels;
    for (std::size_t i = 0; i < rows; ++i) {
        ex.push_back("e" + std::to_string(i));
        labels.push_back(rng.bernoulli(0.5));
    }
    for (std::size_t j = 0; j < cols; ++j) pr.push_back("p" + std::to_string(j));
    for (std::size_t k = 0; k < rows * cols; ++k)
        vals.push_back(rng.bernoulli(abstain) ? kAbstain : static_cast<std::int8_t>(rng.bernoulli(0.5)));
    return {ex, pr, vals, labels};
}

}  // namespace

TEST_CASE("build_matrix examples") {
    const auto ex = examples(2);
    const std::vector<std::string> pool{"a", "b"};
    std::vector<Verdict> all;
    for (const auto& e : ex)
        for (const auto& p : pool) all.push_back(v(e.id, p, VerdictValue::Consistent));
    const auto m = build_matrix(all, ex, pool);
    CHECK(m.values() == std::vector<std::int8_t>{1, 1, 1, 1});
    CHECK(m.require_labels() == std::vector<int>{0, 1});

    all.pop_back();
    const auto gap = build_matrix(all, ex, pool);
    CHECK(gap.at(1, 1) == kAbstain);

    all.push_back(v("e0", "a", VerdictValue::Inconsistent));
    CHECK_THROWS_AS(build_matrix(all, ex, pool), DuplicateVerdict);

    std::vector<Verdict> stray{v("e0", "zzz", VerdictValue::Consistent)};
    CHECK_THROWS_AS(build_matrix(stray, ex, pool), UnknownPrompt);
}

TEST_CASE("build then flatten reproduces the verdict multiset") {
    Rng rng(9);
    const auto ex = examples(13);
    const std::vector<std::string> pool{"a", "b", "c", "d"};
    std::vector<Cell> expected;
    std::vector<Verdict> verdicts;
    for (const auto& e : ex) {
        for (const auto& p : pool) {
            const auto value = static_cast<VerdictValue>(static_cast<int>(rng.index(3)) - 1);
            verdicts.push_back(v(e.id, p, value));
            expected.push_back({e.id, p, static_cast<std::int8_t>(value)});
        }
    }
    std::reverse(verdicts.begin(), verdicts.end());
    auto got = flatten(build_matrix(verdicts, ex, pool));
    std::sort(got.begin(), got.end());
    std::sort(expected.begin(), expected.end());
    CHECK(got == expected);
}

TEST_CASE("impute examples") {
    CHECK(impute(column({1, kAbstain, 1}), ImputePolicy::AbstainAsColumnMajority).values() ==
          std::vector<std::int8_t>{1, 1, 1});
    CHECK(impute(column({kAbstain}), ImputePolicy::AbstainAsInconsistent).values() == std::vector<std::int8_t>{0});
    CHECK_THROWS_AS(impute(column({kAbstain, kAbstain}), ImputePolicy::AbstainAsColumnMajority), AllAbstainColumn);
    // tie goes to 0
    CHECK(impute(column({1, 0, kAbstain}), ImputePolicy::AbstainAsColumnMajority).at(2, 0) == 0);
}

TEST_CASE("impute is idempotent and dense") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_matrix(30, 4, seed, 0.3);
        for (auto policy : {ImputePolicy::AbstainAsInconsistent, ImputePolicy::AbstainAsColumnMajority}) {
            const auto once = impute(m, policy);
            CHECK(once.dense());
            CHECK(impute(once, policy) == once);
            for (std::size_t k = 0; k < m.values().size(); ++k) {
                if (m.values()[k] != kAbstain) CHECK(once.values()[k] == m.values()[k]);
            }
        }
    }
}

TEST_CASE("select_columns examples and composition") {
    const auto m = random_matrix(20, 9, 3, 0.1);
    CHECK(select_columns(m, m.prompt_ids()) == m);

    const std::vector<std::string> three{"p7", "p0", "p4"};
    const auto s = select_columns(m, three);
    CHECK(s.rows() == 20);
    CHECK(s.cols() == 3);
    for (std::size_t i = 0; i < 20; ++i) CHECK(s.at(i, 0) == m.at(i, 7));
    CHECK(s.labels() == m.labels());

    const std::vector<std::string> a{"p1", "p2", "p4", "p7", "p8"};
    const std::vector<std::string> b{"p8", "p2"};
    CHECK(select_columns(select_columns(m, a), b) == select_columns(m, b));

    const std::vector<std::string> unknown{"p1", "nope"};
    CHECK_THROWS_AS(select_columns(m, unknown), UnknownPrompt);
}

TEST_CASE("matrix shape checks") {
    CHECK_THROWS_AS(FeatureMatrix({"a"}, {"p", "q"}, {1}), PreconditionError);
    CHECK_THROWS_AS(FeatureMatrix({"a"}, {"p", "p"}, {1, 0}), PreconditionError);
    CHECK_THROWS_AS(FeatureMatrix({"a"}, {"p"}, {2}), PreconditionError);
    CHECK_THROWS_AS(FeatureMatrix({"a"}, {"p"}, {1}, std::vector<int>{0, 1}), PreconditionError);
}

TEST_CASE("vstack and take_rows") {
    const auto m = random_matrix(10, 3, 5, 0.2);
    const std::vector<std::size_t> first{0, 1, 2, 3}, rest{4, 5, 6, 7, 8, 9};
    const std::vector<FeatureMatrix> parts{m.take_rows(first), m.take_rows(rest)};
    CHECK(vstack(parts) == m);

    const std::vector<std::string> swapped{"p1", "p0", "p2"};
    const std::vector<FeatureMatrix> bad{m, select_columns(m, swapped)};
    CHECK_THROWS_AS(vstack(bad), ColumnMismatch);
}

TEST_CASE("matrix CSV round trip keeps abstains and missing labels") {
    const auto path = fs::temp_directory_path() / "factens_matrix.csv";
    const auto m = random_matrix(15, 4, 8, 0.25);
    write_matrix_csv(path, m, "config=abc seed=8");
    CHECK(read_matrix_csv(path) == m);

    const auto unlabelled = m.without_labels();
    write_matrix_csv(path, unlabelled);
    CHECK(read_matrix_csv(path) == unlabelled);
}

TEST_CASE("impute policy names") {
    CHECK(parse_impute_policy("column_majority") == ImputePolicy::AbstainAsColumnMajority);
    CHECK(parse_impute_policy("inconsistent") == ImputePolicy::AbstainAsInconsistent);
    CHECK_THROWS_AS(parse_impute_policy("mean"), ConfigError);
}
