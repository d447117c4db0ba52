#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "gslb/corpus.hpp"
#include "gslb/evaluation.hpp"
#include "gslb/rng.hpp"

using namespace gslb::evaluation;
using Tokens = std::vector<std::string>;

TEST_CASE("hand fixture: one substituted word") {
    const Tokens cand{"the", "cat", "sat"}, ref{"the", "cat", "ran"};
    CHECK(rouge_n(cand, ref, 1).f1 == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(rouge_n(cand, ref, 2).f1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rouge_l(cand, ref).f1 == doctest::Approx(2.0 / 3).epsilon(1e-12));
}

TEST_CASE("empty sides and identical sequences") {
    const Tokens a{"a", "b"};
    CHECK(rouge_n({}, a, 1).f1 == 0.0);
    CHECK(rouge_n(a, {}, 1).f1 == 0.0);
    CHECK(rouge_l({}, a).f1 == 0.0);
    CHECK(rouge_n(Tokens{"a"}, Tokens{"a"}, 2).f1 == 0.0);
    CHECK(rouge_n(a, a, 1).f1 == 1.0);
    CHECK(rouge_l(a, a).f1 == 1.0);
}

TEST_CASE("clipped counts") {
    const Tokens cand{"the", "the", "the"}, ref{"the", "cat"};
    auto s = rouge_n(cand, ref, 1);
    CHECK(s.precision == doctest::Approx(1.0 / 3));
    CHECK(s.recall == doctest::Approx(0.5));
}

TEST_CASE("ROUGE matches brute-force oracles on random pairs") {
    gslb::Rng rng(99);
    const Tokens alphabet{"a", "b", "c", "d"};
    auto draw = [&] {
        Tokens t(rng.index(9));
        for (auto& w : t) w = alphabet[rng.index(alphabet.size())];
        return t;
    };
    for (int trial = 0; trial < 1000; ++trial) {
        const auto cand = draw(), ref = draw();
        for (std::size_t n : {1, 2}) {
            auto got = rouge_n(cand, ref, n);
            auto want = gslb::oracle::rouge_n(cand, ref, n);
            CHECK(std::abs(got.precision - want.p) <= 1e-9);
            CHECK(std::abs(got.recall - want.r) <= 1e-9);
            CHECK(std::abs(got.f1 - want.f) <= 1e-9);
        }
        auto got = rouge_l(cand, ref);
        auto want = gslb::oracle::rouge_l(cand, ref);
        CHECK(lcs_length(cand, ref) == gslb::oracle::lcs_brute_force(cand, ref));
        CHECK(std::abs(got.f1 - want.f) <= 1e-9);
    }
}

TEST_CASE("sentence-level ROUGE-L equals summary-level on single sentences") {
    const Tokens cand{"w", "x", "y", "z"}, ref{"w", "y", "x", "z"};
    CHECK(rouge_l_union(cand, ref).f1 == doctest::Approx(rouge_l(cand, ref).f1));
    // Union over two candidate sentences recovers both reference orders.
    const Tokens c2{"a", "b", ".", "b", "a", "."}, r2{"b", "a", "."};
    CHECK(rouge_l_union(c2, r2).recall == doctest::Approx(1.0));
}

TEST_CASE("consistency score modes") {
    const std::vector<double> p{0.9, 0.4, 0.6, 0.5};
    CHECK(consistency_score(p) == doctest::Approx(60.0));
    CHECK(consistency_score(p, ConsistencyMode::accuracy) == doctest::Approx(75.0));
    CHECK_THROWS_AS(consistency_score(std::vector<double>{}), EvaluationError);
    CHECK_THROWS_AS(parse_consistency_mode("median"), EvaluationError);
}

TEST_CASE("new token counting is a multiset difference") {
    CHECK(new_token_count(Tokens{"a", "b"}, Tokens{"a", "b"}) == 0);
    CHECK(new_token_count(Tokens{"a", "b"}, Tokens{"a", "a", "c"}) == 2);
    CHECK(new_token_count(Tokens{"a", "b", "c"}, Tokens{"c"}) == 0);
}

TEST_CASE("diagnostics over a planted fixture") {
    std::vector<IdText> cand, corr;
    for (int i = 0; i < 40; ++i) {
        const auto id = "c" + std::to_string(i);
        const std::string text = "he took it again for about " + std::to_string(i) + " months";
        cand.push_back({id, text});
        corr.push_back({id, text});
    }
    corr[3].text = "he took it again for about 18 months";         // 1 new
    corr[10].text = "she took it again for about 10 months";       // 1 new
    corr[20].text = "she took them again for about 18 weeks";      // 4 new
    corr[30].text = "he took it again";                            // 0 new
    auto d = correction_diagnostics(cand, corr);
    CHECK(d.total == 40);
    CHECK(d.revised == 4);
    CHECK(d.revised_fraction == 0.10);
    CHECK(d.new_token_counts == std::vector<std::size_t>{1, 1, 4, 0});
    CHECK(d.at_most_three_new_fraction == doctest::Approx(0.75));
    CHECK(d.new_token_histogram.at(1) == 2);
    corr[5].id = "other";
    CHECK_THROWS_AS(correction_diagnostics(cand, corr), EvaluationError);
}

TEST_CASE("system evaluation aligns by id and formats the table") {
    std::vector<IdText> outputs{{"b", "the cat ran"}, {"a", "the cat sat"}};
    std::vector<IdText> refs{{"a", "the cat ran"}, {"b", "the cat ran"}};
    std::vector<IdText> docs{{"a", "doc a"}, {"b", "doc b"}};
    auto report = evaluate_system(outputs, refs, docs,
                                  [](const std::string& claim, const std::string&) {
                                      return claim == "the cat ran" ? 1.0 : 0.0;
                                  });
    CHECK(report.rouge1 == doctest::Approx(100.0 * (1.0 + 2.0 / 3) / 2));
    CHECK(report.rouge2 == doctest::Approx(100.0 * (1.0 + 0.5) / 2));
    CHECK(report.consistency == doctest::Approx(50.0));
    report.model = "Seq2Seq";
    report.guidance = "none";
    auto table = format_table({report});
    CHECK(table.find("| Model") == 0);
    CHECK(table.find("FactCC") != std::string::npos);
    CHECK(table.find("83.333") != std::string::npos);
    CHECK(report_json(report)["rows"].size() == 2);
    outputs.push_back({"z", "x"});
    CHECK_THROWS_AS(evaluate_system(outputs, refs, docs, nullptr), EvaluationError);
}
