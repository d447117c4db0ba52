#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gslb/corruption.hpp"

using namespace gslb;
using namespace gslb::corruption;

namespace {

const std::string kDocMonths =
    "My doctor put me on Zoloft in March. About 6- 8 months later ther anxiety was back, "
    "so I took it again for about 18 months. Dr Smith said CBT helps.";
const std::string kSumMonths = "Zoloft helped, then took it again for about 18 months";

const std::string kDocPronoun =
    "I'm 19 year old male with autism, depression and anxiety. My mother is leaving me and "
    "I have 2 brothers.";
const std::string kSumPronoun = "19 year old with autism worried his mother is leaving him";

std::vector<TypedSpan> of_kind(const std::vector<TypedSpan>& spans, SpanKind k) {
    std::vector<TypedSpan> out;
    for (const auto& s : spans)
        if (s.kind == k) out.push_back(s);
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("typed span extraction") {
    auto spans = extract_typed_spans(kDocMonths, Source::document);
    auto dates = of_kind(spans, SpanKind::date);
    std::vector<std::string> date_text;
    for (const auto& d : dates) date_text.push_back(d.surface);
    CHECK(date_text == std::vector<std::string>{"March", "6- 8 months", "18 months"});
    auto ents = of_kind(spans, SpanKind::entity);
    std::vector<std::string> ent_text;
    for (const auto& e : ents) ent_text.push_back(e.surface);
    CHECK(ent_text == std::vector<std::string>{"Zoloft", "Smith", "CBT"});
    for (const auto& s : spans) CHECK(kDocMonths.substr(s.begin, s.end - s.begin) == s.surface);
    for (std::size_t i = 1; i < spans.size(); ++i) CHECK(spans[i - 1].end <= spans[i].begin);
}

TEST_CASE("numbers, numeric dates, and sentence-initial words") {
    auto spans = extract_typed_spans("Took 2.5 mg on 3/14/2021 and 10 - 20 pills. Then Paxil.");
    std::vector<std::pair<SpanKind, std::string>> got;
    for (const auto& s : spans) got.emplace_back(s.kind, s.surface);
    CHECK(got == std::vector<std::pair<SpanKind, std::string>>{{SpanKind::number, "2.5"},
                                                               {SpanKind::date, "3/14/2021"},
                                                               {SpanKind::number, "10 - 20"},
                                                               {SpanKind::entity, "Paxil"}});
}

TEST_CASE("pronoun classes") {
    CHECK(pronoun_class_of("him") == PronounClass::object);
    CHECK(pronoun_class_of("My") == PronounClass::possessive_dependent);
    CHECK(pronoun_class_of("her") == PronounClass::object);
    CHECK(pronoun_class_of("themselves") == PronounClass::reflexive);
    CHECK_FALSE(pronoun_class_of("mother").has_value());
    auto spans = extract_typed_spans(kSumPronoun);
    auto p = of_kind(spans, SpanKind::pronoun);
    REQUIRE(p.size() == 2);
    CHECK(p[0].surface == "his");
    CHECK(p[1].surface == "him");
    CHECK(p[1].pronoun_class == PronounClass::object);
}

TEST_CASE("number swap draws from the document") {
    const auto s = extract_typed_spans(kSumMonths), d = extract_typed_spans(kDocMonths, Source::document);
    bool saw_table_case = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto r = apply_swap(kSumMonths, SpanKind::date, s, d, seed);
        REQUIRE(r.has_value());
        CHECK_FALSE(check_record(*r, kDocMonths).has_value());
        if (r->corrupted == "Zoloft helped, then took it again for about 6- 8 months")
            saw_table_case = true;
    }
    CHECK(saw_table_case);
    // No other number in the summary's document pool.
    CHECK_FALSE(apply_swap(kSumMonths, SpanKind::number, s, d, 1).has_value());
}

TEST_CASE("pronoun swap stays inside the case class") {
    const auto s = extract_typed_spans(kSumPronoun), d = extract_typed_spans(kDocPronoun, Source::document);
    bool saw_me = false;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto r = apply_swap(kSumPronoun, SpanKind::pronoun, s, d, seed);
        REQUIRE(r.has_value());
        const auto violation = check_record(*r, kDocPronoun);
        CHECK_FALSE(violation.has_value());
        const auto& members = pronoun_class_members(*r->replaced.pronoun_class);
        std::string lowered = r->replacement;
        for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        CHECK(std::find(members.begin(), members.end(), lowered) != members.end());
        if (r->corrupted == "19 year old with autism worried his mother is leaving me") saw_me = true;
    }
    CHECK(saw_me);
}

TEST_CASE("check_record rejects broken records") {
    const auto s = extract_typed_spans(kSumPronoun), d = extract_typed_spans(kDocPronoun, Source::document);
    auto r = *apply_swap(kSumPronoun, SpanKind::pronoun, s, d, 3);
    auto cross = r;
    cross.replacement = "myself";
    cross.corrupted = r.clean.substr(0, r.replaced.begin) + "myself" + r.clean.substr(r.replaced.end);
    CHECK(check_record(cross, kDocPronoun).has_value());
    auto same = r;
    same.corrupted = r.clean;
    CHECK(check_record(same, kDocPronoun).has_value());
    auto two = r;
    two.corrupted = "20" + r.corrupted.substr(2);
    CHECK(check_record(two, kDocPronoun).has_value());
    CorruptionRecord foreign{"x", "took 18 months", "took 12 months", SpanKind::date,
                             {SpanKind::date, "18 months", 5, 14, Source::summary, std::nullopt},
                             "12 months", Label::incorrect};
    CHECK(check_record(foreign, kDocMonths).has_value());
}

TEST_CASE("split building: labels, ids, invariants, determinism") {
    std::vector<corpus::CorpusRecord> recs{{"m1", kDocMonths, kSumMonths},
                                           {"p1", kDocPronoun, kSumPronoun},
                                           {"t1", "no summary here", std::nullopt}};
    auto a = build_corruption_split(recs, 42);
    auto b = build_corruption_split(recs, 42);
    CHECK(a.classifier.size() == 2 + a.corrector.size());
    CHECK(a.classifier[0].id == "m1#clean");
    CHECK(a.classifier[0].label == Label::correct);
    for (const auto& r : a.records) {
        const auto& doc = r.id.rfind("m1", 0) == 0 ? kDocMonths : kDocPronoun;
        CHECK_FALSE(check_record(r, doc).has_value());
    }
    auto dir = std::filesystem::temp_directory_path();
    write_corrector_set(dir / "gslb_c1.jsonl", a.corrector);
    write_corrector_set(dir / "gslb_c2.jsonl", b.corrector);
    CHECK(slurp(dir / "gslb_c1.jsonl") == slurp(dir / "gslb_c2.jsonl"));
    write_classifier_set(dir / "gslb_k1.jsonl", a.classifier);
    auto back = read_classifier_set(dir / "gslb_k1.jsonl");
    REQUIRE(back.size() == a.classifier.size());
    CHECK(back.back().label == a.classifier.back().label);
    auto corr = read_corrector_set(dir / "gslb_c1.jsonl");
    REQUIRE(corr.size() == a.corrector.size());
    CHECK(corr[0].swap_kind == a.corrector[0].swap_kind);

    // Record order does not change per-record output.
    std::vector<corpus::CorpusRecord> reversed(recs.rbegin(), recs.rend());
    auto c = build_corruption_split(reversed, 42);
    for (const auto& ex : c.corrector) {
        auto it = std::find_if(a.corrector.begin(), a.corrector.end(),
                               [&](const CorrectorExample& e) { return e.id == ex.id; });
        REQUIRE(it != a.corrector.end());
        CHECK(it->input_summary == ex.input_summary);
    }
}
