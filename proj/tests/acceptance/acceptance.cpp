// Acceptance criteria AC1-AC11. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion names (e.g. AC3) to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "../support/oracles.hpp"
#include "gslb/architecture.hpp"
#include "gslb/corpus.hpp"
#include "gslb/corruption.hpp"
#include "gslb/decoding.hpp"
#include "gslb/evaluation.hpp"
#include "gslb/guidance.hpp"
#include "gslb/lexicon.hpp"
#include "gslb/parameters.hpp"
#include "gslb/rng.hpp"
#include "gslb/training.hpp"
#include <json.hpp>

namespace fs = std::filesystem;
using namespace gslb;
using corpus::TokenSequence;
using corpus::Vocabulary;

namespace {

const fs::path kFixtures = GSLB_FIXTURE_DIR;
const fs::path kWork = GSLB_WORK_DIR;
const fs::path kCli = GSLB_CLI_PATH;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

struct F64 {
    F64() { ad::set_precision(ad::Precision::f64); }
    ~F64() { ad::set_precision(ad::Precision::f32); }
};

ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return ad::Tensor::from(std::move(shape), std::move(v), true);
}

std::vector<corpus::CorpusRecord> fixture_split(corpus::Split s) {
    return corpus::load_corpus(kFixtures / "corpus" / (std::string(corpus::split_name(s)) + ".jsonl"), s);
}

TokenSequence target_of(const std::string& text, const Vocabulary& v, std::size_t max_len) {
    return model::with_bos_eos(corpus::encode_text(text, v, max_len - 2));
}

// ---------------------------------------------------------------------------
// AC1

Outcome ac1_gradients() {
    const auto start = std::chrono::steady_clock::now();
    F64 f64;
    Rng rng(101);
    double worst_op = 0.0;
    std::string worst_name;
    auto check_op = [&](const std::string& name, const std::vector<std::pair<std::string, ad::Tensor>>& in,
                        const std::function<ad::Tensor()>& op) {
        // Contract with fixed weights so every output entry reaches the loss.
        Rng wr(7);
        ad::Shape probe_shape;
        {
            ad::NoGradGuard guard;
            probe_shape = op().shape();
        }
        auto w = random_tensor(wr, probe_shape);
        w = ad::Tensor::from(w.shape(), std::vector<double>(w.values().begin(), w.values().end()), false);
        auto report = ad::finite_difference_check(in, [&] { return ad::sum(ad::mul(op(), w)); }, 1e-4);
        if (report.max_rel_error > worst_op) {
            worst_op = report.max_rel_error;
            worst_name = name;
        }
    };
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 5});
    auto c = random_tensor(rng, {5, 4});
    auto same = random_tensor(rng, {3, 4});
    auto bias = random_tensor(rng, {4});
    auto gain = random_tensor(rng, {4}, 0.5, 1.5);
    auto kinked = random_tensor(rng, {3, 4});
    for (auto& x : kinked.mutable_values()) x += x < 0 ? -0.1 : 0.1;  // keep relu's kink beyond ±ε
    auto sq = random_tensor(rng, {4, 4});
    auto q = random_tensor(rng, {3, 4}), k = random_tensor(rng, {5, 4}), v = random_tensor(rng, {5, 4});
    const std::vector<std::int32_t> ids{2, 0, 2, 3};
    const std::vector<std::int32_t> targets{1, -1, 3};

    check_op("matmul", {{"a", a}, {"b", b}}, [&] { return ad::matmul(a, b); });
    check_op("matmul_nt", {{"a", a}, {"c", c}}, [&] { return ad::matmul_nt(a, c); });
    check_op("transpose", {{"a", a}}, [&] { return ad::transpose(a); });
    check_op("add", {{"a", a}, {"s", same}}, [&] { return ad::add(a, same); });
    check_op("add_bias", {{"a", a}, {"bias", bias}}, [&] { return ad::add_bias(a, bias); });
    check_op("mul", {{"a", a}, {"s", same}}, [&] { return ad::mul(a, same); });
    check_op("scale", {{"a", a}}, [&] { return ad::scale(a, 0.37); });
    check_op("softmax", {{"a", a}}, [&] { return ad::softmax_rows(a); });
    check_op("masked softmax", {{"sq", sq}}, [&] { return ad::softmax_rows(sq, ad::AttentionMask::causal(4)); });
    check_op("layer_norm", {{"a", a}, {"gain", gain}, {"bias", bias}}, [&] { return ad::layer_norm(a, gain, bias); });
    check_op("relu", {{"k", kinked}}, [&] { return ad::relu(kinked); });
    check_op("gelu", {{"a", a}}, [&] { return ad::gelu(a); });
    check_op("embedding", {{"c", c}}, [&] { return ad::embedding(c, ids); });
    check_op("concat/slice", {{"a", a}, {"s", same}}, [&] {
        auto cols = ad::concat_cols({a, same});
        return ad::slice_rows(ad::concat_rows({ad::slice_cols(cols, 1, 6), ad::slice_cols(cols, 2, 7)}), 1, 5);
    });
    check_op("cross_entropy", {{"a", a}}, [&] { return ad::cross_entropy_sum(a, targets, -1); });
    check_op("attention", {{"q", q}, {"k", k}, {"v", v}}, [&] {
        return ad::multi_head_attention(q, k, v, ad::AttentionMask::keys(3, {true, true, false, true, true}), 2);
    });

    // Full micro summarizer: L=2, S=1, d=16, 2 heads, n=6, k=4, m=5.
    model::ModelConfig mc;
    mc.layers = 2;
    mc.shared_bottom_layers = 1;
    mc.model_dim = 16;
    mc.heads = 2;
    mc.ffn_dim = 32;
    mc.max_len = 16;
    mc.vocab_size = 20;
    // Smooth activation: relu's kink would put finite differences across a
    // discontinuity in its derivative somewhere among ~10^3 pre-activations.
    mc.activation = ad::Activation::gelu;
    model::GuidedSummarizer m(mc);
    Rng init(8);
    m.parameters().initialize(init);
    const TokenSequence x{5, 6, 7, 8, 9, 10}, g{11, 4, 12, 13}, y{1, 14, 15, 16, 2};
    const auto report = ad::finite_difference_check(
        m.parameters(), [&] { return model::summarizer_loss(m, x, g, y); }, 1e-4, 1e-3);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = worst_op <= 1e-4 && report.passed && secs <= 120.0;
    return {pass, "ops max rel err " + fmt(worst_op) + " (" + worst_name + "); summarizer max rel err " +
                      fmt(report.max_rel_error) + " over " + std::to_string(report.entries.size()) +
                      " tensors; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// AC2

Outcome ac2_architecture() {
    model::ModelConfig mc;
    mc.layers = 2;
    mc.shared_bottom_layers = 1;
    mc.model_dim = 16;
    mc.heads = 2;
    mc.ffn_dim = 32;
    mc.max_len = 16;
    mc.vocab_size = 20;
    model::GuidedSummarizer m(mc);
    Rng rng(3);
    m.parameters().initialize(rng);
    ad::NoGradGuard guard;
    const TokenSequence x{5, 6, 7, 8, 9, 10}, g1{11, 4, 12, 13}, g2{15, 16, 17}, prefix{1, 14, 15};
    auto logits = [&](const TokenSequence& g) {
        const auto out = m.decoder_logits(prefix, m.encode(x, g));
        return std::vector<double>(out.values().begin(), out.values().end());
    };
    const bool sensitive = logits(g1) != logits(g2);
    for (std::size_t i = 0; i < mc.layers; ++i) {
        for (auto t : {m.decoder_layer(i).guidance.output.weight, m.decoder_layer(i).guidance.output.bias})
            for (double& v : t.mutable_values()) v = 0.0;
    }
    const bool invariant = logits(g1) == logits(g2);
    return {sensitive && invariant, std::string("random weights sensitive: ") + (sensitive ? "yes" : "no") +
                                        "; zeroed projection bitwise invariant: " + (invariant ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// AC3

Outcome ac3_overfit() {
    const auto start = std::chrono::steady_clock::now();
    const auto pairs = corpus::load_corpus(kFixtures / "overfit8.jsonl", corpus::Split::train);
    const auto vocab = corpus::build_vocabulary(pairs, 1, 0);
    const auto matcher = lexicon::compile_matcher(
        lexicon::preprocess_terms(lexicon::read_terminology_csv(kFixtures / "terminology.csv")));

    model::ModelConfig mc;
    mc.layers = 2;
    mc.shared_bottom_layers = 1;
    mc.model_dim = 32;
    mc.heads = 4;
    mc.ffn_dim = 64;
    mc.max_len = 32;
    mc.vocab_size = vocab.size();
    model::GuidedSummarizer m(mc);
    Rng rng(1);
    m.parameters().initialize(rng);

    std::vector<training::Example> set;
    for (const auto& r : pairs)
        set.push_back({r.id, corpus::encode_text(r.document, vocab, mc.max_len),
                       guidance::render_guidance(guidance::extract_term_guidance(r.document, matcher), vocab, mc.max_len),
                       target_of(*r.summary, vocab, mc.max_len)});

    auto cfg = training::TrainConfig::defaults(training::Profile::desk, training::ModelKind::summarizer);
    cfg.max_updates = 300;
    cfg.epochs = 300;
    cfg.seed = 1;
    const decoding::DecodeConfig dc{1, 2, 30, 1.0, true};
    cfg.validation_decode = dc;
    const auto cks = training::train(training::Trainable::summarizer(m), set, set, cfg);

    double nll = 0.0;
    std::size_t tokens = 0;
    {
        ad::NoGradGuard guard;
        for (const auto& ex : set) {
            const auto t = model::summarizer_nll(m, ex.source, ex.guidance, ex.target);
            nll += t.sum.item();
            tokens += t.tokens;
        }
    }
    const double mean = nll / static_cast<double>(tokens);
    std::size_t exact = 0;
    for (const auto& ex : set) {
        const auto out = decoding::greedy_decode(decoding::summarizer_step(m, ex.source, ex.guidance), dc, vocab.size());
        const TokenSequence want(ex.target.begin() + 1, ex.target.end() - 1);
        exact += out == want;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {mean < 0.1 && exact == set.size() && cks.back().step <= 300 && secs <= 300.0,
            "mean NLL " + fmt(mean) + " after " + std::to_string(cks.back().step) + " updates; greedy exact " +
                std::to_string(exact) + "/" + std::to_string(set.size()) + "; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// AC4

Outcome ac4_rouge() {
    Rng rng(4);
    const std::vector<std::string> alphabet{"a", "b", "c", "d"};
    double worst = 0.0;
    auto random_tokens = [&] {
        std::vector<std::string> t(rng.index(9));
        for (auto& s : t) s = alphabet[rng.index(alphabet.size())];
        return t;
    };
    auto diff = [&](const evaluation::RougeScore& got, const oracle::Prf& want) {
        worst = std::max({worst, std::abs(got.precision - want.p), std::abs(got.recall - want.r),
                          std::abs(got.f1 - want.f)});
    };
    for (int i = 0; i < 1000; ++i) {
        const auto c = random_tokens(), r = random_tokens();
        diff(evaluation::rouge_n(c, r, 1), oracle::rouge_n(c, r, 1));
        diff(evaluation::rouge_n(c, r, 2), oracle::rouge_n(c, r, 2));
        diff(evaluation::rouge_l(c, r), oracle::rouge_l(c, r));
    }
    const std::vector<std::string> sat{"the", "cat", "sat"}, ran{"the", "cat", "ran"};
    const bool hand = std::abs(evaluation::rouge_n(sat, ran, 1).f1 - 2.0 / 3.0) < 1e-12 &&
                      std::abs(evaluation::rouge_n(sat, ran, 2).f1 - 0.5) < 1e-12 &&
                      std::abs(evaluation::rouge_l(sat, ran).f1 - 2.0 / 3.0) < 1e-12;
    return {worst <= 1e-9 && hand, "1000 random pairs, max deviation " + fmt(worst) + "; hand fixtures " +
                                       (hand ? "ok" : "wrong")};
}

// ---------------------------------------------------------------------------
// AC5

Outcome ac5_lexicon() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };
    const auto lex = lexicon::preprocess_terms(
        {{"Depression, Anxiety", "Panic attacks (Panic disorder)", "anxiety", "ANXIETY",
          "Generalized anxiety disorder with panic attacks", "Self harm"}});
    // Rule 1: comma split.
    expect(lex.contains("Depression") && lex.contains("Anxiety"), "comma split");
    // Rule 2: "A (B)" yields A and B.
    expect(lex.contains("Panic attacks") && lex.contains("Panic disorder"), "parenthesis split");
    // Rule 3: case-folded duplicates removed, first casing kept.
    expect(std::count(lex.terms().begin(), lex.terms().end(), "Anxiety") == 1 && lex.size() == 5, "dedup");
    expect(*lex.canonical("anxiety") == "Anxiety", "first casing kept");
    // Rule 4: more than three words dropped.
    expect(!lex.contains("Generalized anxiety disorder with panic attacks"), "length rule");
    expect(lex.contains("Self harm"), "short term kept");

    const auto file = lexicon::preprocess_terms(lexicon::read_terminology_csv(kFixtures / "terminology.csv"));
    expect(file.contains("Autism spectrum disorder") && file.contains("Autism"), "fixture parenthesis");
    expect(!file.contains("Generalized anxiety disorder with panic attacks"), "fixture length rule");

    // Idempotence: preprocessing its own output changes nothing.
    Rng rng(5);
    const std::vector<std::string> words{"anxiety", "Panic", "attack", "sleep", "CBT", "disorder", "low", "mood"};
    std::size_t broken = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        lexicon::RawTermList raw;
        for (std::size_t e = 0, n = 1 + rng.index(6); e < n; ++e) {
            std::string entry;
            const std::size_t parts = 1 + rng.index(5);
            for (std::size_t p = 0; p < parts; ++p) {
                if (p) entry += rng.index(5) == 0 ? ", " : " ";
                if (rng.index(6) == 0) entry += "(";
                entry += words[rng.index(words.size())];
                if (rng.index(6) == 0) entry += ")";
            }
            raw.entries.push_back(entry);
        }
        const auto once = lexicon::preprocess_terms(raw);
        const auto twice = lexicon::preprocess_terms({once.terms()});
        if (twice.terms() != once.terms()) ++broken;
    }
    expect(broken == 0, "idempotence (" + std::to_string(broken) + " trials)");
    std::string detail = failures.empty() ? "four rules on fixtures; 10000 idempotence trials" : "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// AC6

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome ac6_corruption() {
    std::vector<corpus::CorpusRecord> all;
    std::map<std::string, std::string> documents;
    for (auto s : {corpus::Split::train, corpus::Split::validation, corpus::Split::test})
        for (auto& r : fixture_split(s)) {
            documents[r.id] = r.document;
            all.push_back(std::move(r));
        }
    const auto split = corruption::build_corruption_split(all, 11);
    std::size_t violations = 0;
    std::map<corruption::SpanKind, std::size_t> kinds;
    std::string first;
    for (const auto& r : split.records) {
        const auto id = r.id.substr(0, r.id.find('#'));
        ++kinds[r.kind];
        if (auto why = corruption::check_record(r, documents.at(id))) {
            ++violations;
            if (first.empty()) first = r.id + ": " + *why;
        }
    }

    fs::create_directories(kWork);
    auto write = [&](const corruption::CorruptionSplit& s, const std::string& tag) {
        corruption::write_corrector_set(kWork / ("ac6_corrector_" + tag + ".jsonl"), s.corrector);
        corruption::write_classifier_set(kWork / ("ac6_classifier_" + tag + ".jsonl"), s.classifier);
        return slurp(kWork / ("ac6_corrector_" + tag + ".jsonl")) + slurp(kWork / ("ac6_classifier_" + tag + ".jsonl"));
    };
    const bool same = write(split, "a") == write(corruption::build_corruption_split(all, 11), "b");
    const bool all_kinds = kinds.size() == 4;
    // Per-record seeds: processing order must not change what is emitted.
    auto reversed = all;
    std::reverse(reversed.begin(), reversed.end());
    auto keyed = [](const corruption::CorruptionSplit& s) {
        std::set<std::string> out;
        for (const auto& r : s.records) out.insert(r.id + "\t" + r.corrupted);
        return out;
    };
    const bool order_free = keyed(split) == keyed(corruption::build_corruption_split(reversed, 11));
    std::string detail = std::to_string(split.records.size()) + " records, " + std::to_string(violations) +
                         " violations; kinds entity/number/date/pronoun " +
                         std::to_string(kinds[corruption::SpanKind::entity]) + "/" +
                         std::to_string(kinds[corruption::SpanKind::number]) + "/" +
                         std::to_string(kinds[corruption::SpanKind::date]) + "/" +
                         std::to_string(kinds[corruption::SpanKind::pronoun]) + "; byte-deterministic " +
                         (same ? "yes" : "no") + "; order-independent " + (order_free ? "yes" : "no");
    if (!first.empty()) detail += "; first: " + first;
    return {violations == 0 && same && order_free && all_kinds && !split.records.empty(), detail};
}

// ---------------------------------------------------------------------------
// AC7 and AC8 share the trained corrector and its outputs.

struct CorrectionCase {
    std::string id;
    std::string corrupted;
    std::string clean;
    std::string document;
    std::string corrected;
};

struct CorrectionRun {
    std::vector<CorrectionCase> cases;
    std::string error;
    bool done = false;
};

CorrectionRun& correction_run() {
    static CorrectionRun run;
    return run;
}

model::ModelConfig fixture_model(std::size_t vocab_size) {
    model::ModelConfig mc;
    mc.layers = 2;
    mc.shared_bottom_layers = 1;
    mc.model_dim = 32;
    mc.heads = 4;
    mc.ffn_dim = 64;
    mc.max_len = 160;
    mc.vocab_size = vocab_size;
    return mc;
}

const char* kPronounId = "hw1#leaving";
constexpr std::size_t kCorrectorEpochs = 40;
constexpr std::size_t kClassifierEpochs = 200;

// Trains the corrector on the fixture's synthetic set plus the "leaving me" pronoun
// pair, then corrects 20 held-in corruptions.
void run_correction() {
    auto& run = correction_run();
    if (run.done) return;
    run.done = true;
    const auto train = fixture_split(corpus::Split::train);
    const auto vocab = corpus::build_vocabulary(train, 1, 0);
    auto set = corruption::build_corruption_split(train, 1).corrector;
    const auto* hw1 = &train.front();
    for (const auto& r : train)
        if (r.id == "hw1") hw1 = &r;
    const std::string clean = *hw1->summary;
    const auto at = clean.rfind("leaving him");
    if (at == std::string::npos) throw std::runtime_error("fixture hw1 lost its pronoun summary");
    std::string corrupted = clean;
    corrupted.replace(at, std::string("leaving him").size(), "leaving me");
    set.push_back({kPronounId, corrupted, hw1->document, clean, corruption::SpanKind::pronoun});

    const auto mc = fixture_model(vocab.size());
    std::vector<training::Example> examples;
    for (const auto& e : set)
        examples.push_back({e.id,
                            model::corrector_input(corpus::encode_text(e.input_summary, vocab, mc.max_len),
                                                   corpus::encode_text(e.document, vocab, mc.max_len), mc.max_len),
                            {},
                            target_of(e.target_summary, vocab, mc.max_len)});

    // Held-in: the pronoun pair and 19 others spread over the set.
    std::vector<std::size_t> held{set.size() - 1};
    for (std::size_t i = 0; held.size() < 20; ++i) held.push_back(i * (set.size() - 1) / 19);

    model::Seq2SeqModel m(mc);
    Rng rng(2);
    m.parameters().initialize(rng);
    auto cfg = training::TrainConfig::defaults(training::Profile::desk, training::ModelKind::corrector);
    cfg.epochs = kCorrectorEpochs;
    cfg.update_freq = 1;
    cfg.validation_decode = {1, 1, 60, 1.0, true};
    std::vector<training::Example> probe{examples[held[0]], examples[held[1]]};
    const auto cks = training::train(training::Trainable::seq2seq(m), examples, probe, cfg);
    spdlog::info("AC7: corrector trained for {} updates, probe ROUGE-L {:.3f}", cks.back().step, cks.back().metric);

    const decoding::DecodeConfig dc{4, 1, 60, 1.0, true};
    for (auto i : held) {
        const auto& e = set[i];
        run.cases.push_back({e.id, e.input_summary, e.target_summary, e.document,
                             decoding::correct_summary(m, e.input_summary, e.document, dc, vocab)});
    }
}

// Token positions where a and b differ, as [prefix, size - suffix) on each side.
std::pair<std::size_t, std::size_t> common_affixes(const std::vector<std::string>& a,
                                                   const std::vector<std::string>& b) {
    std::size_t p = 0;
    while (p < a.size() && p < b.size() && a[p] == b[p]) ++p;
    std::size_t s = 0;
    while (s < a.size() - p && s < b.size() - p && a[a.size() - 1 - s] == b[b.size() - 1 - s]) ++s;
    return {p, s};
}

Outcome ac7_correction() {
    const auto start = std::chrono::steady_clock::now();
    run_correction();
    const auto& run = correction_run();
    std::size_t restored = 0, overreach = 0;
    bool pronoun_case = false;
    for (const auto& c : run.cases) {
        const auto got = corpus::tokenize(c.corrected), want = corpus::tokenize(c.clean);
        const auto input = corpus::tokenize(c.corrupted);
        if (std::getenv("GSLB_ACCEPTANCE_VERBOSE"))
            std::fprintf(stderr, "%s\n  in:  %s\n  out: %s\n  ref: %s\n", c.id.c_str(), c.corrupted.c_str(),
                         c.corrected.c_str(), c.clean.c_str());
        if (got != want) continue;
        ++restored;
        if (c.id == kPronounId) pronoun_case = true;
        // The edit must sit inside the span where input and clean differ.
        const auto [p_clean, s_clean] = common_affixes(input, want);
        const auto [p_got, s_got] = common_affixes(input, got);
        if (p_got < p_clean || s_got < s_clean) ++overreach;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = restored * 5 >= run.cases.size() * 4 && run.cases.size() == 20 && pronoun_case &&
                      overreach == 0 && secs <= 600.0;
    return {pass, "restored " + std::to_string(restored) + "/" + std::to_string(run.cases.size()) +
                      "; \"leaving me\" case " + (pronoun_case ? "restored" : "not restored") + "; over-edits " +
                      std::to_string(overreach) + "; " + fmt(secs, 3) + " s"};
}

Outcome ac8_consistency() {
    run_correction();
    const auto& run = correction_run();
    const auto train = fixture_split(corpus::Split::train);
    const auto vocab = corpus::build_vocabulary(train, 1, 0);
    const auto set = corruption::build_corruption_split(train, 1).classifier;
    const auto mc = fixture_model(vocab.size());
    std::vector<training::Example> examples;
    for (const auto& e : set)
        examples.push_back({e.id,
                            model::classifier_input(corpus::encode_text(e.claim, vocab, mc.max_len),
                                                    corpus::encode_text(e.document, vocab, mc.max_len), mc.max_len),
                            {},
                            {},
                            e.label == corruption::Label::correct ? model::kCorrectClass : model::kIncorrectClass});
    model::ConsistencyClassifier m(mc);
    Rng rng(3);
    m.parameters().initialize(rng);
    auto cfg = training::TrainConfig::defaults(training::Profile::desk, training::ModelKind::classifier);
    cfg.epochs = kClassifierEpochs;
    // At 1e-3 the classifier stalls near the class prior.
    cfg.lr = 3e-4;
    cfg.update_freq = 1;
    std::vector<training::Example> probe(examples.begin(), examples.begin() + 4);
    training::train(training::Trainable::classifier(m), examples, probe, cfg);

    auto p_correct = [&](const std::string& claim, const std::string& doc) {
        return model::classify_consistency(m, corpus::encode_text(claim, vocab, mc.max_len),
                                           corpus::encode_text(doc, vocab, mc.max_len));
    };
    std::size_t right = 0;
    for (const auto& e : set) right += (p_correct(e.claim, e.document) >= 0.5) == (e.label == corruption::Label::correct);
    const double accuracy = static_cast<double>(right) / static_cast<double>(set.size());

    double before = 0.0, after = 0.0;
    for (const auto& c : run.cases) {
        before += p_correct(c.corrupted, c.document);
        after += p_correct(c.corrected, c.document);
    }
    const double n = static_cast<double>(std::max<std::size_t>(run.cases.size(), 1));
    before /= n;
    after /= n;
    return {accuracy >= 0.95 && after >= before && !run.cases.empty(),
            "training accuracy " + fmt(accuracy) + " on " + std::to_string(set.size()) +
                " pairs; mean P(CORRECT) corrupted " + fmt(before) + " -> corrected " + fmt(after)};
}

// ---------------------------------------------------------------------------
// AC9

bool repeated_trigram(const TokenSequence& s) {
    std::set<std::tuple<int, int, int>> seen;
    for (std::size_t i = 0; i + 2 < s.size(); ++i)
        if (!seen.insert({s[i], s[i + 1], s[i + 2]}).second) return true;
    return false;
}

Outcome ac9_decoding() {
    Rng rng(9);
    std::size_t mismatches = 0, bound_errors = 0, repeats = 0, decodes = 0;
    auto tiny = [&](std::size_t vocab, std::size_t max_len) {
        model::ModelConfig mc;
        mc.layers = 1;
        mc.shared_bottom_layers = 1;
        mc.model_dim = 8;
        mc.heads = 2;
        mc.ffn_dim = 16;
        mc.max_len = max_len;
        mc.vocab_size = vocab;
        return mc;
    };
    auto random_source = [&](std::size_t vocab) {
        TokenSequence src;
        for (std::size_t i = 0, n = 1 + rng.index(8); i < n; ++i)
            src.push_back(static_cast<corpus::TokenId>(5 + rng.index(vocab - 5)));
        return src;
    };
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t vocab = 8 + rng.index(12);
        model::Seq2SeqModel m(tiny(vocab, 40));
        m.parameters().initialize(rng);
        const auto src = random_source(vocab);
        const auto step = decoding::seq2seq_step(m, src);
        const decoding::DecodeConfig one{1, 2, 30, 1.0, true};
        mismatches += decoding::beam_search(step, one, vocab) != decoding::greedy_decode(step, one, vocab);
        for (int d = 0; d < 10; ++d) {
            const decoding::DecodeConfig cfg{1 + rng.index(4), 2, 30, 1.0, true};
            const auto out = decoding::beam_search(decoding::seq2seq_step(m, random_source(vocab)), cfg, vocab);
            ++decodes;
            bound_errors += out.size() < 2 || out.size() > 30;
            repeats += repeated_trigram(out);
        }
    }
    // Full-scale defaults: beam 6, length 15 to 200.
    for (int trial = 0; trial < 3; ++trial) {
        const std::size_t vocab = 400;
        model::Seq2SeqModel m(tiny(vocab, 210));
        m.parameters().initialize(rng);
        const auto out = decoding::beam_search(decoding::seq2seq_step(m, random_source(vocab)), decoding::DecodeConfig{},
                                               vocab);
        bound_errors += out.size() < 15 || out.size() > 200;
        repeats += repeated_trigram(out);
    }
    return {mismatches == 0 && bound_errors == 0 && repeats == 0,
            "beam 1 vs greedy mismatches " + std::to_string(mismatches) + "/100; " + std::to_string(decodes) +
                " fuzzed decodes + 3 at 15/200: bound errors " + std::to_string(bound_errors) +
                ", repeated trigrams " + std::to_string(repeats)};
}

// ---------------------------------------------------------------------------
// AC10

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    return out;
}

Outcome ac10_determinism() {
    const auto dir = kWork / "ac10";
    fs::create_directories(dir);
    std::string toml = slurp(kFixtures / "pipeline.toml");
    auto set_path = [&](const std::string& key, const std::string& value) {
        const auto at = toml.find(key + " = ");
        const auto end = toml.find('\n', at);
        toml.replace(at, end - at, key + " = \"" + value + "\"");
    };
    set_path("corpus_dir", (kFixtures / "corpus").string());
    set_path("terminology", (kFixtures / "terminology.csv").string());
    set_path("output_dir", (dir / "out").string());
    {
        std::ofstream out(dir / "run.toml", std::ios::trunc);
        out << toml;
    }
    unsetenv("GSLB_SEED");
    auto run_once = [&] {
        fs::remove_all(dir / "out");
        const std::string cmd = "\"" + kCli.string() + "\" --quiet --config \"" + (dir / "run.toml").string() +
                                "\" pipeline > \"" + (dir / "stdout.txt").string() + "\"";
        if (std::system(cmd.c_str()) != 0) throw std::runtime_error("pipeline command failed: " + cmd);
        return tree_bytes(dir / "out");
    };
    const auto first = run_once();
    const auto second = run_once();
    std::size_t differing = 0;
    std::string example;
    for (const auto& [name, bytes] : first) {
        auto it = second.find(name);
        if (it == second.end() || it->second != bytes) {
            ++differing;
            if (example.empty()) example = name;
        }
    }
    differing += second.size() > first.size() ? second.size() - first.size() : 0;
    const auto report = nlohmann::json::parse(first.at("report.json"));
    const bool both_rows = report.at("reports").size() == 2;
    return {differing == 0 && both_rows && first.size() > 10,
            std::to_string(first.size()) + " artifacts compared, " + std::to_string(differing) + " differ" +
                (example.empty() ? "" : " (e.g. " + example + ")") + "; report rows before/after correction: " +
                (both_rows ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// AC11

std::size_t multiset_new(const std::vector<std::string>& cand, const std::vector<std::string>& corr) {
    std::map<std::string, int> have;
    for (const auto& t : cand) ++have[t];
    std::size_t n = 0;
    for (const auto& t : corr)
        if (have[t]-- <= 0) ++n;
    return n;
}

Outcome ac11_diagnostics() {
    // Four planted corrections among 40 candidates.
    const std::vector<std::pair<std::string, std::string>> planted{
        {"stopped taking it after 18 months and then took it again for about 6 - 8 months .",
         "stopped taking it after 18 months and then took it again for about 18 months ."},
        {"my father is depressed and suicidal , my mother is leaving me .",
         "my father is depressed and suicidal , my mother is leaving him ."},
        {"CBT is a great way to start . do n't be afraid to journal .",
         "Guidance is a great way to start . do n't be afraid to journal ."},
        {"I 've been in and out of mental institutions for 10 years .",
         "I 've been in and out of mental institutions for years ."},
    };
    std::vector<evaluation::IdText> cand, corr;
    std::vector<std::size_t> expected;
    for (int i = 0; i < 40; ++i) {
        const std::string id = "c" + std::to_string(i);
        if (i % 10 == 3) {
            const auto& [a, b] = planted[static_cast<std::size_t>(i / 10)];
            cand.push_back({id, a});
            corr.push_back({id, b});
            expected.push_back(multiset_new(corpus::tokenize(a), corpus::tokenize(b)));
        } else {
            const std::string text = "summary number " + std::to_string(i) + " stays as it was .";
            cand.push_back({id, text});
            corr.push_back({id, text});
        }
    }
    const auto d = evaluation::correction_diagnostics(cand, corr);
    const std::vector<std::size_t> hand{1, 1, 1, 0};
    const bool pass = d.revised_fraction == 0.10 && d.revised == 4 && d.new_token_counts == expected &&
                      expected == hand && d.at_most_three_new_fraction == 1.0;
    std::string counts;
    for (auto c : d.new_token_counts) counts += (counts.empty() ? "" : ",") + std::to_string(c);
    return {pass, "revised_fraction " + fmt(d.revised_fraction, 17) + "; new-token counts {" + counts + "}"};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>> criteria{
        {"AC1", {"gradient correctness", ac1_gradients}},
        {"AC2", {"architecture signature", ac2_architecture}},
        {"AC3", {"overfit 8-pair fixture", ac3_overfit}},
        {"AC4", {"ROUGE oracle equivalence", ac4_rouge}},
        {"AC5", {"lexicon rules", ac5_lexicon}},
        {"AC6", {"corruption soundness", ac6_corruption}},
        {"AC7", {"correction round trip", ac7_correction}},
        {"AC8", {"consistency direction of effect", ac8_consistency}},
        {"AC9", {"decoding contracts", ac9_decoding}},
        {"AC10", {"pipeline determinism", ac10_determinism}},
        {"AC11", {"correction diagnostics", ac11_diagnostics}},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& [id, entry] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = entry.second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s (%s)\n", id.c_str(), o.pass ? "PASS" : "FAIL", entry.first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
