#include "gslb/guidance.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "gslb/evaluation.hpp"

namespace gslb::guidance {

namespace {

bool is_space(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::isspace(u);
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Gains below this are rounding noise, not improvement.
constexpr double kImprovementTolerance = 1e-12;

std::vector<std::string> join_tokens(const SentenceList& sentences,
                                     const std::vector<std::size_t>& chosen) {
    std::vector<std::size_t> order(chosen);
    std::sort(order.begin(), order.end());
    std::vector<std::string> tokens;
    for (auto i : order) {
        auto t = corpus::tokenize(sentences[i].text);
        tokens.insert(tokens.end(), t.begin(), t.end());
    }
    return tokens;
}

}  // namespace

std::string to_string(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::none:
            return "none";
        case GuidanceKind::terms:
            return "terms";
        case GuidanceKind::sentences:
            return "sentences";
        case GuidanceKind::oracle:
            return "oracle";
    }
    return "?";
}

GuidanceKind parse_kind(std::string_view s) {
    if (s == "none") return GuidanceKind::none;
    if (s == "terms") return GuidanceKind::terms;
    if (s == "sentences") return GuidanceKind::sentences;
    if (s == "oracle") return GuidanceKind::oracle;
    throw std::invalid_argument("unknown guidance kind '" + std::string(s) +
                                "' (expected none, terms, sentences or oracle)");
}

SentenceList segment_sentences(std::string_view document) {
    SentenceList out;
    std::size_t i = 0;
    const std::size_t n = document.size();
    while (i < n) {
        while (i < n && is_space(document[i])) ++i;
        if (i == n) break;
        const std::size_t begin = i;
        std::size_t end = n;
        for (std::size_t j = i; j < n; ++j)
            if (is_terminator(document[j]) && (j + 1 == n || is_space(document[j + 1]))) {
                end = j + 1;
                break;
            }
        std::size_t trimmed = end;
        while (trimmed > begin && is_space(document[trimmed - 1])) --trimmed;
        out.push_back({std::string(document.substr(begin, trimmed - begin)), begin, trimmed});
        i = end;
    }
    return out;
}

GuidanceSignal extract_term_guidance(std::string_view document,
                                     const lexicon::TermMatcher& matcher) {
    GuidanceSignal g{GuidanceKind::terms, {}, {}};
    std::set<std::string> seen;
    for (const auto& m : matcher.find_matches(document))
        if (seen.insert(lexicon::fold_case(m.term)).second) g.items.push_back(m.term);
    return g;
}

GuidanceSignal extract_sentence_guidance(std::string_view document,
                                         const lexicon::TermMatcher& matcher) {
    GuidanceSignal g{GuidanceKind::sentences, {}, {}};
    const auto matches = matcher.find_matches(document);
    std::set<std::string> seen;
    for (const auto& s : segment_sentences(document)) {
        const bool hit = std::any_of(matches.begin(), matches.end(), [&](const auto& m) {
            return m.begin >= s.begin && m.begin < s.end;
        });
        if (hit && seen.insert(s.text).second) g.items.push_back(s.text);
    }
    return g;
}

double oracle_objective(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference) {
    return 0.5 * (evaluation::rouge_n(candidate, reference, 1).f1 +
                  evaluation::rouge_n(candidate, reference, 2).f1);
}

GuidanceSignal extract_oracle_sentences(std::string_view document, std::string_view reference,
                                        std::size_t max_sentences,
                                        std::vector<double>* score_trace) {
    GuidanceSignal g{GuidanceKind::oracle, {}, {}};
    const auto sentences = segment_sentences(document);
    const auto ref = corpus::tokenize(reference);
    std::vector<std::size_t> chosen;
    std::set<std::string> chosen_text;
    double current = 0.0;
    if (score_trace) score_trace->assign(1, 0.0);
    while (chosen.size() < max_sentences) {
        double best = current;
        std::size_t best_index = sentences.size();
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            if (chosen_text.count(sentences[i].text)) continue;
            auto trial = chosen;
            trial.push_back(i);
            const double score = oracle_objective(join_tokens(sentences, trial), ref);
            if (score > best + kImprovementTolerance) {
                best = score;
                best_index = i;
            }
        }
        if (best_index == sentences.size()) break;
        chosen.push_back(best_index);
        chosen_text.insert(sentences[best_index].text);
        g.items.push_back(sentences[best_index].text);
        current = best;
        if (score_trace) score_trace->push_back(current);
    }
    return g;
}

corpus::TokenSequence render_guidance(const GuidanceSignal& signal, const corpus::Vocabulary& vocab,
                                      std::size_t max_len) {
    corpus::TokenSequence ids;
    if (signal.kind == GuidanceKind::terms) {
        for (std::size_t i = 0; i < signal.items.size(); ++i) {
            if (i) ids.push_back(corpus::Vocabulary::sep);
            auto part = corpus::encode_text(signal.items[i], vocab, max_len);
            ids.insert(ids.end(), part.begin(), part.end());
        }
    } else if (signal.kind != GuidanceKind::none) {
        std::string joined;
        for (const auto& s : signal.items) {
            if (!joined.empty()) joined.push_back(' ');
            joined += s;
        }
        ids = corpus::encode_text(joined, vocab, max_len);
    }
    if (ids.size() > max_len) ids.resize(max_len);
    if (ids.empty()) ids.push_back(corpus::Vocabulary::sep);
    return ids;
}

void write_guidance_cache(const std::filesystem::path& path,
                          const std::vector<GuidanceSignal>& signals) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write guidance cache " + path.string());
    for (const auto& g : signals) {
        nlohmann::ordered_json j;
        j["id"] = g.source_id;
        j["kind"] = to_string(g.kind);
        j["items"] = g.items;
        out << j.dump() << '\n';
    }
}

std::vector<GuidanceSignal> read_guidance_cache(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read guidance cache " + path.string());
    std::vector<GuidanceSignal> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({parse_kind(j.at("kind").get<std::string>()),
                           j.at("items").get<std::vector<std::string>>(),
                           j.at("id").get<std::string>()});
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace gslb::guidance
