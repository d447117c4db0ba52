#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gslb/corpus.hpp"
#include "gslb/lexicon.hpp"

namespace gslb::guidance {

enum class GuidanceKind { none, terms, sentences, oracle };

std::string to_string(GuidanceKind k);
GuidanceKind parse_kind(std::string_view s);

struct GuidanceSignal {
    GuidanceKind kind = GuidanceKind::none;
    std::vector<std::string> items;
    std::string source_id;
};

struct Sentence {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

using SentenceList = std::vector<Sentence>;

/// Splits after ".", "!" or "?" when followed by whitespace or end of text.
/// Spans are trimmed, so together they cover every non-whitespace byte.
SentenceList segment_sentences(std::string_view document);

/// Matched lexicon terms in first-occurrence order, case-folded duplicates
/// removed.
GuidanceSignal extract_term_guidance(std::string_view document, const lexicon::TermMatcher& matcher);

/// Sentences holding at least one term match, in document order.
GuidanceSignal extract_sentence_guidance(std::string_view document,
                                         const lexicon::TermMatcher& matcher);

inline constexpr std::size_t kDefaultOracleSentences = 3;

/// Mean of ROUGE-1 and ROUGE-2 F1 of the candidate against the reference.
double oracle_objective(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference);

/// Greedy selection maximizing oracle_objective over the concatenation (in
/// document order) of the chosen sentences. Stops when no sentence strictly
/// improves the score. Items are listed in selection order.
GuidanceSignal extract_oracle_sentences(std::string_view document, std::string_view reference,
                                        std::size_t max_sentences = kDefaultOracleSentences,
                                        std::vector<double>* score_trace = nullptr);

/// Terms are joined with [SEP]; sentences with a space. Never empty: missing
/// guidance renders as a single [SEP].
corpus::TokenSequence render_guidance(const GuidanceSignal& signal, const corpus::Vocabulary& vocab,
                                      std::size_t max_len = corpus::kDefaultMaxLen);

/// JSON Lines with id, kind, items.
void write_guidance_cache(const std::filesystem::path& path,
                          const std::vector<GuidanceSignal>& signals);
std::vector<GuidanceSignal> read_guidance_cache(const std::filesystem::path& path);

}  // namespace gslb::guidance
