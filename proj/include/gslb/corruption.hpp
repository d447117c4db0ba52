#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gslb/corpus.hpp"

namespace gslb::corruption {

enum class SpanKind { entity, number, date, pronoun };
inline constexpr std::array<SpanKind, 4> kAllKinds = {SpanKind::entity, SpanKind::number,
                                                      SpanKind::date, SpanKind::pronoun};

std::string to_string(SpanKind k);
SpanKind parse_span_kind(std::string_view s);

enum class PronounClass { subject, object, possessive_dependent, possessive_independent, reflexive };

std::string to_string(PronounClass c);
/// Members of a closed pronoun class, lowercase.
const std::vector<std::string>& pronoun_class_members(PronounClass c);
/// First class (in declaration order) listing the word, case-insensitively.
std::optional<PronounClass> pronoun_class_of(std::string_view word);

enum class Source { document, summary };

struct TypedSpan {
    SpanKind kind = SpanKind::entity;
    std::string surface;
    std::size_t begin = 0;
    std::size_t end = 0;
    Source source = Source::summary;
    std::optional<PronounClass> pronoun_class;
};

/// Rule-based spans, non-overlapping under priority date > number > entity >
/// pronoun, sorted by start offset.
std::vector<TypedSpan> extract_typed_spans(std::string_view text, Source source = Source::summary);

enum class Label { correct, incorrect };
std::string to_string(Label l);
Label parse_label(std::string_view s);

struct CorruptionRecord {
    std::string id;
    std::string clean;
    std::string corrupted;
    SpanKind kind = SpanKind::entity;
    TypedSpan replaced;
    std::string replacement;
    Label label = Label::incorrect;
};

/// One same-kind swap in the summary, or nullopt when no span of `kind` has
/// a valid replacement. Entity, number and date replacements come from the
/// document's spans; pronouns stay inside their case class.
std::optional<CorruptionRecord> apply_swap(std::string_view summary, SpanKind kind,
                                           const std::vector<TypedSpan>& summary_spans,
                                           const std::vector<TypedSpan>& document_spans,
                                           std::uint64_t seed);

struct CorrectorExample {
    std::string id;
    std::string input_summary;
    std::string document;
    std::string target_summary;
    SpanKind swap_kind = SpanKind::entity;
};

struct ClassifierExample {
    std::string id;
    std::string claim;
    std::string document;
    Label label = Label::correct;
};

struct CorruptionSplit {
    std::vector<CorrectorExample> corrector;
    std::vector<ClassifierExample> classifier;
    std::vector<CorruptionRecord> records;
};

struct CorruptionDataset {
    CorruptionSplit train;
    CorruptionSplit validation;
};

/// Per-record seed: the run seed mixed with a stable hash of the record id,
/// so output does not depend on processing order.
std::uint64_t record_seed(std::uint64_t seed, std::string_view record_id, SpanKind kind);

CorruptionSplit build_corruption_split(const std::vector<corpus::CorpusRecord>& records,
                                       std::uint64_t seed);
CorruptionDataset build_corruption_dataset(const corpus::Dataset& dataset, std::uint64_t seed);

/// JSON Lines {id, input_summary, document, target_summary, swap_kind}.
void write_corrector_set(const std::filesystem::path& path, const std::vector<CorrectorExample>& set);
std::vector<CorrectorExample> read_corrector_set(const std::filesystem::path& path);
/// JSON Lines {id, claim, document, label}.
void write_classifier_set(const std::filesystem::path& path,
                          const std::vector<ClassifierExample>& set);
std::vector<ClassifierExample> read_classifier_set(const std::filesystem::path& path);

/// Checks a record against its type invariants; returns the first violation.
std::optional<std::string> check_record(const CorruptionRecord& record, std::string_view document);

}  // namespace gslb::corruption
