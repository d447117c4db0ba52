#include "gslb/corruption.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "gslb/rng.hpp"

namespace gslb::corruption {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_word(char c) { return is_alpha(c) || is_digit(c) || static_cast<unsigned char>(c) >= 0x80; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
    return out;
}

const std::vector<std::string> kMonths = {"January", "February", "March",     "April",
                                          "May",     "June",     "July",      "August",
                                          "September", "October", "November", "December"};
const std::vector<std::string> kWeekdays = {"Monday", "Tuesday",  "Wednesday", "Thursday",
                                            "Friday", "Saturday", "Sunday"};
const std::vector<std::string> kUnits = {"day", "week", "month", "year"};

const std::map<PronounClass, std::vector<std::string>> kPronouns = {
    {PronounClass::subject, {"i", "you", "he", "she", "it", "we", "they"}},
    {PronounClass::object, {"me", "you", "him", "her", "it", "us", "them"}},
    {PronounClass::possessive_dependent, {"my", "your", "his", "her", "its", "our", "their"}},
    {PronounClass::possessive_independent, {"mine", "yours", "his", "hers", "its", "ours", "theirs"}},
    {PronounClass::reflexive,
     {"myself", "yourself", "himself", "herself", "itself", "ourselves", "yourselves",
      "themselves"}},
};

struct Word {
    std::size_t begin;
    std::size_t end;
};

// Word-character runs, allowing internal apostrophes ("I'm", "don't").
std::vector<Word> words_of(std::string_view t) {
    std::vector<Word> out;
    std::size_t i = 0;
    while (i < t.size()) {
        if (!is_word(t[i])) {
            ++i;
            continue;
        }
        const std::size_t b = i;
        while (i < t.size()) {
            if (is_word(t[i])) {
                ++i;
            } else if (t[i] == '\'' && i + 1 < t.size() && is_alpha(t[i + 1]) && i > b) {
                ++i;
            } else {
                break;
            }
        }
        out.push_back({b, i});
    }
    return out;
}

bool boundary_before(std::string_view t, std::size_t i) { return i == 0 || !is_word(t[i - 1]); }
bool boundary_after(std::string_view t, std::size_t i) { return i >= t.size() || !is_word(t[i]); }

// \d+(\.\d+)? starting at i; returns end or npos.
std::size_t scan_decimal(std::string_view t, std::size_t i) {
    if (i >= t.size() || !is_digit(t[i])) return std::string_view::npos;
    while (i < t.size() && is_digit(t[i])) ++i;
    if (i + 1 < t.size() && t[i] == '.' && is_digit(t[i + 1])) {
        ++i;
        while (i < t.size() && is_digit(t[i])) ++i;
    }
    return i;
}

// Number with an optional "- N" range tail.
std::size_t scan_number(std::string_view t, std::size_t i) {
    std::size_t end = scan_decimal(t, i);
    if (end == std::string_view::npos) return end;
    std::size_t j = end;
    while (j < t.size() && t[j] == ' ') ++j;
    if (j < t.size() && t[j] == '-') {
        ++j;
        while (j < t.size() && t[j] == ' ') ++j;
        const std::size_t tail = scan_decimal(t, j);
        if (tail != std::string_view::npos) end = tail;
    }
    return end;
}

std::size_t scan_digits(std::string_view t, std::size_t i, std::size_t lo, std::size_t hi) {
    std::size_t j = i;
    while (j < t.size() && is_digit(t[j]) && j - i < hi) ++j;
    if (j - i < lo) return std::string_view::npos;
    return j;
}

// d{1,2}/d{1,2}(/d{2,4})?
std::size_t scan_numeric_date(std::string_view t, std::size_t i) {
    std::size_t j = scan_digits(t, i, 1, 2);
    if (j == std::string_view::npos || j >= t.size() || t[j] != '/') return std::string_view::npos;
    j = scan_digits(t, j + 1, 1, 2);
    if (j == std::string_view::npos) return j;
    if (j < t.size() && t[j] == '/') {
        const std::size_t y = scan_digits(t, j + 1, 2, 4);
        if (y != std::string_view::npos && boundary_after(t, y)) return y;
    }
    return boundary_after(t, j) ? j : std::string_view::npos;
}

// "(day|week|month|year)s?" as a whole word starting at i.
std::size_t scan_unit(std::string_view t, std::size_t i) {
    for (const auto& u : kUnits) {
        if (t.size() - i < u.size() || lower(t.substr(i, u.size())) != u) continue;
        std::size_t j = i + u.size();
        if (j < t.size() && (t[j] == 's' || t[j] == 'S')) ++j;
        if (boundary_after(t, j)) return j;
    }
    return std::string_view::npos;
}

// Month name with optional day ("March 3rd") and year (", 2020").
std::size_t extend_month(std::string_view t, std::size_t end) {
    std::size_t j = end;
    while (j < t.size() && t[j] == ' ') ++j;
    std::size_t d = scan_digits(t, j, 1, 2);
    if (d != std::string_view::npos) {
        std::size_t k = d;
        for (std::string_view suf : {"st", "nd", "rd", "th"})
            if (t.substr(k, 2) == suf) k += 2;
        if (boundary_after(t, k)) end = k;
    }
    j = end;
    if (j < t.size() && t[j] == ',') ++j;
    while (j < t.size() && t[j] == ' ') ++j;
    std::size_t y = scan_digits(t, j, 4, 4);
    if (y != std::string_view::npos && boundary_after(t, y) && j > end) end = y;
    return end;
}

bool contains(const std::vector<std::string>& list, std::string_view w) {
    return std::find(list.begin(), list.end(), w) != list.end();
}

bool all_caps(std::string_view w) {
    std::size_t upper = 0;
    for (char c : w) {
        if (is_lower(c)) return false;
        if (is_upper(c)) ++upper;
    }
    return upper >= 2;
}

bool sentence_start(std::string_view t, std::size_t i) {
    while (i > 0) {
        const char c = t[i - 1];
        if (is_space(c) || c == '"' || c == '(' || c == '\'') {
            --i;
            continue;
        }
        return c == '.' || c == '!' || c == '?';
    }
    return true;
}

bool pronoun_like(std::string_view w) {
    auto base = w.substr(0, w.find('\''));
    return pronoun_class_of(base).has_value();
}

bool overlaps(const std::vector<TypedSpan>& spans, std::size_t b, std::size_t e) {
    return std::any_of(spans.begin(), spans.end(),
                       [&](const TypedSpan& s) { return b < s.end && s.begin < e; });
}

std::string match_case(std::string_view original, std::string replacement) {
    if (replacement == "i") return "I";
    if (!original.empty() && is_upper(original[0]) && original != "I" && !replacement.empty() &&
        is_lower(replacement[0]))
        replacement[0] = static_cast<char>(replacement[0] - 'a' + 'A');
    return replacement;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items,
                 nlohmann::ordered_json (*to_json)(const T&)) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& it : items) out << to_json(it).dump() << '\n';
}

template <typename F>
void read_jsonl(const std::filesystem::path& path, F&& on_object) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            on_object(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

nlohmann::ordered_json corrector_json(const CorrectorExample& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["input_summary"] = e.input_summary;
    j["document"] = e.document;
    j["target_summary"] = e.target_summary;
    j["swap_kind"] = to_string(e.swap_kind);
    return j;
}

nlohmann::ordered_json classifier_json(const ClassifierExample& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["claim"] = e.claim;
    j["document"] = e.document;
    j["label"] = to_string(e.label);
    return j;
}

}  // namespace

std::string to_string(SpanKind k) {
    switch (k) {
        case SpanKind::entity:
            return "entity";
        case SpanKind::number:
            return "number";
        case SpanKind::date:
            return "date";
        case SpanKind::pronoun:
            return "pronoun";
    }
    return "?";
}

SpanKind parse_span_kind(std::string_view s) {
    for (auto k : kAllKinds)
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown swap kind '" + std::string(s) + "'");
}

std::string to_string(PronounClass c) {
    switch (c) {
        case PronounClass::subject:
            return "subject";
        case PronounClass::object:
            return "object";
        case PronounClass::possessive_dependent:
            return "possessive_dependent";
        case PronounClass::possessive_independent:
            return "possessive_independent";
        case PronounClass::reflexive:
            return "reflexive";
    }
    return "?";
}

const std::vector<std::string>& pronoun_class_members(PronounClass c) { return kPronouns.at(c); }

std::optional<PronounClass> pronoun_class_of(std::string_view word) {
    const auto w = lower(word);
    for (const auto& [cls, members] : kPronouns)
        if (contains(members, w)) return cls;
    return std::nullopt;
}

std::string to_string(Label l) { return l == Label::correct ? "CORRECT" : "INCORRECT"; }

Label parse_label(std::string_view s) {
    if (s == "CORRECT") return Label::correct;
    if (s == "INCORRECT") return Label::incorrect;
    throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

std::vector<TypedSpan> extract_typed_spans(std::string_view text, Source source) {
    auto make = [&](SpanKind k, std::size_t b, std::size_t e) {
        return TypedSpan{k, std::string(text.substr(b, e - b)), b, e, source, std::nullopt};
    };
    std::vector<TypedSpan> dates, numbers;

    // Dates and numbers, scanned left to right from word boundaries.
    for (std::size_t i = 0; i < text.size();) {
        if (!boundary_before(text, i) || !is_word(text[i])) {
            ++i;
            continue;
        }
        if (is_digit(text[i])) {
            if (auto e = scan_numeric_date(text, i); e != std::string_view::npos) {
                dates.push_back(make(SpanKind::date, i, e));
                i = e;
                continue;
            }
            const std::size_t num_end = scan_number(text, i);
            std::size_t j = num_end;
            while (j < text.size() && text[j] == ' ') ++j;
            if (auto e = scan_unit(text, j); e != std::string_view::npos) {
                dates.push_back(make(SpanKind::date, i, e));
                i = e;
                continue;
            }
            if (boundary_after(text, num_end)) {
                numbers.push_back(make(SpanKind::number, i, num_end));
                i = num_end;
                continue;
            }
        } else {
            std::size_t e = i;
            while (e < text.size() && is_word(text[e])) ++e;
            const auto w = text.substr(i, e - i);
            if (contains(kMonths, w) || contains(kWeekdays, w)) {
                const std::size_t end = contains(kMonths, w) ? extend_month(text, e) : e;
                dates.push_back(make(SpanKind::date, i, end));
                i = end;
                continue;
            }
        }
        while (i < text.size() && is_word(text[i])) ++i;
    }

    std::vector<TypedSpan> taken = dates;
    taken.insert(taken.end(), numbers.begin(), numbers.end());

    // Entities: capitalized runs not opening a sentence, plus all-caps tokens.
    const auto words = words_of(text);
    std::vector<TypedSpan> entities;
    auto capitalized = [&](const Word& w) {
        const auto s = text.substr(w.begin, w.end - w.begin);
        return is_upper(s[0]) && !pronoun_like(s) && !overlaps(taken, w.begin, w.end);
    };
    for (std::size_t k = 0; k < words.size();) {
        if (!capitalized(words[k])) {
            ++k;
            continue;
        }
        std::size_t last = k;
        while (last + 1 < words.size() && capitalized(words[last + 1]) &&
               words[last + 1].begin == words[last].end + 1 && text[words[last].end] == ' ')
            ++last;
        std::size_t first = k;
        const auto head = text.substr(words[k].begin, words[k].end - words[k].begin);
        if (sentence_start(text, words[k].begin) && !all_caps(head)) ++first;
        if (first <= last) entities.push_back(make(SpanKind::entity, words[first].begin, words[last].end));
        k = last + 1;
    }
    taken.insert(taken.end(), entities.begin(), entities.end());

    std::vector<TypedSpan> pronouns;
    for (const auto& w : words) {
        auto cls = pronoun_class_of(text.substr(w.begin, w.end - w.begin));
        if (!cls || overlaps(taken, w.begin, w.end)) continue;
        auto span = make(SpanKind::pronoun, w.begin, w.end);
        span.pronoun_class = cls;
        pronouns.push_back(std::move(span));
    }

    std::vector<TypedSpan> all = std::move(taken);
    all.insert(all.end(), pronouns.begin(), pronouns.end());
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
    return all;
}

std::optional<CorruptionRecord> apply_swap(std::string_view summary, SpanKind kind,
                                           const std::vector<TypedSpan>& summary_spans,
                                           const std::vector<TypedSpan>& document_spans,
                                           std::uint64_t seed) {
    // Replacement pool: distinct normalized surfaces, in document order.
    std::vector<std::string> pool;
    std::vector<std::string> pool_norm;
    if (kind != SpanKind::pronoun)
        for (const auto& d : document_spans) {
            if (d.kind != kind) continue;
            auto norm = corpus::normalize(d.surface);
            if (std::find(pool_norm.begin(), pool_norm.end(), norm) != pool_norm.end()) continue;
            pool.push_back(d.surface);
            pool_norm.push_back(std::move(norm));
        }

    struct Option {
        const TypedSpan* span;
        std::vector<std::string> replacements;
    };
    std::vector<Option> options;
    for (const auto& s : summary_spans) {
        if (s.kind != kind) continue;
        Option opt{&s, {}};
        const auto norm = corpus::normalize(s.surface);
        if (kind == SpanKind::pronoun) {
            if (!s.pronoun_class) continue;
            for (const auto& p : pronoun_class_members(*s.pronoun_class))
                if (p != lower(s.surface)) opt.replacements.push_back(match_case(s.surface, p));
        } else {
            for (std::size_t i = 0; i < pool.size(); ++i)
                if (pool_norm[i] != norm) opt.replacements.push_back(pool[i]);
        }
        if (!opt.replacements.empty()) options.push_back(std::move(opt));
    }
    if (options.empty()) return std::nullopt;

    Rng rng(seed);
    const auto& chosen = options[rng.index(options.size())];
    const auto& replacement = chosen.replacements[rng.index(chosen.replacements.size())];

    CorruptionRecord r;
    r.clean = std::string(summary);
    r.corrupted = std::string(summary.substr(0, chosen.span->begin)) + replacement +
                  std::string(summary.substr(chosen.span->end));
    r.kind = kind;
    r.replaced = *chosen.span;
    r.replacement = replacement;
    r.label = Label::incorrect;
    if (corpus::normalize(r.corrupted) == corpus::normalize(r.clean)) return std::nullopt;
    return r;
}

std::uint64_t record_seed(std::uint64_t seed, std::string_view record_id, SpanKind kind) {
    return splitmix(splitmix(seed ^ stable_hash(record_id)) + static_cast<std::uint64_t>(kind));
}

CorruptionSplit build_corruption_split(const std::vector<corpus::CorpusRecord>& records,
                                       std::uint64_t seed) {
    CorruptionSplit out;
    for (const auto& rec : records) {
        if (!rec.summary) continue;
        const auto& summary = *rec.summary;
        out.classifier.push_back({rec.id + "#clean", summary, rec.document, Label::correct});
        const auto summary_spans = extract_typed_spans(summary, Source::summary);
        const auto document_spans = extract_typed_spans(rec.document, Source::document);
        for (auto kind : kAllKinds) {
            auto r = apply_swap(summary, kind, summary_spans, document_spans,
                                record_seed(seed, rec.id, kind));
            if (!r) continue;
            r->id = rec.id + "#" + to_string(kind);
            out.corrector.push_back({r->id, r->corrupted, rec.document, r->clean, kind});
            out.classifier.push_back({r->id, r->corrupted, rec.document, Label::incorrect});
            out.records.push_back(std::move(*r));
        }
    }
    return out;
}

CorruptionDataset build_corruption_dataset(const corpus::Dataset& dataset, std::uint64_t seed) {
    return {build_corruption_split(dataset.split(corpus::Split::train), seed),
            build_corruption_split(dataset.split(corpus::Split::validation), seed)};
}

void write_corrector_set(const std::filesystem::path& path, const std::vector<CorrectorExample>& set) {
    write_jsonl(path, set, &corrector_json);
}

std::vector<CorrectorExample> read_corrector_set(const std::filesystem::path& path) {
    std::vector<CorrectorExample> out;
    read_jsonl(path, [&](const nlohmann::json& j) {
        out.push_back({j.at("id").get<std::string>(), j.at("input_summary").get<std::string>(),
                       j.at("document").get<std::string>(), j.at("target_summary").get<std::string>(),
                       parse_span_kind(j.at("swap_kind").get<std::string>())});
    });
    return out;
}

void write_classifier_set(const std::filesystem::path& path,
                          const std::vector<ClassifierExample>& set) {
    write_jsonl(path, set, &classifier_json);
}

std::vector<ClassifierExample> read_classifier_set(const std::filesystem::path& path) {
    std::vector<ClassifierExample> out;
    read_jsonl(path, [&](const nlohmann::json& j) {
        out.push_back({j.at("id").get<std::string>(), j.at("claim").get<std::string>(),
                       j.at("document").get<std::string>(),
                       parse_label(j.at("label").get<std::string>())});
    });
    return out;
}

std::optional<std::string> check_record(const CorruptionRecord& r, std::string_view document) {
    const auto clean = corpus::tokenize(r.clean);
    const auto bad = corpus::tokenize(r.corrupted);
    if (clean == bad) return "corrupted summary equals the clean one";
    if (r.replaced.kind != r.kind) return "replaced span kind differs from swap kind";
    if (r.clean.substr(r.replaced.begin, r.replaced.end - r.replaced.begin) != r.replaced.surface)
        return "replaced span does not match the clean text";
    if (r.corrupted != r.clean.substr(0, r.replaced.begin) + r.replacement +
                           r.clean.substr(r.replaced.end))
        return "corrupted text is not the clean text with one span replaced";

    // Token-level difference must sit inside the replaced span.
    std::size_t prefix = 0;
    while (prefix < clean.size() && prefix < bad.size() && clean[prefix] == bad[prefix]) ++prefix;
    std::size_t suffix = 0;
    while (suffix < clean.size() - prefix && suffix < bad.size() - prefix &&
           clean[clean.size() - 1 - suffix] == bad[bad.size() - 1 - suffix])
        ++suffix;
    const auto before = corpus::tokenize(r.clean.substr(0, r.replaced.begin)).size();
    const auto after = corpus::tokenize(r.clean.substr(r.replaced.end)).size();
    if (prefix < before || suffix < after) return "difference extends beyond the swapped span";

    if (r.kind == SpanKind::pronoun) {
        auto original = pronoun_class_of(r.replaced.surface);
        if (!r.replaced.pronoun_class || original != r.replaced.pronoun_class)
            return "pronoun span lacks its case class";
        const auto& members = pronoun_class_members(*r.replaced.pronoun_class);
        if (!contains(members, lower(r.replacement)))
            return "pronoun replacement crosses case classes";
        if (lower(r.replacement) == lower(r.replaced.surface)) return "pronoun replaced by itself";
    } else {
        if (document.find(r.replacement) == std::string_view::npos)
            return "replacement does not occur in the document";
        auto spans = extract_typed_spans(document, Source::document);
        const bool same_kind = std::any_of(spans.begin(), spans.end(), [&](const TypedSpan& s) {
            return s.kind == r.kind && s.surface == r.replacement;
        });
        if (!same_kind) return "replacement is not a document span of the same kind";
    }
    return std::nullopt;
}

}  // namespace gslb::corruption
