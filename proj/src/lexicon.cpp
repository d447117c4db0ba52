#include "gslb/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace gslb::lexicon {

namespace {

bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

// Trims and collapses internal whitespace runs to single spaces.
std::string clean(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::vector<std::string> split_commas(std::string_view s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
            parts.push_back(clean(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return parts;
}

bool has_paren(std::string_view s) { return s.find_first_of("()") != std::string_view::npos; }

// "A (B)" -> {A, B}; anything else passes through unchanged.
std::vector<std::string> split_parenthetical(const std::string& term) {
    const auto open = term.find('(');
    if (open == std::string::npos || term.back() != ')') return {term};
    const std::string outer = clean(std::string_view(term).substr(0, open));
    const std::string inner =
        clean(std::string_view(term).substr(open + 1, term.size() - open - 2));
    if (has_paren(outer) || has_paren(inner)) return {term};
    return {outer, inner};
}

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            // CRLF line endings
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw LexiconError("terminology CSV ends inside a quoted field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

}  // namespace

bool is_word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '_'; }

std::string fold_case(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
    return out;
}

std::size_t word_count(std::string_view term) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : term) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

RawTermList parse_terminology_csv(std::string_view content, std::string_view column) {
    auto rows = parse_csv_rows(content);
    if (rows.empty()) throw LexiconError("terminology CSV has no header row");
    const auto& header = rows.front();
    auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end())
        throw LexiconError("terminology CSV has no column '" + std::string(column) + "'");
    const auto col = static_cast<std::size_t>(it - header.begin());
    RawTermList raw;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (col >= rows[r].size())
            throw LexiconError("terminology CSV row " + std::to_string(r + 1) + " lacks column '" +
                               std::string(column) + "'");
        raw.entries.push_back(rows[r][col]);
    }
    return raw;
}

RawTermList read_terminology_csv(const std::filesystem::path& path, std::string_view column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LexiconError("cannot read terminology file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_terminology_csv(buf.str(), column);
}

bool Lexicon::insert(std::string term) {
    auto folded = fold_case(term);
    if (folded_.count(folded)) return false;
    folded_.emplace(std::move(folded), terms_.size());
    terms_.push_back(std::move(term));
    return true;
}

bool Lexicon::contains(std::string_view term) const { return folded_.count(fold_case(term)) != 0; }

const std::string* Lexicon::canonical(std::string_view term) const {
    auto it = folded_.find(fold_case(term));
    return it == folded_.end() ? nullptr : &terms_[it->second];
}

void Lexicon::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw LexiconError("cannot write lexicon " + path.string());
    for (const auto& t : terms_) out << t << '\n';
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LexiconError("cannot read lexicon " + path.string());
    Lexicon lex;
    std::string line;
    while (std::getline(in, line)) {
        auto term = clean(line);
        if (!term.empty()) lex.insert(std::move(term));
    }
    return lex;
}

Lexicon preprocess_terms(const RawTermList& raw) {
    // Rule 1: comma splitting.
    std::vector<std::string> pieces;
    for (const auto& entry : raw.entries)
        for (auto& p : split_commas(entry)) pieces.push_back(std::move(p));

    // Rule 2: "A (B)" splitting.
    std::vector<std::string> split;
    for (const auto& p : pieces)
        for (auto& t : split_parenthetical(p))
            if (!t.empty() && !has_paren(t)) split.push_back(std::move(t));

    // Rules 3 and 4: case-folded dedup, then the word-count cap.
    Lexicon deduped;
    for (auto& t : split) deduped.insert(std::move(t));
    Lexicon lex;
    for (const auto& t : deduped.terms())
        if (word_count(t) <= kMaxTermWords) lex.insert(t);
    return lex;
}

TermMatcher::TermMatcher(Lexicon lexicon) : lexicon_(std::move(lexicon)) {
    terminal_.push_back(-1);
    for (std::size_t t = 0; t < lexicon_.size(); ++t) {
        int node = 0;
        for (unsigned char c : fold_case(lexicon_.terms()[t])) {
            const auto key = (static_cast<std::uint64_t>(node) << 8) | c;
            auto it = edges_.find(key);
            if (it == edges_.end()) {
                it = edges_.emplace(key, static_cast<int>(terminal_.size())).first;
                terminal_.push_back(-1);
            }
            node = it->second;
        }
        terminal_[static_cast<std::size_t>(node)] = static_cast<int>(t);
    }
}

int TermMatcher::child(int node, unsigned char c) const {
    if (c < 0x80) c = static_cast<unsigned char>(std::tolower(c));
    auto it = edges_.find((static_cast<std::uint64_t>(node) << 8) | c);
    return it == edges_.end() ? -1 : it->second;
}

std::vector<TermMatch> TermMatcher::find_matches(std::string_view text) const {
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
    std::vector<TermMatch> candidates;
    for (std::size_t start = 0; start < text.size(); ++start) {
        if (start > 0 && is_word_char(byte(start - 1))) continue;
        int node = 0;
        for (std::size_t i = start; i < text.size(); ++i) {
            node = child(node, byte(i));
            if (node < 0) break;
            const int term = terminal_[static_cast<std::size_t>(node)];
            if (term >= 0 && (i + 1 == text.size() || !is_word_char(byte(i + 1))))
                candidates.push_back({lexicon_.terms()[static_cast<std::size_t>(term)], start, i + 1});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        const auto la = a.end - a.begin, lb = b.end - b.begin;
        return la != lb ? la > lb : a.begin < b.begin;
    });
    std::vector<bool> taken(text.size(), false);
    std::vector<TermMatch> accepted;
    for (auto& c : candidates) {
        if (std::any_of(taken.begin() + static_cast<std::ptrdiff_t>(c.begin),
                        taken.begin() + static_cast<std::ptrdiff_t>(c.end), [](bool b) { return b; }))
            continue;
        std::fill(taken.begin() + static_cast<std::ptrdiff_t>(c.begin),
                  taken.begin() + static_cast<std::ptrdiff_t>(c.end), true);
        accepted.push_back(std::move(c));
    }
    std::sort(accepted.begin(), accepted.end(),
              [](const auto& a, const auto& b) { return a.begin < b.begin; });
    return accepted;
}

TermMatcher compile_matcher(const Lexicon& lex) { return TermMatcher(lex); }

}  // namespace gslb::lexicon
