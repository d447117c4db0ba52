#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gslb::lexicon {

inline constexpr std::string_view kDefaultTermColumn = "KP_Patient_Display_Name";
inline constexpr std::size_t kMaxTermWords = 3;

class LexiconError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Terminology strings exactly as read, before any cleanup.
struct RawTermList {
    std::vector<std::string> entries;
};

/// Reads one column of a CSV file with a header row (RFC 4180 quoting).
RawTermList parse_terminology_csv(std::string_view content,
                                  std::string_view column = kDefaultTermColumn);
RawTermList read_terminology_csv(const std::filesystem::path& path,
                                 std::string_view column = kDefaultTermColumn);

class Lexicon {
public:
    /// Ignores terms already present under case folding.
    bool insert(std::string term);
    const std::vector<std::string>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }
    bool contains(std::string_view term) const;
    /// Canonical casing of a case-folded match.
    const std::string* canonical(std::string_view term) const;

    void save(const std::filesystem::path& path) const;
    static Lexicon load(const std::filesystem::path& path);

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, std::size_t> folded_;
};

std::size_t word_count(std::string_view term);
std::string fold_case(std::string_view s);

/// Splits comma-joined terms, splits "A (B)" into A and B, removes case-folded
/// duplicates keeping the first casing, and drops terms over three words.
/// Terms still holding a parenthesis after the split (nested, unbalanced or
/// repeated groups) are dropped.
Lexicon preprocess_terms(const RawTermList& raw);

struct TermMatch {
    std::string term;  // lexicon spelling
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the last byte
};

/// Case-insensitive whole-term matcher. A match must be bounded on both sides
/// by a non-word character or the string edge; overlapping candidates resolve
/// longest first, then earliest.
class TermMatcher {
public:
    explicit TermMatcher(Lexicon lexicon);

    std::vector<TermMatch> find_matches(std::string_view text) const;
    const Lexicon& lexicon() const { return lexicon_; }

private:
    int child(int node, unsigned char c) const;

    Lexicon lexicon_;
    std::unordered_map<std::uint64_t, int> edges_;
    std::vector<int> terminal_;  // term index per trie node, or -1
};

TermMatcher compile_matcher(const Lexicon& lex);

/// Word characters for boundary tests: ASCII alphanumerics, underscore, and
/// any byte of a multi-byte UTF-8 sequence.
bool is_word_char(unsigned char c);

}  // namespace gslb::lexicon
