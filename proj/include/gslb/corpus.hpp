#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gslb::corpus {

using TokenId = std::int32_t;
/// Token ids; PAD may only appear as a trailing run.
using TokenSequence = std::vector<TokenId>;

inline constexpr std::size_t kDefaultMaxLen = 1024;

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Split { train, validation, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct CorpusRecord {
    std::string id;
    std::string document;
    std::optional<std::string> summary;
};

class Dataset {
public:
    /// Appends records to a split; ids must stay unique across all splits.
    void add(Split split, std::vector<CorpusRecord> records);
    const std::vector<CorpusRecord>& split(Split s) const;
    bool has(Split s) const { return splits_.count(s) != 0; }
    const CorpusRecord* find(std::string_view id) const;

private:
    std::map<Split, std::vector<CorpusRecord>> splits_;
    std::unordered_map<std::string, std::pair<Split, std::size_t>> ids_;
};

/// Reads JSON Lines with string fields id, document, summary. Summaries are
/// required for train and validation.
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path, Split split);

class Vocabulary {
public:
    static constexpr TokenId pad = 0;
    static constexpr TokenId bos = 1;
    static constexpr TokenId eos = 2;
    static constexpr TokenId unk = 3;
    static constexpr TokenId sep = 4;
    static constexpr std::size_t reserved_count = 5;

    Vocabulary();

    TokenId id_of(std::string_view token) const;
    const std::string& token_of(TokenId id) const;
    bool contains(std::string_view token) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    void push(std::string token);

    /// One token per line; line number is the id.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

/// Lowercased word tokens with every ASCII punctuation character isolated.
/// The literal "[SEP]" survives as one token.
std::vector<std::string> tokenize(std::string_view text);
std::string normalize(std::string_view text);

/// Ranks train-split tokens by frequency, then lexicographically. max_size
/// bounds the total vocabulary including reserved tokens; 0 means unbounded.
Vocabulary build_vocabulary(const std::vector<CorpusRecord>& train, std::size_t min_count,
                            std::size_t max_size);

TokenSequence encode_text(std::string_view text, const Vocabulary& vocab,
                          std::size_t max_len = kDefaultMaxLen);
TokenSequence encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab);
/// Drops reserved tokens other than SEP.
std::string decode_ids(const TokenSequence& ids, const Vocabulary& vocab);

/// Content ids before the first PAD.
TokenSequence strip_padding(const TokenSequence& ids);
bool padding_is_trailing(const TokenSequence& ids);

}  // namespace gslb::corpus
