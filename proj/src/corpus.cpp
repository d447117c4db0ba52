#include "gslb/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

namespace gslb::corpus {

namespace {

constexpr std::string_view kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>", "[SEP]"};
constexpr std::string_view kSepLiteral = "[SEP]";

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

}  // namespace

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train:
            return "train";
        case Split::validation:
            return "validation";
        case Split::test:
            return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    throw CorpusError("unknown split: " + std::string(name));
}

void Dataset::add(Split split, std::vector<CorpusRecord> records) {
    auto& target = splits_[split];
    for (auto& r : records) {
        if (auto it = ids_.find(r.id); it != ids_.end())
            throw CorpusError("duplicate record id '" + r.id + "' (already in split " +
                              std::string(split_name(it->second.first)) + ")");
        ids_.emplace(r.id, std::make_pair(split, target.size()));
        target.push_back(std::move(r));
    }
}

const std::vector<CorpusRecord>& Dataset::split(Split s) const {
    static const std::vector<CorpusRecord> empty;
    auto it = splits_.find(s);
    return it == splits_.end() ? empty : it->second;
}

const CorpusRecord* Dataset::find(std::string_view id) const {
    auto it = ids_.find(std::string(id));
    if (it == ids_.end()) return nullptr;
    return &splits_.at(it->second.first)[it->second.second];
}

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path, Split split) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot read corpus file " + path.string());
    std::vector<CorpusRecord> records;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& why) {
        throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return is_space(c); }))
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) fail("record is not a JSON object");
        auto field = [&](const char* key, bool required) -> std::optional<std::string> {
            auto it = j.find(key);
            if (it == j.end() || it->is_null()) {
                if (required) fail(std::string("missing field '") + key + "'");
                return std::nullopt;
            }
            if (!it->is_string()) fail(std::string("field '") + key + "' is not a string");
            return it->get<std::string>();
        };
        CorpusRecord r;
        r.id = *field("id", true);
        r.document = *field("document", true);
        r.summary = field("summary", split != Split::test);
        if (r.id.empty()) fail("empty id");
        if (r.document.empty()) fail("empty document");
        if (split != Split::test && r.summary->empty()) fail("empty summary");
        if (seen.count(r.id))
            fail("duplicate id '" + r.id + "' (first on line " + std::to_string(seen[r.id]) + ")");
        seen.emplace(r.id, line_no);
        records.push_back(std::move(r));
    }
    return records;
}

Vocabulary::Vocabulary() {
    for (auto t : kReserved) push(std::string(t));
}

TokenId Vocabulary::id_of(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw CorpusError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
    return ids_.count(std::string(token)) != 0;
}

void Vocabulary::push(std::string token) {
    if (ids_.count(token)) throw CorpusError("duplicate vocabulary token '" + token + "'");
    ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw CorpusError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot read vocabulary " + path.string());
    Vocabulary v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        if (line_no < reserved_count) {
            if (line != kReserved[line_no])
                throw CorpusError(path.string() + ":" + std::to_string(line_no + 1) +
                                  ": expected reserved token " + std::string(kReserved[line_no]));
        } else {
            v.push(line);
        }
        ++line_no;
    }
    if (line_no < reserved_count) throw CorpusError(path.string() + ": missing reserved tokens");
    return v;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < text.size();) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (text.substr(i, kSepLiteral.size()) == kSepLiteral) {
            flush();
            out.emplace_back(kSepLiteral);
            i += kSepLiteral.size();
        } else if (is_space(c)) {
            flush();
            ++i;
        } else if (is_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
            ++i;
        } else {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
            ++i;
        }
    }
    flush();
    return out;
}

std::string normalize(std::string_view text) {
    std::string out;
    for (const auto& t : tokenize(text)) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

Vocabulary build_vocabulary(const std::vector<CorpusRecord>& train, std::size_t min_count,
                            std::size_t max_size) {
    if (train.empty()) throw CorpusError("cannot build a vocabulary from an empty train split");
    if (min_count < 1) throw CorpusError("min_count must be at least 1");
    std::unordered_map<std::string, std::size_t> counts;
    auto count = [&](std::string_view text) {
        for (auto& t : tokenize(text))
            if (t != kSepLiteral) ++counts[t];
    };
    for (const auto& r : train) {
        count(r.document);
        if (r.summary) count(*r.summary);
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (auto& [token, n] : ranked) {
        if (n < min_count) break;
        if (max_size != 0 && v.size() >= max_size) break;
        if (v.contains(token)) continue;
        v.push(token);
    }
    return v;
}

TokenSequence encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    TokenSequence ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

TokenSequence encode_text(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    auto ids = encode_tokens(tokenize(text), vocab);
    if (ids.size() > max_len) ids.resize(max_len);
    return ids;
}

std::string decode_ids(const TokenSequence& ids, const Vocabulary& vocab) {
    std::string out;
    for (TokenId id : ids) {
        const auto& token = vocab.token_of(id);
        if (id != Vocabulary::sep && static_cast<std::size_t>(id) < Vocabulary::reserved_count)
            continue;
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

TokenSequence strip_padding(const TokenSequence& ids) {
    auto end = std::find(ids.begin(), ids.end(), Vocabulary::pad);
    return TokenSequence(ids.begin(), end);
}

bool padding_is_trailing(const TokenSequence& ids) {
    auto first_pad = std::find(ids.begin(), ids.end(), Vocabulary::pad);
    return std::all_of(first_pad, ids.end(), [](TokenId id) { return id == Vocabulary::pad; });
}

}  // namespace gslb::corpus
