#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <toml.hpp>

namespace gslb::cli {

namespace fs = std::filesystem;
using training::ModelKind;

namespace {

constexpr ModelKind kKinds[] = {ModelKind::summarizer, ModelKind::corrector, ModelKind::classifier};

std::string at_line(const toml::node& n) {
    return " (line " + std::to_string(n.source().begin.line) + ")";
}

// Reads typed values out of one table and rejects keys nobody asked for.
class Section {
public:
    Section(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

    template <class T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!table_) return;
        const toml::node* n = table_->get(key);
        if (!n) return;
        const std::string path = prefix_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            auto v = n->value_exact<bool>();
            if (!v) throw ConfigError(path + ": expected a boolean" + at_line(*n));
            out = *v;
        } else if constexpr (std::is_same_v<T, std::string>) {
            auto v = n->value_exact<std::string>();
            if (!v) throw ConfigError(path + ": expected a string" + at_line(*n));
            out = *v;
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!n->is_number()) throw ConfigError(path + ": expected a number" + at_line(*n));
            out = *n->value<double>();
        } else {
            auto v = n->value_exact<std::int64_t>();
            if (!v) throw ConfigError(path + ": expected an integer" + at_line(*n));
            if (*v < 0) throw ConfigError(path + ": must not be negative" + at_line(*n));
            out = static_cast<T>(*v);
        }
    }

    /// Parses a string value with `parse`, reporting failures under the key path.
    template <class T, class Parse>
    void read_enum(const std::string& key, T& out, Parse parse) {
        std::string s;
        bool present = table_ && table_->get(key);
        read(key, s);
        if (!present) return;
        try {
            out = parse(s);
        } catch (const std::exception&) {
            throw ConfigError(prefix_ + "." + key + ": unrecognized value \"" + s + "\"" +
                              at_line(*table_->get(key)));
        }
    }

    void allow(const std::string& key) { seen_.insert(key); }

    void finish() const {
        if (!table_) return;
        for (auto&& [k, v] : *table_)
            if (!seen_.count(std::string(k.str())))
                throw ConfigError("unknown key " + prefix_ + "." + std::string(k.str()) + at_line(v));
    }

private:
    const toml::table* table_;
    std::string prefix_;
    std::set<std::string> seen_;
};

const toml::table* sub_table(const toml::table& parent, const std::string& key, const std::string& path) {
    const toml::node* n = parent.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError(path + ": expected a table" + at_line(*n));
    return n->as_table();
}

void read_train(Section& s, training::TrainConfig& c) {
    s.read("lr", c.lr);
    s.read("beta1", c.beta1);
    s.read("beta2", c.beta2);
    s.read("weight_decay", c.weight_decay);
    s.read("eps", c.eps);
    s.read("update_freq", c.update_freq);
    s.read("max_tokens", c.max_tokens);
    s.read("max_updates", c.max_updates);
    s.read("epochs", c.epochs);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string activation_name(ad::Activation a) { return a == ad::Activation::relu ? "relu" : "gelu"; }

std::string width_name(ad::Precision p) { return p == ad::Precision::f32 ? "f32" : "f64"; }

template <class E>
void check(const std::string& prefix, const std::function<void()>& fn) {
    try {
        fn();
    } catch (const E& e) {
        const std::string what = e.what();
        throw ConfigError(what.rfind(prefix, 0) == 0 ? what : prefix + what);
    }
}

}  // namespace

RunConfig load_run_config(const fs::path& path, training::Profile profile,
                          const std::optional<std::string>& seed_override) {
    toml::table root;
    try {
        root = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        throw ConfigError(path.string() + ":" + std::to_string(e.source().begin.line) + ": " +
                          std::string(e.description()));
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    RunConfig cfg;
    cfg.profile = profile;
    for (auto k : kKinds) cfg.train[k] = training::TrainConfig::defaults(profile, k);

    for (auto&& [k, v] : root) {
        static const std::set<std::string> known{"seed", "paths", "guidance", "model", "train", "decode", "eval"};
        if (!known.count(std::string(k.str())))
            throw ConfigError("unknown key " + std::string(k.str()) + at_line(v));
    }
    if (const auto* n = root.get("seed")) {
        auto v = n->value_exact<std::int64_t>();
        if (!v || *v < 0) throw ConfigError("seed: expected a non-negative integer" + at_line(*n));
        cfg.seed = static_cast<std::uint64_t>(*v);
    }

    {
        Section s(sub_table(root, "paths", "paths"), "paths");
        std::string corpus, terms, out;
        s.read("corpus_dir", corpus);
        s.read("terminology", terms);
        s.read("output_dir", out);
        s.finish();
        if (corpus.empty()) throw ConfigError("paths.corpus_dir: required");
        if (out.empty()) throw ConfigError("paths.output_dir: required");
        cfg.written = {corpus, terms, out};
        cfg.paths = {resolve(base, corpus), resolve(base, terms), resolve(base, out)};
        if (!fs::is_directory(cfg.paths.corpus_dir))
            throw ConfigError("paths.corpus_dir: no directory " + cfg.paths.corpus_dir.string());
        if (!cfg.paths.terminology.empty() && !fs::is_regular_file(cfg.paths.terminology))
            throw ConfigError("paths.terminology: no file " + cfg.paths.terminology.string());
    }
    {
        Section s(sub_table(root, "guidance", "guidance"), "guidance");
        s.read_enum("kind", cfg.guidance.kind, [](const std::string& v) { return guidance::parse_kind(v); });
        s.read("term_column", cfg.guidance.term_column);
        s.read("oracle_sentences", cfg.guidance.oracle_sentences);
        s.finish();
        if (cfg.guidance.kind != guidance::GuidanceKind::none &&
            cfg.guidance.kind != guidance::GuidanceKind::oracle && cfg.paths.terminology.empty())
            throw ConfigError("paths.terminology: required for guidance.kind = " +
                              guidance::to_string(cfg.guidance.kind));
        if (cfg.guidance.oracle_sentences == 0) throw ConfigError("guidance.oracle_sentences: must be positive");
    }
    {
        Section s(sub_table(root, "model", "model"), "model");
        auto& m = cfg.model;
        s.read("layers", m.layers);
        s.read("shared_bottom_layers", m.shared_bottom_layers);
        s.read("model_dim", m.model_dim);
        s.read("heads", m.heads);
        s.read("ffn_dim", m.ffn_dim);
        s.read("max_len", m.max_len);
        s.read_enum("activation", m.activation, [](const std::string& v) {
            if (v == "relu") return ad::Activation::relu;
            if (v == "gelu") return ad::Activation::gelu;
            throw std::invalid_argument(v);
        });
        s.read_enum("float_width", m.float_width, [](const std::string& v) {
            if (v == "f32") return ad::Precision::f32;
            if (v == "f64") return ad::Precision::f64;
            throw std::invalid_argument(v);
        });
        s.read("vocab_min_count", cfg.vocab_min_count);
        s.read("vocab_max_size", cfg.vocab_max_size);
        s.finish();
        auto probe = m;
        probe.vocab_size = corpus::Vocabulary::reserved_count;
        check<std::invalid_argument>("", [&] { probe.validate(); });
        if (cfg.vocab_min_count == 0) throw ConfigError("model.vocab_min_count: must be positive");
    }
    {
        const toml::table* t = sub_table(root, "train", "train");
        Section s(t, "train");
        for (auto k : kKinds) read_train(s, cfg.train[k]);
        for (auto k : kKinds) {
            const auto name = training::to_string(k);
            s.allow(name);
            if (!t) continue;
            Section sub(sub_table(*t, name, "train." + name), "train." + name);
            read_train(sub, cfg.train[k]);
            sub.finish();
        }
        s.finish();
        for (auto k : kKinds) {
            cfg.train[k].seed = cfg.seed;
            check<std::invalid_argument>("", [&] { cfg.train[k].validate(); });
        }
    }
    {
        Section s(sub_table(root, "decode", "decode"), "decode");
        auto& d = cfg.decode;
        s.read("beam", d.beam);
        s.read("min_len", d.min_len);
        s.read("max_len", d.max_len);
        s.read("length_penalty", d.length_penalty);
        s.read("block_trigrams", d.block_trigrams);
        s.read_enum("split", cfg.decode_split, [](const std::string& v) { return corpus::parse_split(v); });
        s.finish();
        check<std::invalid_argument>("", [&] { d.validate(); });
        if (d.max_len + 2 > cfg.model.max_len)
            throw ConfigError("decode.max_len: must leave room for BOS and EOS within model.max_len");
    }
    {
        Section s(sub_table(root, "eval", "eval"), "eval");
        s.read_enum("rouge_l_mode", cfg.eval.rouge_l_mode,
                    [](const std::string& v) { return evaluation::parse_rouge_l_mode(v); });
        s.read_enum("consistency_mode", cfg.eval.consistency_mode,
                    [](const std::string& v) { return evaluation::parse_consistency_mode(v); });
        s.finish();
    }

    if (seed_override) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(*seed_override, &used);
            if (used != seed_override->size() || seed_override->front() == '-') throw std::invalid_argument("");
            cfg.seed = v;
        } catch (const std::exception&) {
            throw ConfigError("GSLB_SEED: expected a non-negative integer, got \"" + *seed_override + "\"");
        }
        for (auto k : kKinds) cfg.train[k].seed = cfg.seed;
    }
    return cfg;
}

nlohmann::ordered_json RunConfig::effective() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["profile"] = profile == training::Profile::paper ? "paper" : "desk";
    j["paths"] = {{"corpus_dir", written.corpus_dir.generic_string()},
                  {"terminology", written.terminology.generic_string()},
                  {"output_dir", written.output_dir.generic_string()}};
    j["guidance"] = {{"kind", guidance::to_string(guidance.kind)},
                     {"term_column", guidance.term_column},
                     {"oracle_sentences", guidance.oracle_sentences}};
    j["model"] = {{"layers", model.layers},
                  {"shared_bottom_layers", model.shared_bottom_layers},
                  {"model_dim", model.model_dim},
                  {"heads", model.heads},
                  {"ffn_dim", model.ffn_dim},
                  {"max_len", model.max_len},
                  {"activation", activation_name(model.activation)},
                  {"float_width", width_name(model.float_width)},
                  {"vocab_min_count", vocab_min_count},
                  {"vocab_max_size", vocab_max_size}};
    for (const auto& [k, t] : train)
        j["train"][training::to_string(k)] = {{"lr", t.lr},
                                              {"beta1", t.beta1},
                                              {"beta2", t.beta2},
                                              {"weight_decay", t.weight_decay},
                                              {"eps", t.eps},
                                              {"update_freq", t.update_freq},
                                              {"max_tokens", t.max_tokens},
                                              {"max_updates", t.max_updates},
                                              {"epochs", t.epochs}};
    j["decode"] = {{"beam", decode.beam},
                   {"min_len", decode.min_len},
                   {"max_len", decode.max_len},
                   {"length_penalty", decode.length_penalty},
                   {"block_trigrams", decode.block_trigrams},
                   {"split", std::string(corpus::split_name(decode_split))}};
    j["eval"] = {{"rouge_l_mode", evaluation::to_string(eval.rouge_l_mode)},
                 {"consistency_mode", evaluation::to_string(eval.consistency_mode)}};
    return j;
}

std::string RunConfig::hash() const { return sha256_hex(effective().dump()); }

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return sha256_hex(std::string(std::istreambuf_iterator<char>(in), {}));
}

}  // namespace gslb::cli
