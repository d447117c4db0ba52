#include "stages.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <set>

#include <CLI11.hpp>
#include <openssl/opensslv.h>
#include <spdlog/spdlog.h>
#include <spdlog/version.h>
#include <toml.hpp>

#include "gslb/corruption.hpp"
#include "gslb/lexicon.hpp"

#ifndef GSLB_VERSION
#define GSLB_VERSION "0.0.0"
#endif

namespace gslb::cli {

namespace fs = std::filesystem;
using corpus::CorpusRecord;
using corpus::Split;
using corpus::TokenSequence;
using corpus::Vocabulary;
using guidance::GuidanceKind;
using guidance::GuidanceSignal;
using training::ModelKind;

namespace {

const char* producer_of(ModelKind k) {
    switch (k) {
        case ModelKind::summarizer:
            return "train --model summarizer";
        case ModelKind::corrector:
            return "train --model corrector";
        case ModelKind::classifier:
            return "train --model classifier";
    }
    return "train";
}

// Tracks one stage's inputs and outputs and writes its metadata record.
class StageRun {
public:
    StageRun(const RunConfig& cfg, std::string stage) : cfg_(cfg), stage_(std::move(stage)) {
        ad::set_precision(cfg.model.float_width);
        fs::create_directories(cfg.paths.output_dir);
        spdlog::info("{}: config {}", stage_, cfg.hash().substr(0, 12));
    }

    /// An artifact of an earlier stage.
    fs::path input(const fs::path& rel, const std::string& producer) {
        const auto p = cfg_.paths.output_dir / rel;
        if (!fs::exists(p))
            throw StageError(stage_ + ": missing " + rel.generic_string() + "; run `gslb " + producer +
                             "` first");
        inputs_[rel.generic_string()] = p;
        return p;
    }

    /// A file supplied by the user rather than by a stage.
    fs::path external(const fs::path& p, const std::string& what) {
        if (!fs::is_regular_file(p)) throw StageError(stage_ + ": missing " + what + " " + p.string());
        inputs_[what] = p;
        return p;
    }

    fs::path output(const fs::path& rel) {
        const auto p = cfg_.paths.output_dir / rel;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        outputs_[rel.generic_string()] = p;
        return p;
    }

    void finish() const {
        nlohmann::ordered_json j;
        j["stage"] = stage_;
        j["config_hash"] = cfg_.hash();
        j["seed"] = cfg_.seed;
        j["profile"] = cfg_.effective()["profile"];
        j["length_penalty"] = cfg_.decode.length_penalty;
        j["versions"] = library_versions();
        j["config"] = cfg_.effective();
        for (const auto& [name, p] : inputs_) j["inputs"][name] = sha256_file(p);
        for (const auto& [name, p] : outputs_) j["outputs"][name] = sha256_file(p);
        std::string file = stage_;
        for (char& c : file)
            if (c == ' ') c = '_';
        const auto meta = cfg_.paths.output_dir / kMetaDir / (file + ".json");
        fs::create_directories(meta.parent_path());
        std::ofstream out(meta, std::ios::trunc);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + meta.string());
        spdlog::info("{}: wrote {} artifact(s)", stage_, outputs_.size());
    }

private:
    const RunConfig& cfg_;
    std::string stage_;
    std::map<std::string, fs::path> inputs_;
    std::map<std::string, fs::path> outputs_;
};

fs::path corpus_file(const RunConfig& cfg, Split s) {
    return cfg.paths.corpus_dir / (std::string(corpus::split_name(s)) + ".jsonl");
}

std::vector<CorpusRecord> load_split(const RunConfig& cfg, StageRun& run, Split s) {
    const auto p = run.external(corpus_file(cfg, s), "corpus " + std::string(corpus::split_name(s)));
    return corpus::load_corpus(p, s);
}

fs::path guidance_file(Split s) { return kGuidanceDir / (std::string(corpus::split_name(s)) + ".jsonl"); }

void write_jsonl(const fs::path& path, const std::vector<nlohmann::ordered_json>& rows) {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& r : rows) out << r.dump() << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::map<std::string, GuidanceSignal> guidance_by_id(const fs::path& path) {
    std::map<std::string, GuidanceSignal> out;
    for (auto& g : guidance::read_guidance_cache(path)) out[g.source_id] = std::move(g);
    return out;
}

const GuidanceSignal& signal_for(const std::map<std::string, GuidanceSignal>& signals, const std::string& id) {
    auto it = signals.find(id);
    if (it == signals.end()) throw StageError("no guidance for record " + id + "; rerun `gslb guidance-extract`");
    return it->second;
}

model::ModelConfig model_config(const RunConfig& cfg, const Vocabulary& vocab) {
    auto m = cfg.model;
    m.vocab_size = vocab.size();
    return m;
}

TokenSequence encode(const std::string& text, const Vocabulary& v, std::size_t max_len) {
    return corpus::encode_text(text, v, max_len);
}

TokenSequence target_of(const std::string& text, const Vocabulary& v, std::size_t max_len) {
    return model::with_bos_eos(encode(text, v, max_len - 2));
}

std::vector<training::Example> summarizer_examples(const std::vector<CorpusRecord>& records,
                                                   const std::map<std::string, GuidanceSignal>* signals,
                                                   const Vocabulary& v, std::size_t max_len) {
    std::vector<training::Example> out;
    for (const auto& r : records) {
        training::Example ex{r.id, encode(r.document, v, max_len), {}, target_of(r.summary.value_or(""), v, max_len)};
        if (signals) ex.guidance = guidance::render_guidance(signal_for(*signals, r.id), v, max_len);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<training::Example> corrector_examples(const std::vector<corruption::CorrectorExample>& set,
                                                  const Vocabulary& v, std::size_t max_len) {
    std::vector<training::Example> out;
    for (const auto& e : set)
        out.push_back({e.id,
                       model::corrector_input(encode(e.input_summary, v, max_len), encode(e.document, v, max_len),
                                              max_len),
                       {},
                       target_of(e.target_summary, v, max_len)});
    return out;
}

std::vector<training::Example> classifier_examples(const std::vector<corruption::ClassifierExample>& set,
                                                   const Vocabulary& v, std::size_t max_len) {
    std::vector<training::Example> out;
    for (const auto& e : set)
        out.push_back({e.id,
                       model::classifier_input(encode(e.claim, v, max_len), encode(e.document, v, max_len), max_len),
                       {},
                       {},
                       e.label == corruption::Label::correct ? model::kCorrectClass : model::kIncorrectClass});
    return out;
}

fs::path corrector_set_file(Split s) {
    return kCorruptionDir / ("corrector_" + std::string(corpus::split_name(s)) + ".jsonl");
}

fs::path classifier_set_file(Split s) {
    return kCorruptionDir / ("classifier_" + std::string(corpus::split_name(s)) + ".jsonl");
}

// Loads the selected checkpoint of `kind` into `params`.
void load_selected(StageRun& run, ModelKind kind, ad::ParameterSet& params) {
    const auto sel = read_jsonl(run.input(selected_file(kind), producer_of(kind)));
    if (sel.size() != 1 || !sel[0].contains("checkpoint"))
        throw StageError("malformed " + selected_file(kind).generic_string());
    const fs::path rel = sel[0]["checkpoint"].get<std::string>();
    params.load(run.input(rel, producer_of(kind)));
}

std::string guidance_label(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::none:
            return "No signal";
        case GuidanceKind::terms:
            return "Specialized terminologies";
        case GuidanceKind::sentences:
            return "Context-rich sentences";
        case GuidanceKind::oracle:
            return "Oracle sentences";
    }
    return "?";
}

std::vector<evaluation::IdText> read_summaries(const fs::path& path) {
    std::vector<evaluation::IdText> out;
    for (const auto& j : read_jsonl(path)) out.push_back({j.at("id").get<std::string>(), j.at("summary").get<std::string>()});
    return out;
}

}  // namespace

fs::path decoded_file(Split s) { return "decoded_" + std::string(corpus::split_name(s)) + ".jsonl"; }
fs::path corrected_file(Split s) { return "corrected_" + std::string(corpus::split_name(s)) + ".jsonl"; }
fs::path selected_file(ModelKind k) { return "selected_" + training::to_string(k) + ".json"; }

nlohmann::ordered_json library_versions() {
    nlohmann::ordered_json j;
    j["gslb"] = GSLB_VERSION;
    j["tomlplusplus"] = std::to_string(TOML_LIB_MAJOR) + "." + std::to_string(TOML_LIB_MINOR) + "." +
                        std::to_string(TOML_LIB_PATCH);
    j["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    j["spdlog"] = std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                  std::to_string(SPDLOG_VER_PATCH);
    j["cli11"] = CLI11_VERSION;
    j["openssl"] = OPENSSL_VERSION_TEXT;
    return j;
}

void lexicon_build(const RunConfig& cfg) {
    StageRun run(cfg, "lexicon-build");
    const auto train = load_split(cfg, run, Split::train);
    if (!cfg.paths.terminology.empty()) {
        const auto raw = lexicon::read_terminology_csv(run.external(cfg.paths.terminology, "terminology"),
                                                       cfg.guidance.term_column);
        const auto lex = lexicon::preprocess_terms(raw);
        lex.save(run.output(kLexiconFile));
        spdlog::info("lexicon-build: {} raw entries, {} terms", raw.entries.size(), lex.size());
    }
    const auto vocab = corpus::build_vocabulary(train, cfg.vocab_min_count, cfg.vocab_max_size);
    vocab.save(run.output(kVocabFile));
    spdlog::info("lexicon-build: vocabulary of {}", vocab.size());
    run.finish();
}

void guidance_extract(const RunConfig& cfg) {
    StageRun run(cfg, "guidance-extract");
    const auto kind = cfg.guidance.kind;
    if (kind == GuidanceKind::none) {
        spdlog::info("guidance-extract: guidance.kind = none, nothing to extract");
        run.finish();
        return;
    }
    std::unique_ptr<lexicon::TermMatcher> matcher;
    if (kind != GuidanceKind::oracle)
        matcher = std::make_unique<lexicon::TermMatcher>(
            lexicon::compile_matcher(lexicon::Lexicon::load(run.input(kLexiconFile, "lexicon-build"))));
    for (Split s : {Split::train, Split::validation, Split::test}) {
        if (s == Split::test && !fs::exists(corpus_file(cfg, s))) continue;
        // Oracle guidance reads the reference, so it never exists for test.
        if (s == Split::test && kind == GuidanceKind::oracle) continue;
        const auto records = load_split(cfg, run, s);
        std::vector<GuidanceSignal> signals;
        for (const auto& r : records) {
            GuidanceSignal g;
            if (kind == GuidanceKind::terms) {
                g = guidance::extract_term_guidance(r.document, *matcher);
            } else if (kind == GuidanceKind::sentences) {
                g = guidance::extract_sentence_guidance(r.document, *matcher);
            } else {
                if (!r.summary)
                    throw StageError("guidance-extract: oracle guidance needs a summary for record " + r.id);
                g = guidance::extract_oracle_sentences(r.document, *r.summary, cfg.guidance.oracle_sentences);
            }
            g.source_id = r.id;
            signals.push_back(std::move(g));
        }
        guidance::write_guidance_cache(run.output(guidance_file(s)), signals);
    }
    run.finish();
}

void corrupt(const RunConfig& cfg) {
    StageRun run(cfg, "corrupt");
    corpus::Dataset data;
    data.add(Split::train, load_split(cfg, run, Split::train));
    data.add(Split::validation, load_split(cfg, run, Split::validation));
    const auto set = corruption::build_corruption_dataset(data, cfg.seed);
    corruption::write_corrector_set(run.output(corrector_set_file(Split::train)), set.train.corrector);
    corruption::write_corrector_set(run.output(corrector_set_file(Split::validation)), set.validation.corrector);
    corruption::write_classifier_set(run.output(classifier_set_file(Split::train)), set.train.classifier);
    corruption::write_classifier_set(run.output(classifier_set_file(Split::validation)),
                                     set.validation.classifier);
    spdlog::info("corrupt: {} corrector / {} classifier training examples", set.train.corrector.size(),
                 set.train.classifier.size());
    run.finish();
}

void train_model(const RunConfig& cfg, ModelKind kind) {
    const auto name = training::to_string(kind);
    StageRun run(cfg, "train " + name);
    const auto vocab = Vocabulary::load(run.input(kVocabFile, "lexicon-build"));
    const auto mc = model_config(cfg, vocab);
    const auto max_len = mc.max_len;
    auto tc = cfg.train.at(kind);
    tc.validation_decode = {1, kind == ModelKind::corrector ? std::size_t{1} : cfg.decode.min_len,
                            cfg.decode.max_len, cfg.decode.length_penalty, cfg.decode.block_trigrams};

    std::vector<training::Example> train_set, validation_set;
    if (kind == ModelKind::summarizer) {
        const bool guided = cfg.guidance.kind != GuidanceKind::none;
        for (Split s : {Split::train, Split::validation}) {
            const auto records = load_split(cfg, run, s);
            std::map<std::string, GuidanceSignal> signals;
            if (guided) signals = guidance_by_id(run.input(guidance_file(s), "guidance-extract"));
            auto ex = summarizer_examples(records, guided ? &signals : nullptr, vocab, max_len);
            (s == Split::train ? train_set : validation_set) = std::move(ex);
        }
    } else if (kind == ModelKind::corrector) {
        train_set = corrector_examples(
            corruption::read_corrector_set(run.input(corrector_set_file(Split::train), "corrupt")), vocab, max_len);
        validation_set = corrector_examples(
            corruption::read_corrector_set(run.input(corrector_set_file(Split::validation), "corrupt")), vocab,
            max_len);
    } else {
        train_set = classifier_examples(
            corruption::read_classifier_set(run.input(classifier_set_file(Split::train), "corrupt")), vocab,
            max_len);
        validation_set = classifier_examples(
            corruption::read_classifier_set(run.input(classifier_set_file(Split::validation), "corrupt")), vocab,
            max_len);
    }

    // Distinct initial weights per network under one run seed.
    Rng init(cfg.seed * 3 + static_cast<std::uint64_t>(kind) + 1);
    std::unique_ptr<model::GuidedSummarizer> guided;
    std::unique_ptr<model::Seq2SeqModel> seq2seq;
    std::unique_ptr<model::ConsistencyClassifier> classifier;
    std::optional<training::Trainable> trainable;
    if (kind == ModelKind::summarizer && cfg.guidance.kind != GuidanceKind::none) {
        guided = std::make_unique<model::GuidedSummarizer>(mc);
        guided->parameters().initialize(init);
        trainable = training::Trainable::summarizer(*guided);
    } else if (kind == ModelKind::classifier) {
        classifier = std::make_unique<model::ConsistencyClassifier>(mc);
        classifier->parameters().initialize(init);
        trainable = training::Trainable::classifier(*classifier);
    } else {
        seq2seq = std::make_unique<model::Seq2SeqModel>(mc);
        seq2seq->parameters().initialize(init);
        trainable = training::Trainable::seq2seq(*seq2seq);
    }

    const auto ck_dir = cfg.paths.output_dir / kCheckpointDir;
    const auto log = run.output(kLogDir / ("train_" + name + ".jsonl"));
    spdlog::info("train {}: {} examples, {} validation, {} parameters", name, train_set.size(),
                 validation_set.size(), trainable->parameters().value_count());
    const auto cks = training::train(*trainable, train_set, validation_set, tc, {ck_dir, log, name});
    for (const auto& c : cks) {
        const auto rel = fs::relative(c.path, cfg.paths.output_dir);
        run.output(rel);
        run.output(fs::path(rel).replace_extension(".json"));
        spdlog::info("train {}: epoch {} step {} {} {:.6f}", name, c.epoch, c.step, training::to_string(c.metric_kind),
                     c.metric);
    }
    const auto best = training::select_checkpoint(cks, trainable->metric_kind());
    nlohmann::ordered_json sel;
    sel["kind"] = name;
    sel["checkpoint"] = fs::relative(best.path, cfg.paths.output_dir).generic_string();
    sel["epoch"] = best.epoch;
    sel["step"] = best.step;
    sel["metric"] = best.metric;
    sel["metric_kind"] = training::to_string(best.metric_kind);
    write_jsonl(run.output(selected_file(kind)), {sel});
    run.finish();
}

void decode(const RunConfig& cfg) {
    StageRun run(cfg, "decode");
    const Split split = cfg.decode_split;
    if (cfg.guidance.kind == GuidanceKind::oracle && split == Split::test)
        throw StageError("decode: guidance.kind = oracle reads the reference and is refused on the test split");
    const auto vocab = Vocabulary::load(run.input(kVocabFile, "lexicon-build"));
    const auto mc = model_config(cfg, vocab);
    const auto records = load_split(cfg, run, split);

    std::vector<nlohmann::ordered_json> rows;
    auto emit = [&](const std::string& id, const TokenSequence& ids) {
        nlohmann::ordered_json j;
        j["id"] = id;
        j["summary"] = corpus::decode_ids(ids, vocab);
        rows.push_back(std::move(j));
    };
    if (cfg.guidance.kind == GuidanceKind::none) {
        model::Seq2SeqModel m(mc);
        load_selected(run, ModelKind::summarizer, m.parameters());
        for (const auto& r : records)
            emit(r.id, decoding::beam_search(decoding::seq2seq_step(m, encode(r.document, vocab, mc.max_len)),
                                             cfg.decode, vocab.size()));
    } else {
        model::GuidedSummarizer m(mc);
        load_selected(run, ModelKind::summarizer, m.parameters());
        const auto signals = guidance_by_id(run.input(guidance_file(split), "guidance-extract"));
        for (const auto& r : records) {
            const auto g = guidance::render_guidance(signal_for(signals, r.id), vocab, mc.max_len);
            emit(r.id, decoding::beam_search(decoding::summarizer_step(m, encode(r.document, vocab, mc.max_len), g),
                                             cfg.decode, vocab.size()));
        }
    }
    write_jsonl(run.output(decoded_file(split)), rows);
    run.finish();
}

void correct(const RunConfig& cfg) {
    StageRun run(cfg, "correct");
    const Split split = cfg.decode_split;
    const auto vocab = Vocabulary::load(run.input(kVocabFile, "lexicon-build"));
    const auto candidates = read_summaries(run.input(decoded_file(split), "decode"));
    const auto records = load_split(cfg, run, split);
    std::map<std::string, const CorpusRecord*> by_id;
    for (const auto& r : records) by_id[r.id] = &r;

    model::Seq2SeqModel corrector(model_config(cfg, vocab));
    load_selected(run, ModelKind::corrector, corrector.parameters());
    std::vector<nlohmann::ordered_json> rows;
    std::size_t revised = 0;
    for (const auto& c : candidates) {
        auto it = by_id.find(c.id);
        if (it == by_id.end()) throw StageError("correct: decoded id " + c.id + " is not in the corpus split");
        const auto fixed = decoding::correct_summary(corrector, c.text, it->second->document, cfg.decode, vocab);
        const bool changed = corpus::tokenize(fixed) != corpus::tokenize(c.text);
        revised += changed;
        nlohmann::ordered_json j;
        j["id"] = c.id;
        j["summary"] = fixed;
        j["revised"] = changed;
        rows.push_back(std::move(j));
    }
    spdlog::info("correct: revised {} of {}", revised, candidates.size());
    write_jsonl(run.output(corrected_file(split)), rows);
    run.finish();
}

void evaluate(const RunConfig& cfg) {
    StageRun run(cfg, "evaluate");
    const Split split = cfg.decode_split;
    const auto vocab = Vocabulary::load(run.input(kVocabFile, "lexicon-build"));
    const auto mc = model_config(cfg, vocab);
    const auto decoded = read_summaries(run.input(decoded_file(split), "decode"));
    const auto records = load_split(cfg, run, split);
    std::vector<evaluation::IdText> references, documents;
    for (const auto& r : records) {
        if (!r.summary) throw StageError("evaluate: record " + r.id + " has no reference summary");
        references.push_back({r.id, *r.summary});
        documents.push_back({r.id, r.document});
    }

    model::ConsistencyClassifier classifier(mc);
    load_selected(run, ModelKind::classifier, classifier.parameters());
    const evaluation::ConsistencyFn consistency = [&](const std::string& claim, const std::string& text) {
        return model::classify_consistency(classifier, encode(claim, vocab, mc.max_len), encode(text, vocab, mc.max_len));
    };

    const std::string base = cfg.guidance.kind == GuidanceKind::none ? "Seq2seq" : "Guided";
    std::vector<evaluation::EvalReport> reports;
    reports.push_back(evaluation::evaluate_system(decoded, references, documents, consistency, cfg.eval));
    reports.back().model = base;
    reports.back().guidance = guidance_label(cfg.guidance.kind);

    nlohmann::ordered_json j;
    j["config_hash"] = cfg.hash();
    j["split"] = std::string(corpus::split_name(split));
    std::string table;
    if (fs::exists(cfg.paths.output_dir / corrected_file(split))) {
        const auto corrected = read_summaries(run.input(corrected_file(split), "correct"));
        reports.push_back(evaluation::evaluate_system(corrected, references, documents, consistency, cfg.eval));
        reports.back().model = base + " + corrector";
        reports.back().guidance = guidance_label(cfg.guidance.kind);
        const auto diag = evaluation::correction_diagnostics(decoded, corrected);
        j["correction"] = evaluation::diagnostics_json(diag);
        table = evaluation::format_table(reports);
        table += "revised " + std::to_string(diag.revised) + " of " + std::to_string(diag.total) + " summaries\n";
    } else {
        table = evaluation::format_table(reports);
    }
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(evaluation::report_json(r));
    j["reports"] = std::move(arr);

    {
        std::ofstream out(run.output(kReportText), std::ios::trunc);
        out << table;
    }
    {
        std::ofstream out(run.output(kReportJson), std::ios::trunc);
        out << j.dump(2) << '\n';
    }
    std::fputs(table.c_str(), stdout);
    run.finish();
}

void pipeline(const RunConfig& cfg) {
    lexicon_build(cfg);
    guidance_extract(cfg);
    corrupt(cfg);
    train_model(cfg, ModelKind::summarizer);
    train_model(cfg, ModelKind::corrector);
    train_model(cfg, ModelKind::classifier);
    decode(cfg);
    correct(cfg);
    evaluate(cfg);
}

}  // namespace gslb::cli
