#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gslb/architecture.hpp"
#include "gslb/corpus.hpp"
#include "gslb/decoding.hpp"
#include "gslb/evaluation.hpp"
#include "gslb/guidance.hpp"
#include "gslb/training.hpp"

namespace gslb::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Paths {
    /// Holds train.jsonl, validation.jsonl and optionally test.jsonl.
    std::filesystem::path corpus_dir;
    std::filesystem::path terminology;
    std::filesystem::path output_dir;
};

struct GuidanceSettings {
    guidance::GuidanceKind kind = guidance::GuidanceKind::sentences;
    std::string term_column{lexicon::kDefaultTermColumn};
    std::size_t oracle_sentences = guidance::kDefaultOracleSentences;
};

struct RunConfig {
    Paths paths;
    /// Paths as spelled in the file; these enter the hash, not the resolved ones.
    Paths written;
    GuidanceSettings guidance;
    model::ModelConfig model;
    std::size_t vocab_min_count = 1;
    std::size_t vocab_max_size = 0;
    std::map<training::ModelKind, training::TrainConfig> train;
    decoding::DecodeConfig decode;
    corpus::Split decode_split = corpus::Split::test;
    evaluation::EvalOptions eval;
    training::Profile profile = training::Profile::desk;
    std::uint64_t seed = 1;

    /// Every setting after defaults, file values and overrides are applied.
    nlohmann::ordered_json effective() const;
    /// SHA-256 of the canonical effective configuration.
    std::string hash() const;
};

/// Reads a TOML run configuration. Relative paths resolve against the file's
/// directory. A GSLB_SEED value, when given, replaces the configured seed.
RunConfig load_run_config(const std::filesystem::path& path, training::Profile profile,
                          const std::optional<std::string>& seed_override = std::nullopt);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gslb::cli
