#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "run_config.hpp"

namespace gslb::cli {

/// A stage could not run; the message names what is missing and who makes it.
class StageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Artifact layout under paths.output_dir.
inline const std::filesystem::path kLexiconFile = "lexicon.txt";
inline const std::filesystem::path kVocabFile = "vocab.txt";
inline const std::filesystem::path kGuidanceDir = "guidance";
inline const std::filesystem::path kCorruptionDir = "corruption";
inline const std::filesystem::path kCheckpointDir = "checkpoints";
inline const std::filesystem::path kLogDir = "logs";
inline const std::filesystem::path kMetaDir = "meta";
inline const std::filesystem::path kReportText = "report.txt";
inline const std::filesystem::path kReportJson = "report.json";

std::filesystem::path decoded_file(corpus::Split split);
std::filesystem::path corrected_file(corpus::Split split);
std::filesystem::path selected_file(training::ModelKind kind);

nlohmann::ordered_json library_versions();

void lexicon_build(const RunConfig& cfg);
void guidance_extract(const RunConfig& cfg);
void corrupt(const RunConfig& cfg);
void train_model(const RunConfig& cfg, training::ModelKind kind);
void decode(const RunConfig& cfg);
void correct(const RunConfig& cfg);
void evaluate(const RunConfig& cfg);
/// Every stage in order, then the before/after-correction report.
void pipeline(const RunConfig& cfg);

}  // namespace gslb::cli
