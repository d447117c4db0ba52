#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gslb::evaluation {

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// F1 from precision and recall; zero when both are zero.
RougeScore make_score(double precision, double recall);

/// Clipped n-gram overlap. Empty candidate or reference scores zero.
RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t n);

/// Longest common subsequence over the whole token sequences.
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Sentence-level union-LCS variant; sentences end at ".", "!" or "?" tokens.
RougeScore rouge_l_union(std::span<const std::string> candidate,
                         std::span<const std::string> reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

enum class RougeLMode { summary, sentence };
enum class ConsistencyMode { mean_probability, accuracy };

RougeLMode parse_rouge_l_mode(const std::string& s);
ConsistencyMode parse_consistency_mode(const std::string& s);
std::string to_string(RougeLMode m);
std::string to_string(ConsistencyMode m);

/// Corpus consistency ×100: mean P(CORRECT), or the share with P ≥ 0.5.
double consistency_score(std::span<const double> probabilities,
                         ConsistencyMode mode = ConsistencyMode::mean_probability);

using ConsistencyFn = std::function<double(const std::string& claim, const std::string& text)>;

struct ClaimText {
    std::string claim;
    std::string text;
};

double consistency_score(const ConsistencyFn& classifier, const std::vector<ClaimText>& outputs,
                         ConsistencyMode mode = ConsistencyMode::mean_probability,
                         std::vector<double>* per_record = nullptr);

struct IdText {
    std::string id;
    std::string text;
};

struct CorrectionDiagnostics {
    std::size_t total = 0;
    std::size_t revised = 0;
    double revised_fraction = 0.0;
    /// New tokens per revised summary, in input order.
    std::vector<std::size_t> new_token_counts;
    std::map<std::size_t, std::size_t> new_token_histogram;
    /// Share of revised summaries with three or fewer new tokens.
    double at_most_three_new_fraction = 0.0;
    double mean_candidate_length = 0.0;
};

/// Tokens of corrected absent (as a multiset) from candidate.
std::size_t new_token_count(std::span<const std::string> candidate,
                            std::span<const std::string> corrected);

CorrectionDiagnostics correction_diagnostics(const std::vector<IdText>& candidates,
                                             const std::vector<IdText>& corrected);

struct ReportRow {
    std::string id;
    RougeScore rouge1;
    RougeScore rouge2;
    RougeScore rougeL;
    double consistency = 0.0;  // P(CORRECT)
};

struct EvalReport {
    std::string model;
    std::string guidance;
    double rouge1 = 0.0;  // mean F1 ×100
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double consistency = 0.0;  // ×100
    ConsistencyMode consistency_mode = ConsistencyMode::mean_probability;
    RougeLMode rouge_l_mode = RougeLMode::summary;
    std::vector<ReportRow> rows;
};

struct EvalOptions {
    RougeLMode rouge_l_mode = RougeLMode::summary;
    ConsistencyMode consistency_mode = ConsistencyMode::mean_probability;
};

/// Scores outputs against references aligned by id. Documents supply the
/// classifier's text side.
EvalReport evaluate_system(const std::vector<IdText>& outputs, const std::vector<IdText>& references,
                           const std::vector<IdText>& documents, const ConsistencyFn& classifier,
                           const EvalOptions& options = {});

/// Table with columns Model, Guidance Signal, Rouge-1, Rouge-2, Rouge-L, FactCC.
std::string format_table(const std::vector<EvalReport>& reports);
nlohmann::ordered_json report_json(const EvalReport& report);
nlohmann::ordered_json diagnostics_json(const CorrectionDiagnostics& d);

}  // namespace gslb::evaluation
