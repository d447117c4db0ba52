#include "gslb/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include "gslb/corpus.hpp"

namespace gslb::evaluation {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
    NgramCounts counts;
    if (n == 0 || tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

bool is_terminator(const std::string& t) { return t == "." || t == "!" || t == "?"; }

std::vector<std::span<const std::string>> sentences(std::span<const std::string> tokens) {
    std::vector<std::span<const std::string>> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (is_terminator(tokens[i])) {
            out.push_back(tokens.subspan(start, i + 1 - start));
            start = i + 1;
        }
    if (start < tokens.size()) out.push_back(tokens.subspan(start));
    return out;
}

// Indices into `a` of one longest common subsequence with `b`.
std::vector<std::size_t> lcs_positions(std::span<const std::string> a,
                                       std::span<const std::string> b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::size_t> dp((n + 1) * (m + 1), 0);
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return dp[i * (m + 1) + j]; };
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = a[i - 1] == b[j - 1] ? at(i - 1, j - 1) + 1
                                            : std::max(at(i - 1, j), at(i, j - 1));
    std::vector<std::size_t> pos;
    for (std::size_t i = n, j = m; i > 0 && j > 0;) {
        if (a[i - 1] == b[j - 1]) {
            pos.push_back(i - 1);
            --i;
            --j;
        } else if (at(i - 1, j) >= at(i, j - 1)) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(pos.begin(), pos.end());
    return pos;
}

std::unordered_map<std::string, const IdText*> index_by_id(const std::vector<IdText>& items,
                                                           const char* what) {
    std::unordered_map<std::string, const IdText*> index;
    for (const auto& it : items)
        if (!index.emplace(it.id, &it).second)
            throw EvaluationError(std::string("duplicate id '") + it.id + "' in " + what);
    return index;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

RougeScore make_score(double precision, double recall) {
    RougeScore s{precision, recall, 0.0};
    if (precision + recall > 0.0) s.f1 = 2.0 * precision * recall / (precision + recall);
    return s;
}

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t n) {
    const auto cand = count_ngrams(candidate, n);
    const auto ref = count_ngrams(reference, n);
    if (cand.empty() || ref.empty()) return {};
    std::size_t overlap = 0, cand_total = 0, ref_total = 0;
    for (const auto& [gram, c] : cand) {
        cand_total += c;
        if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
    }
    for (const auto& [gram, c] : ref) ref_total += c;
    return make_score(static_cast<double>(overlap) / static_cast<double>(cand_total),
                      static_cast<double>(overlap) / static_cast<double>(ref_total));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty()) return {};
    const auto lcs = static_cast<double>(lcs_length(candidate, reference));
    return make_score(lcs / static_cast<double>(candidate.size()),
                      lcs / static_cast<double>(reference.size()));
}

RougeScore rouge_l_union(std::span<const std::string> candidate,
                         std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty()) return {};
    std::unordered_map<std::string, std::size_t> cand_budget, ref_budget;
    for (const auto& t : candidate) ++cand_budget[t];
    for (const auto& t : reference) ++ref_budget[t];
    const auto cand_sents = sentences(candidate);
    std::size_t hits = 0;
    for (auto ref_sent : sentences(reference)) {
        std::vector<bool> in_union(ref_sent.size(), false);
        for (auto cand_sent : cand_sents)
            for (auto p : lcs_positions(ref_sent, cand_sent)) in_union[p] = true;
        for (std::size_t i = 0; i < ref_sent.size(); ++i) {
            if (!in_union[i]) continue;
            auto& c = cand_budget[ref_sent[i]];
            auto& r = ref_budget[ref_sent[i]];
            if (c > 0 && r > 0) {
                --c;
                --r;
                ++hits;
            }
        }
    }
    return make_score(static_cast<double>(hits) / static_cast<double>(candidate.size()),
                      static_cast<double>(hits) / static_cast<double>(reference.size()));
}

RougeLMode parse_rouge_l_mode(const std::string& s) {
    if (s == "summary") return RougeLMode::summary;
    if (s == "sentence") return RougeLMode::sentence;
    throw EvaluationError("unknown ROUGE-L mode '" + s + "' (expected summary or sentence)");
}

ConsistencyMode parse_consistency_mode(const std::string& s) {
    if (s == "mean_probability") return ConsistencyMode::mean_probability;
    if (s == "accuracy") return ConsistencyMode::accuracy;
    throw EvaluationError("unknown consistency mode '" + s +
                          "' (expected mean_probability or accuracy)");
}

std::string to_string(RougeLMode m) { return m == RougeLMode::summary ? "summary" : "sentence"; }

std::string to_string(ConsistencyMode m) {
    return m == ConsistencyMode::mean_probability ? "mean_probability" : "accuracy";
}

double consistency_score(std::span<const double> probabilities, ConsistencyMode mode) {
    if (probabilities.empty()) throw EvaluationError("consistency score of an empty output list");
    double total = 0.0;
    for (double p : probabilities)
        total += mode == ConsistencyMode::mean_probability ? p : (p >= 0.5 ? 1.0 : 0.0);
    return 100.0 * total / static_cast<double>(probabilities.size());
}

double consistency_score(const ConsistencyFn& classifier, const std::vector<ClaimText>& outputs,
                         ConsistencyMode mode, std::vector<double>* per_record) {
    std::vector<double> probs;
    probs.reserve(outputs.size());
    for (const auto& o : outputs) probs.push_back(classifier(o.claim, o.text));
    const double score = consistency_score(probs, mode);
    if (per_record) *per_record = std::move(probs);
    return score;
}

std::size_t new_token_count(std::span<const std::string> candidate,
                            std::span<const std::string> corrected) {
    std::unordered_map<std::string, std::size_t> available;
    for (const auto& t : candidate) ++available[t];
    std::size_t fresh = 0;
    for (const auto& t : corrected) {
        auto& n = available[t];
        if (n > 0)
            --n;
        else
            ++fresh;
    }
    return fresh;
}

CorrectionDiagnostics correction_diagnostics(const std::vector<IdText>& candidates,
                                             const std::vector<IdText>& corrected) {
    if (candidates.size() != corrected.size())
        throw EvaluationError("correction diagnostics: " + std::to_string(candidates.size()) +
                              " candidates vs " + std::to_string(corrected.size()) + " corrections");
    CorrectionDiagnostics d;
    d.total = candidates.size();
    double length_total = 0.0;
    std::size_t small = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].id != corrected[i].id)
            throw EvaluationError("correction diagnostics: id mismatch at row " + std::to_string(i) +
                                  " ('" + candidates[i].id + "' vs '" + corrected[i].id + "')");
        const auto before = corpus::tokenize(candidates[i].text);
        const auto after = corpus::tokenize(corrected[i].text);
        length_total += static_cast<double>(before.size());
        if (before == after) continue;
        ++d.revised;
        const auto fresh = new_token_count(before, after);
        d.new_token_counts.push_back(fresh);
        ++d.new_token_histogram[fresh];
        if (fresh <= 3) ++small;
    }
    if (d.total > 0) {
        d.revised_fraction = static_cast<double>(d.revised) / static_cast<double>(d.total);
        d.mean_candidate_length = length_total / static_cast<double>(d.total);
    }
    if (d.revised > 0)
        d.at_most_three_new_fraction = static_cast<double>(small) / static_cast<double>(d.revised);
    return d;
}

EvalReport evaluate_system(const std::vector<IdText>& outputs, const std::vector<IdText>& references,
                           const std::vector<IdText>& documents, const ConsistencyFn& classifier,
                           const EvalOptions& options) {
    if (outputs.empty()) throw EvaluationError("nothing to evaluate");
    const auto refs = index_by_id(references, "references");
    const auto docs = index_by_id(documents, "documents");
    index_by_id(outputs, "outputs");
    EvalReport report;
    report.consistency_mode = options.consistency_mode;
    report.rouge_l_mode = options.rouge_l_mode;
    std::vector<double> probs;
    for (const auto& out : outputs) {
        auto ref = refs.find(out.id);
        if (ref == refs.end()) throw EvaluationError("no reference for output '" + out.id + "'");
        auto doc = docs.find(out.id);
        if (doc == docs.end()) throw EvaluationError("no document for output '" + out.id + "'");
        const auto cand = corpus::tokenize(out.text);
        const auto gold = corpus::tokenize(ref->second->text);
        ReportRow row{out.id, rouge_n(cand, gold, 1), rouge_n(cand, gold, 2),
                      options.rouge_l_mode == RougeLMode::summary ? rouge_l(cand, gold)
                                                                  : rouge_l_union(cand, gold),
                      classifier ? classifier(out.text, doc->second->text) : 0.0};
        probs.push_back(row.consistency);
        report.rouge1 += row.rouge1.f1;
        report.rouge2 += row.rouge2.f1;
        report.rougeL += row.rougeL.f1;
        report.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(report.rows.size());
    report.rouge1 = 100.0 * report.rouge1 / n;
    report.rouge2 = 100.0 * report.rouge2 / n;
    report.rougeL = 100.0 * report.rougeL / n;
    report.consistency = consistency_score(probs, options.consistency_mode);
    return report;
}

std::string format_table(const std::vector<EvalReport>& reports) {
    const std::vector<std::string> header{"Model", "Guidance Signal", "Rouge-1", "Rouge-2",
                                          "Rouge-L", "FactCC"};
    std::vector<std::vector<std::string>> cells{header};
    for (const auto& r : reports)
        cells.push_back({r.model, r.guidance, fixed(r.rouge1, 3), fixed(r.rouge2, 3),
                         fixed(r.rougeL, 3), fixed(r.consistency, 2)});
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::string out;
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += c ? " | " : "| ";
            out += row[c];
            out.append(width[c] - row[c].size(), ' ');
        }
        out += " |\n";
    };
    line(cells.front());
    for (std::size_t c = 0; c < width.size(); ++c) {
        out += c ? "-|-" : "|-";
        out.append(width[c], '-');
    }
    out += "-|\n";
    for (std::size_t r = 1; r < cells.size(); ++r) line(cells[r]);
    if (!reports.empty())
        out += "FactCC mode: " + to_string(reports.front().consistency_mode) +
               "; ROUGE-L mode: " + to_string(reports.front().rouge_l_mode) + "\n";
    return out;
}

nlohmann::ordered_json report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["model"] = report.model;
    j["guidance"] = report.guidance;
    j["rouge1"] = report.rouge1;
    j["rouge2"] = report.rouge2;
    j["rougeL"] = report.rougeL;
    j["consistency"] = report.consistency;
    j["consistency_mode"] = to_string(report.consistency_mode);
    j["rouge_l_mode"] = to_string(report.rouge_l_mode);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"id", r.id},
                        {"rouge1", r.rouge1.f1},
                        {"rouge2", r.rouge2.f1},
                        {"rougeL", r.rougeL.f1},
                        {"consistency", r.consistency}});
    j["rows"] = std::move(rows);
    return j;
}

nlohmann::ordered_json diagnostics_json(const CorrectionDiagnostics& d) {
    nlohmann::ordered_json j;
    j["total"] = d.total;
    j["revised"] = d.revised;
    j["revised_fraction"] = d.revised_fraction;
    j["at_most_three_new_fraction"] = d.at_most_three_new_fraction;
    j["mean_candidate_length"] = d.mean_candidate_length;
    auto hist = nlohmann::ordered_json::object();
    for (const auto& [k, v] : d.new_token_histogram) hist[std::to_string(k)] = v;
    j["new_token_histogram"] = std::move(hist);
    return j;
}

}  // namespace gslb::evaluation
