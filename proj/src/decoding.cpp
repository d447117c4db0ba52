#include "gslb/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace gslb::decoding {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> log_softmax(const std::vector<double>& logits) {
    double mx = kNegInf;
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
    return out;
}

// Log-probabilities with EOS and blocked tokens set to -inf.
std::vector<double> constrained_scores(const BeamHypothesis& hyp, const std::vector<double>& logits,
                                       const DecodeConfig& cfg, bool& any_allowed) {
    auto lp = log_softmax(logits);
    const auto eos = corpus::Vocabulary::eos;
    const std::size_t n = hyp.generated();
    if (n >= cfg.max_len) {
        for (std::size_t t = 0; t < lp.size(); ++t)
            if (static_cast<TokenId>(t) != eos) lp[t] = kNegInf;
        any_allowed = true;
        return lp;
    }
    if (n < cfg.min_len) lp[eos] = kNegInf;
    lp[corpus::Vocabulary::pad] = kNegInf;
    lp[corpus::Vocabulary::bos] = kNegInf;
    if (cfg.block_trigrams)
        for (std::size_t t = 0; t < lp.size(); ++t)
            if (lp[t] != kNegInf && !trigram_allowed(hyp, static_cast<TokenId>(t))) lp[t] = kNegInf;
    any_allowed = std::any_of(lp.begin(), lp.end(), [](double v) { return v != kNegInf; });
    return lp;
}

// Best token when every candidate is blocked: the top unblocked choice.
TokenId fallback_token(const BeamHypothesis& hyp, const std::vector<double>& logits,
                       const DecodeConfig& cfg) {
    auto relaxed = cfg;
    relaxed.block_trigrams = false;
    bool any = false;
    auto lp = constrained_scores(hyp, logits, relaxed, any);
    spdlog::warn("decoding: every candidate blocked after {} tokens; taking the unblocked top-1",
                 hyp.generated());
    return static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

std::vector<double> checked_logits(const StepFn& step, const TokenSequence& prefix,
                                   std::size_t vocab_size) {
    auto logits = step(prefix);
    if (logits.size() != vocab_size)
        throw std::invalid_argument("decoding: step returned " + std::to_string(logits.size()) +
                                    " logits for a vocabulary of " + std::to_string(vocab_size));
    return logits;
}

TokenSequence strip(const BeamHypothesis& h) {
    TokenSequence out(h.tokens.begin() + 1, h.tokens.end());
    if (!out.empty() && out.back() == corpus::Vocabulary::eos) out.pop_back();
    return out;
}

}  // namespace

void DecodeConfig::validate() const {
    if (beam < 1) throw std::invalid_argument("decode.beam must be at least 1");
    if (min_len < 1) throw std::invalid_argument("decode.min_len must be at least 1");
    if (max_len < min_len) throw std::invalid_argument("decode.max_len must be >= decode.min_len");
    if (!(length_penalty >= 0.0)) throw std::invalid_argument("decode.length_penalty must be >= 0");
}

void BeamHypothesis::push(TokenId t, double token_logprob) {
    tokens.push_back(t);
    logprob += token_logprob;
    const std::size_t n = tokens.size();
    if (n >= 4) trigrams.insert({tokens[n - 3], tokens[n - 2], tokens[n - 1]});
    if (t == corpus::Vocabulary::eos) finished = true;
}

BeamHypothesis start_hypothesis() { return {{corpus::Vocabulary::bos}, 0.0, false, {}}; }

bool trigram_allowed(const BeamHypothesis& hyp, TokenId candidate) {
    const auto& t = hyp.tokens;
    // Trigrams never include BOS; generated tokens start at index 1.
    if (t.size() < 3) return true;
    return hyp.trigrams.count({t[t.size() - 2], t[t.size() - 1], candidate}) == 0;
}

double normalized_score(double logprob, std::size_t length, double alpha) {
    return logprob / std::pow(static_cast<double>(length), alpha);
}

TokenSequence greedy_decode(const StepFn& step, const DecodeConfig& cfg, std::size_t vocab_size) {
    cfg.validate();
    auto hyp = start_hypothesis();
    while (!hyp.finished) {
        const auto logits = checked_logits(step, hyp.tokens, vocab_size);
        bool any = false;
        auto lp = constrained_scores(hyp, logits, cfg, any);
        TokenId best;
        if (any) {
            best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        } else {
            best = fallback_token(hyp, logits, cfg);
            lp = log_softmax(logits);
        }
        hyp.push(best, lp[best]);
    }
    return strip(hyp);
}

TokenSequence beam_search(const StepFn& step, const DecodeConfig& cfg, std::size_t vocab_size) {
    cfg.validate();
    struct Candidate {
        std::size_t parent;
        TokenId token;
        double logprob;  // cumulative
        double token_logprob;
    };
    auto candidate_less = [](const Candidate& a, const Candidate& b, const TokenSequence& pa,
                             const TokenSequence& pb) {
        if (a.logprob != b.logprob) return a.logprob > b.logprob;
        if (pa != pb) return pa < pb;
        return a.token < b.token;
    };

    std::vector<BeamHypothesis> live{start_hypothesis()};
    std::vector<BeamHypothesis> finished;
    while (!live.empty() && finished.size() < cfg.beam) {
        std::vector<Candidate> cands;
        std::vector<std::vector<double>> raw(live.size());
        for (std::size_t i = 0; i < live.size(); ++i) {
            raw[i] = checked_logits(step, live[i].tokens, vocab_size);
            bool any = false;
            const auto lp = constrained_scores(live[i], raw[i], cfg, any);
            for (std::size_t t = 0; t < lp.size(); ++t)
                if (lp[t] != kNegInf)
                    cands.push_back({i, static_cast<TokenId>(t), live[i].logprob + lp[t], lp[t]});
        }
        if (cands.empty()) {
            const auto t = fallback_token(live.front(), raw.front(), cfg);
            const double lp = log_softmax(raw.front())[t];
            cands.push_back({0, t, live.front().logprob + lp, lp});
        }
        const std::size_t keep = std::min(cands.size(), 2 * cfg.beam);
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                          [&](const Candidate& a, const Candidate& b) {
                              return candidate_less(a, b, live[a.parent].tokens, live[b.parent].tokens);
                          });
        std::vector<BeamHypothesis> next;
        for (std::size_t r = 0; r < keep && next.size() < cfg.beam; ++r) {
            const auto& c = cands[r];
            auto h = live[c.parent];
            h.push(c.token, c.token_logprob);
            if (h.finished) {
                if (r < cfg.beam) finished.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }

    auto score = [&](const BeamHypothesis& h) {
        return normalized_score(h.logprob, h.generated(), cfg.length_penalty);
    };
    if (finished.empty()) throw std::logic_error("beam search ended without a finished hypothesis");
    const auto best = std::min_element(finished.begin(), finished.end(),
                                       [&](const BeamHypothesis& a, const BeamHypothesis& b) {
                                           const double sa = score(a), sb = score(b);
                                           if (sa != sb) return sa > sb;
                                           return a.tokens < b.tokens;
                                       });
    return strip(*best);
}

StepFn summarizer_step(const model::GuidedSummarizer& model, const TokenSequence& x,
                       const TokenSequence& g) {
    ad::NoGradGuard guard;
    auto enc = std::make_shared<model::EncoderOutput>(model.encode(x, g));
    return [&model, enc](const TokenSequence& prefix) {
        ad::NoGradGuard inner;
        const auto out = model.decoder_step(prefix, *enc);
        const auto v = out.values();
        return std::vector<double>(v.begin(), v.end());
    };
}

StepFn seq2seq_step(const model::Seq2SeqModel& model, const TokenSequence& x) {
    ad::NoGradGuard guard;
    auto memory = std::make_shared<ad::Tensor>(model.encode(x));
    return [&model, memory](const TokenSequence& prefix) {
        ad::NoGradGuard inner;
        const auto out = model.decoder_step(prefix, *memory);
        const auto v = out.values();
        return std::vector<double>(v.begin(), v.end());
    };
}

std::string correct_summary(const model::Seq2SeqModel& corrector, const std::string& candidate,
                            const std::string& document, const DecodeConfig& cfg,
                            const corpus::Vocabulary& vocab) {
    const auto max_len = corrector.config().max_len;
    const auto doc = corpus::encode_text(document, vocab, max_len);
    if (doc.empty()) throw std::invalid_argument("correct_summary: empty document");
    const auto input =
        model::corrector_input(corpus::encode_text(candidate, vocab, max_len), doc, max_len);
    auto relaxed = cfg;
    relaxed.min_len = 1;
    relaxed.max_len = std::min(cfg.max_len, max_len - 2);
    relaxed.validate();
    return corpus::decode_ids(beam_search(seq2seq_step(corrector, input), relaxed, vocab.size()), vocab);
}

}  // namespace gslb::decoding
