#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "gslb/architecture.hpp"
#include "gslb/corpus.hpp"

namespace gslb::decoding {

using corpus::TokenId;
using corpus::TokenSequence;

struct DecodeConfig {
    std::size_t beam = 6;
    std::size_t min_len = 15;
    std::size_t max_len = 200;
    double length_penalty = 1.0;
    bool block_trigrams = true;

    void validate() const;
};

using Trigram = std::array<TokenId, 3>;

struct BeamHypothesis {
    TokenSequence tokens;  // starts with BOS
    double logprob = 0.0;
    bool finished = false;
    std::set<Trigram> trigrams;

    /// Appends a token and records the trigram it closes.
    void push(TokenId t, double token_logprob);
    std::size_t generated() const { return tokens.size() - 1; }
};

BeamHypothesis start_hypothesis();

/// False iff appending candidate repeats a trigram already in hyp.
bool trigram_allowed(const BeamHypothesis& hyp, TokenId candidate);

/// Maps a BOS-initial prefix to next-token logits over the vocabulary.
using StepFn = std::function<std::vector<double>(const TokenSequence& prefix)>;

/// Generated tokens, without BOS and EOS.
TokenSequence beam_search(const StepFn& step, const DecodeConfig& cfg, std::size_t vocab_size);

/// Argmax decoding under the same length and trigram constraints.
TokenSequence greedy_decode(const StepFn& step, const DecodeConfig& cfg, std::size_t vocab_size);

/// Length-normalized score used to rank finished hypotheses.
double normalized_score(double logprob, std::size_t length, double alpha);

/// Closures over a model with its encoder output computed once.
StepFn summarizer_step(const model::GuidedSummarizer& model, const TokenSequence& x,
                       const TokenSequence& g);
StepFn seq2seq_step(const model::Seq2SeqModel& model, const TokenSequence& x);

/// Beam-decodes a corrected summary from candidate ⧺ [SEP] ⧺ document.
/// Minimum length is relaxed to 1.
std::string correct_summary(const model::Seq2SeqModel& corrector, const std::string& candidate,
                            const std::string& document, const DecodeConfig& cfg,
                            const corpus::Vocabulary& vocab);

}  // namespace gslb::decoding
