#pragma once

// Transformer networks built on the autodiff core: the dual-encoder guided
// summarizer, the single-encoder seq2seq used as corrector and as the
// guidance-free baseline, and the consistency classifier.
//
// Layers are post-LN. Token embeddings are shared by every encoder, the
// decoder input and the output projection. Inputs are processed one example
// at a time with trailing PAD stripped, so no padding masks are needed.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gslb/autodiff.hpp"
#include "gslb/corpus.hpp"
#include "gslb/parameters.hpp"

namespace gslb::model {

using corpus::TokenSequence;

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t shared_bottom_layers = 1;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t ffn_dim = 256;
    std::size_t max_len = corpus::kDefaultMaxLen;
    std::size_t vocab_size = 0;
    ad::Activation activation = ad::Activation::relu;
    ad::Precision float_width = ad::Precision::f32;

    /// Throws std::invalid_argument naming the offending key.
    void validate() const;
};

struct Linear {
    ad::Tensor weight;  // [in, out]
    ad::Tensor bias;    // [out]
};

struct Norm {
    ad::Tensor gain;
    ad::Tensor bias;
};

struct Attention {
    Linear query, key, value, output;
};

struct FeedForward {
    Linear in, out;
};

struct EncoderLayer {
    Attention self;
    Norm self_norm;
    FeedForward ffn;
    Norm ffn_norm;
};

struct DecoderLayer {
    Attention self;
    Norm self_norm;
    bool has_guidance = false;
    Attention guidance;  // unset when has_guidance is false
    Norm guidance_norm;
    Attention document;
    Norm document_norm;
    FeedForward ffn;
    Norm ffn_norm;
};

struct Embeddings {
    ad::Tensor tokens;       // [V, d], also the output projection
    ad::Tensor positions;    // [max_len, d]
    ad::Tensor output_bias;  // [V]
};

/// Strips trailing PAD; throws ShapeError when empty or longer than max_len.
TokenSequence prepare_input(const TokenSequence& ids, std::size_t max_len, const char* what);

enum class EncoderSide { document, guidance };

struct EncoderOutput {
    ad::Tensor document;  // Z_X, [n, d]
    ad::Tensor guidance;  // Z_g, [k, d]
};

class GuidedSummarizer {
public:
    explicit GuidedSummarizer(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ad::ParameterSet& parameters() { return params_; }
    const ad::ParameterSet& parameters() const { return params_; }

    /// Layer i of one encoder; the bottom S layers are the same object for both sides.
    const EncoderLayer& encoder_layer(EncoderSide side, std::size_t i) const;
    const DecoderLayer& decoder_layer(std::size_t i) const { return decoder_[i]; }
    const Embeddings& embeddings() const { return embeddings_; }

    ad::Tensor encode_source(const TokenSequence& x) const;
    ad::Tensor encode_guidance(const TokenSequence& g) const;
    EncoderOutput encode(const TokenSequence& x, const TokenSequence& g) const;

    /// Logits for every prefix position, [len, V].
    ad::Tensor decoder_logits(const TokenSequence& prefix, const EncoderOutput& enc) const;
    /// Next-token logits after the whole prefix, [1, V].
    ad::Tensor decoder_step(const TokenSequence& prefix, const EncoderOutput& enc) const;

private:
    ad::Tensor encode_side(const TokenSequence& ids, EncoderSide side) const;
    ad::Tensor decoder_hidden(const TokenSequence& prefix, const EncoderOutput& enc) const;

    ModelConfig config_;
    ad::ParameterSet params_;
    Embeddings embeddings_;
    std::vector<EncoderLayer> shared_;
    std::vector<EncoderLayer> document_top_;
    std::vector<EncoderLayer> guidance_top_;
    std::vector<DecoderLayer> decoder_;
};

/// Encoder-decoder with one cross-attention per decoder layer.
class Seq2SeqModel {
public:
    explicit Seq2SeqModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ad::ParameterSet& parameters() { return params_; }
    const ad::ParameterSet& parameters() const { return params_; }
    const DecoderLayer& decoder_layer(std::size_t i) const { return decoder_[i]; }

    ad::Tensor encode(const TokenSequence& x) const;
    ad::Tensor decoder_logits(const TokenSequence& prefix, const ad::Tensor& memory) const;
    ad::Tensor decoder_step(const TokenSequence& prefix, const ad::Tensor& memory) const;

private:
    ad::Tensor decoder_hidden(const TokenSequence& prefix, const ad::Tensor& memory) const;

    ModelConfig config_;
    ad::ParameterSet params_;
    Embeddings embeddings_;
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
};

/// Index of CORRECT in the classifier's two logits.
inline constexpr std::int32_t kCorrectClass = 0;
inline constexpr std::int32_t kIncorrectClass = 1;

class ConsistencyClassifier {
public:
    explicit ConsistencyClassifier(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ad::ParameterSet& parameters() { return params_; }
    const ad::ParameterSet& parameters() const { return params_; }

    /// [1, 2] logits from the first position of the encoded input.
    ad::Tensor logits(const TokenSequence& input) const;

private:
    ModelConfig config_;
    ad::ParameterSet params_;
    Embeddings embeddings_;
    std::vector<EncoderLayer> encoder_;
    Linear head_;
};

/// Teacher-forced NLL: summed over target positions, with the position count.
struct NllTerm {
    ad::Tensor sum;
    std::size_t tokens = 0;
};

NllTerm summarizer_nll(const GuidedSummarizer& model, const TokenSequence& x,
                       const TokenSequence& g, const TokenSequence& y);
NllTerm seq2seq_nll(const Seq2SeqModel& model, const TokenSequence& x, const TokenSequence& y);

/// Mean NLL of y (BOS … EOS) given x and guidance.
ad::Tensor summarizer_loss(const GuidedSummarizer& model, const TokenSequence& x,
                           const TokenSequence& g, const TokenSequence& y);

/// Y_corrupt ⧺ [SEP] ⧺ X, cut to max_len.
TokenSequence corrector_input(const TokenSequence& corrupt, const TokenSequence& document,
                              std::size_t max_len);
ad::Tensor corrector_loss(const Seq2SeqModel& model, const TokenSequence& corrupt,
                          const TokenSequence& document, const TokenSequence& clean);

/// BOS ⧺ claim ⧺ [SEP] ⧺ text, cut to max_len. BOS is the pooled position.
TokenSequence classifier_input(const TokenSequence& claim, const TokenSequence& text,
                               std::size_t max_len);
/// Cross-entropy of the label (kCorrectClass or kIncorrectClass).
ad::Tensor classifier_loss(const ConsistencyClassifier& model, const TokenSequence& claim,
                           const TokenSequence& text, std::int32_t label);
/// P(CORRECT).
double classify_consistency(const ConsistencyClassifier& model, const TokenSequence& claim,
                            const TokenSequence& text);

/// BOS ⧺ ids ⧺ EOS.
TokenSequence with_bos_eos(const TokenSequence& ids);

}  // namespace gslb::model
