#include "gslb/architecture.hpp"

#include <cmath>
#include <stdexcept>

namespace gslb::model {

using ad::Init;
using ad::ParameterSet;
using ad::Tensor;

namespace {

Linear make_linear(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out) {
    return {p.add(name + ".w", {in, out}, Init::uniform_fan_in), p.add(name + ".b", {out}, Init::zeros)};
}

Norm make_norm(ParameterSet& p, const std::string& name, std::size_t d) {
    return {p.add(name + ".gain", {d}, Init::ones), p.add(name + ".bias", {d}, Init::zeros)};
}

Attention make_attention(ParameterSet& p, const std::string& name, std::size_t d) {
    return {make_linear(p, name + ".q", d, d), make_linear(p, name + ".k", d, d),
            make_linear(p, name + ".v", d, d), make_linear(p, name + ".o", d, d)};
}

FeedForward make_ffn(ParameterSet& p, const std::string& name, const ModelConfig& c) {
    return {make_linear(p, name + ".in", c.model_dim, c.ffn_dim),
            make_linear(p, name + ".out", c.ffn_dim, c.model_dim)};
}

EncoderLayer make_encoder_layer(ParameterSet& p, const std::string& name, const ModelConfig& c) {
    return {make_attention(p, name + ".self", c.model_dim), make_norm(p, name + ".self_norm", c.model_dim),
            make_ffn(p, name + ".ffn", c), make_norm(p, name + ".ffn_norm", c.model_dim)};
}

DecoderLayer make_decoder_layer(ParameterSet& p, const std::string& name, const ModelConfig& c,
                                bool guided) {
    DecoderLayer l;
    l.self = make_attention(p, name + ".self", c.model_dim);
    l.self_norm = make_norm(p, name + ".self_norm", c.model_dim);
    l.has_guidance = guided;
    if (guided) {
        l.guidance = make_attention(p, name + ".guidance", c.model_dim);
        l.guidance_norm = make_norm(p, name + ".guidance_norm", c.model_dim);
    }
    l.document = make_attention(p, name + ".document", c.model_dim);
    l.document_norm = make_norm(p, name + ".document_norm", c.model_dim);
    l.ffn = make_ffn(p, name + ".ffn", c);
    l.ffn_norm = make_norm(p, name + ".ffn_norm", c.model_dim);
    return l;
}

Embeddings make_embeddings(ParameterSet& p, const ModelConfig& c) {
    return {p.add("embed.tokens", {c.vocab_size, c.model_dim}, Init::normal_embedding),
            p.add("embed.positions", {c.max_len, c.model_dim}, Init::normal_embedding),
            p.add("embed.output_bias", {c.vocab_size}, Init::zeros)};
}

Tensor linear(const Linear& l, const Tensor& x) { return ad::add_bias(ad::matmul(x, l.weight), l.bias); }

Tensor norm(const Norm& n, const Tensor& x) { return ad::layer_norm(x, n.gain, n.bias); }

Tensor attend(const Attention& a, const Tensor& queries, const Tensor& memory,
              const ad::AttentionMask& mask, std::size_t heads) {
    auto q = linear(a.query, queries);
    auto k = linear(a.key, memory);
    auto v = linear(a.value, memory);
    return linear(a.output, ad::multi_head_attention(q, k, v, mask, heads));
}

Tensor feed_forward(const FeedForward& f, const Tensor& x, ad::Activation act) {
    return linear(f.out, ad::activate(linear(f.in, x), act));
}

Tensor run_encoder_layer(const EncoderLayer& l, const Tensor& x, const ModelConfig& c) {
    auto h = norm(l.self_norm, ad::add(x, attend(l.self, x, x, {}, c.heads)));
    return norm(l.ffn_norm, ad::add(h, feed_forward(l.ffn, h, c.activation)));
}

Tensor run_decoder_layer(const DecoderLayer& l, const Tensor& x, const Tensor* guidance,
                         const Tensor& document, const ad::AttentionMask& causal, const ModelConfig& c) {
    auto h = norm(l.self_norm, ad::add(x, attend(l.self, x, x, causal, c.heads)));
    if (l.has_guidance)
        h = norm(l.guidance_norm, ad::add(h, attend(l.guidance, h, *guidance, {}, c.heads)));
    h = norm(l.document_norm, ad::add(h, attend(l.document, h, document, {}, c.heads)));
    return norm(l.ffn_norm, ad::add(h, feed_forward(l.ffn, h, c.activation)));
}

Tensor embed(const Embeddings& e, const TokenSequence& ids) {
    return ad::add(ad::embedding(e.tokens, ids), ad::slice_rows(e.positions, 0, ids.size()));
}

Tensor project(const Embeddings& e, const Tensor& hidden) {
    return ad::add_bias(ad::matmul_nt(hidden, e.tokens), e.output_bias);
}

void check_prefix(const TokenSequence& prefix, const ModelConfig& c) {
    if (prefix.empty()) throw ad::ShapeError("decoder: empty prefix");
    if (prefix.front() != corpus::Vocabulary::bos)
        throw ad::ShapeError("decoder: prefix must begin with BOS");
    if (prefix.size() > c.max_len)
        throw ad::ShapeError("decoder: prefix of " + std::to_string(prefix.size()) +
                             " tokens exceeds max_len " + std::to_string(c.max_len));
}

Tensor last_row(const Tensor& t) { return ad::slice_rows(t, t.rows() - 1, t.rows()); }

void check_target(const TokenSequence& y) {
    if (y.size() < 2 || y.front() != corpus::Vocabulary::bos || y.back() != corpus::Vocabulary::eos)
        throw ad::ShapeError("target must begin with BOS, end with EOS and hold at least both");
}

// Splits BOS … EOS into decoder input and shifted targets; PAD targets are ignored.
std::pair<TokenSequence, std::vector<std::int32_t>> teacher_forcing(const TokenSequence& y) {
    check_target(y);
    TokenSequence input(y.begin(), y.end() - 1);
    std::vector<std::int32_t> targets(y.begin() + 1, y.end());
    return {std::move(input), std::move(targets)};
}

std::size_t counted(const std::vector<std::int32_t>& targets) {
    std::size_t n = 0;
    for (auto t : targets) n += t != corpus::Vocabulary::pad;
    return n;
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("model." + key + ": " + why);
    };
    if (layers == 0) fail("layers", "must be positive");
    if (shared_bottom_layers > layers) fail("shared_bottom_layers", "must not exceed layers");
    if (model_dim == 0) fail("model_dim", "must be positive");
    if (heads == 0 || model_dim % heads != 0) fail("heads", "must divide model_dim");
    if (ffn_dim == 0) fail("ffn_dim", "must be positive");
    if (max_len < 2) fail("max_len", "must be at least 2");
    if (vocab_size <= corpus::Vocabulary::sep) fail("vocab_size", "must cover the reserved tokens");
}

TokenSequence prepare_input(const TokenSequence& ids, std::size_t max_len, const char* what) {
    auto out = corpus::strip_padding(ids);
    if (out.empty()) throw ad::ShapeError(std::string(what) + ": empty input");
    if (out.size() > max_len)
        throw ad::ShapeError(std::string(what) + ": " + std::to_string(out.size()) +
                             " tokens exceed max_len " + std::to_string(max_len));
    return out;
}

// ---- GuidedSummarizer ----

GuidedSummarizer::GuidedSummarizer(const ModelConfig& config) : config_(config) {
    config_.validate();
    embeddings_ = make_embeddings(params_, config_);
    const std::size_t s = config_.shared_bottom_layers;
    for (std::size_t i = 0; i < s; ++i)
        shared_.push_back(make_encoder_layer(params_, "enc.shared." + std::to_string(i), config_));
    for (std::size_t i = s; i < config_.layers; ++i) {
        document_top_.push_back(make_encoder_layer(params_, "enc.document." + std::to_string(i), config_));
        guidance_top_.push_back(make_encoder_layer(params_, "enc.guidance." + std::to_string(i), config_));
    }
    for (std::size_t i = 0; i < config_.layers; ++i)
        decoder_.push_back(make_decoder_layer(params_, "dec." + std::to_string(i), config_, true));
}

const EncoderLayer& GuidedSummarizer::encoder_layer(EncoderSide side, std::size_t i) const {
    if (i >= config_.layers) throw std::out_of_range("encoder layer " + std::to_string(i));
    if (i < shared_.size()) return shared_[i];
    const auto& top = side == EncoderSide::document ? document_top_ : guidance_top_;
    return top[i - shared_.size()];
}

Tensor GuidedSummarizer::encode_side(const TokenSequence& ids, EncoderSide side) const {
    const auto x = prepare_input(ids, config_.max_len,
                                 side == EncoderSide::document ? "encode_source" : "encode_guidance");
    Tensor h = embed(embeddings_, x);
    for (std::size_t i = 0; i < config_.layers; ++i) h = run_encoder_layer(encoder_layer(side, i), h, config_);
    return h;
}

Tensor GuidedSummarizer::encode_source(const TokenSequence& x) const {
    return encode_side(x, EncoderSide::document);
}

Tensor GuidedSummarizer::encode_guidance(const TokenSequence& g) const {
    return encode_side(g, EncoderSide::guidance);
}

EncoderOutput GuidedSummarizer::encode(const TokenSequence& x, const TokenSequence& g) const {
    return {encode_source(x), encode_guidance(g)};
}

Tensor GuidedSummarizer::decoder_hidden(const TokenSequence& prefix, const EncoderOutput& enc) const {
    check_prefix(prefix, config_);
    const auto causal = ad::AttentionMask::causal(prefix.size());
    Tensor h = embed(embeddings_, prefix);
    for (const auto& l : decoder_) h = run_decoder_layer(l, h, &enc.guidance, enc.document, causal, config_);
    return h;
}

Tensor GuidedSummarizer::decoder_logits(const TokenSequence& prefix, const EncoderOutput& enc) const {
    return project(embeddings_, decoder_hidden(prefix, enc));
}

Tensor GuidedSummarizer::decoder_step(const TokenSequence& prefix, const EncoderOutput& enc) const {
    return project(embeddings_, last_row(decoder_hidden(prefix, enc)));
}

// ---- Seq2SeqModel ----

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    embeddings_ = make_embeddings(params_, config_);
    for (std::size_t i = 0; i < config_.layers; ++i)
        encoder_.push_back(make_encoder_layer(params_, "enc." + std::to_string(i), config_));
    for (std::size_t i = 0; i < config_.layers; ++i)
        decoder_.push_back(make_decoder_layer(params_, "dec." + std::to_string(i), config_, false));
}

Tensor Seq2SeqModel::encode(const TokenSequence& ids) const {
    Tensor h = embed(embeddings_, prepare_input(ids, config_.max_len, "encode"));
    for (const auto& l : encoder_) h = run_encoder_layer(l, h, config_);
    return h;
}

Tensor Seq2SeqModel::decoder_hidden(const TokenSequence& prefix, const Tensor& memory) const {
    check_prefix(prefix, config_);
    const auto causal = ad::AttentionMask::causal(prefix.size());
    Tensor h = embed(embeddings_, prefix);
    for (const auto& l : decoder_) h = run_decoder_layer(l, h, nullptr, memory, causal, config_);
    return h;
}

Tensor Seq2SeqModel::decoder_logits(const TokenSequence& prefix, const Tensor& memory) const {
    return project(embeddings_, decoder_hidden(prefix, memory));
}

Tensor Seq2SeqModel::decoder_step(const TokenSequence& prefix, const Tensor& memory) const {
    return project(embeddings_, last_row(decoder_hidden(prefix, memory)));
}

// ---- ConsistencyClassifier ----

ConsistencyClassifier::ConsistencyClassifier(const ModelConfig& config) : config_(config) {
    config_.validate();
    embeddings_ = make_embeddings(params_, config_);
    for (std::size_t i = 0; i < config_.layers; ++i)
        encoder_.push_back(make_encoder_layer(params_, "enc." + std::to_string(i), config_));
    head_ = {params_.add("head.w", {config_.model_dim, 2}, Init::zeros),
             params_.add("head.b", {2}, Init::zeros)};
}

Tensor ConsistencyClassifier::logits(const TokenSequence& input) const {
    Tensor h = embed(embeddings_, prepare_input(input, config_.max_len, "classify"));
    for (const auto& l : encoder_) h = run_encoder_layer(l, h, config_);
    return linear(head_, ad::slice_rows(h, 0, 1));
}

// ---- losses ----

NllTerm summarizer_nll(const GuidedSummarizer& model, const TokenSequence& x,
                       const TokenSequence& g, const TokenSequence& y) {
    auto [input, targets] = teacher_forcing(y);
    const auto enc = model.encode(x, g);
    return {ad::cross_entropy_sum(model.decoder_logits(input, enc), targets, corpus::Vocabulary::pad),
            counted(targets)};
}

NllTerm seq2seq_nll(const Seq2SeqModel& model, const TokenSequence& x, const TokenSequence& y) {
    auto [input, targets] = teacher_forcing(y);
    const auto memory = model.encode(x);
    return {ad::cross_entropy_sum(model.decoder_logits(input, memory), targets, corpus::Vocabulary::pad),
            counted(targets)};
}

Tensor summarizer_loss(const GuidedSummarizer& model, const TokenSequence& x, const TokenSequence& g,
                       const TokenSequence& y) {
    auto t = summarizer_nll(model, x, g, y);
    return ad::scale(t.sum, 1.0 / static_cast<double>(t.tokens));
}

TokenSequence corrector_input(const TokenSequence& corrupt, const TokenSequence& document,
                              std::size_t max_len) {
    TokenSequence out = corpus::strip_padding(corrupt);
    out.push_back(corpus::Vocabulary::sep);
    const auto doc = corpus::strip_padding(document);
    out.insert(out.end(), doc.begin(), doc.end());
    if (out.size() > max_len) out.resize(max_len);
    return out;
}

Tensor corrector_loss(const Seq2SeqModel& model, const TokenSequence& corrupt,
                      const TokenSequence& document, const TokenSequence& clean) {
    auto t = seq2seq_nll(model, corrector_input(corrupt, document, model.config().max_len), clean);
    return ad::scale(t.sum, 1.0 / static_cast<double>(t.tokens));
}

TokenSequence classifier_input(const TokenSequence& claim, const TokenSequence& text,
                               std::size_t max_len) {
    TokenSequence out{corpus::Vocabulary::bos};
    const auto c = corpus::strip_padding(claim);
    out.insert(out.end(), c.begin(), c.end());
    out.push_back(corpus::Vocabulary::sep);
    const auto t = corpus::strip_padding(text);
    out.insert(out.end(), t.begin(), t.end());
    if (out.size() > max_len) out.resize(max_len);
    return out;
}

Tensor classifier_loss(const ConsistencyClassifier& model, const TokenSequence& claim,
                       const TokenSequence& text, std::int32_t label) {
    if (label != kCorrectClass && label != kIncorrectClass)
        throw std::invalid_argument("classifier label must be 0 or 1");
    const std::int32_t target[1] = {label};
    return ad::cross_entropy_sum(model.logits(classifier_input(claim, text, model.config().max_len)),
                                 target);
}

double classify_consistency(const ConsistencyClassifier& model, const TokenSequence& claim,
                            const TokenSequence& text) {
    ad::NoGradGuard guard;
    const auto out = model.logits(classifier_input(claim, text, model.config().max_len));
    const auto logits = out.values();
    const double diff = logits[kIncorrectClass] - logits[kCorrectClass];
    return 1.0 / (1.0 + std::exp(diff));
}

TokenSequence with_bos_eos(const TokenSequence& ids) {
    TokenSequence out{corpus::Vocabulary::bos};
    const auto body = corpus::strip_padding(ids);
    out.insert(out.end(), body.begin(), body.end());
    out.push_back(corpus::Vocabulary::eos);
    return out;
}

}  // namespace gslb::model
