#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "gslb/architecture.hpp"
#include "gslb/decoding.hpp"
#include "gslb/parameters.hpp"

namespace gslb::training {

using corpus::TokenSequence;

enum class ModelKind { summarizer, corrector, classifier };
std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

enum class Profile { paper, desk };
Profile parse_profile(const std::string& s);

struct TrainConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double weight_decay = 0.01;
    double eps = 1e-8;
    std::size_t update_freq = 4;
    std::size_t max_tokens = 1024;
    std::size_t max_updates = 10000;
    std::size_t epochs = 5;
    std::uint64_t seed = 1;
    /// Greedy decoding bounds for the validation ROUGE-L.
    decoding::DecodeConfig validation_decode{1, 1, 200, 1.0, true};

    /// Full-scale defaults, or the desk profile (lr 1e-3, 256 tokens per batch).
    static TrainConfig defaults(Profile profile, ModelKind kind);
    void validate() const;
};

struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    explicit OptimizerState(const ad::ParameterSet& params);
};

/// Decoupled-weight-decay Adam on the gradients held by the parameters.
/// Throws NonFiniteError on a non-finite gradient, leaving parameters untouched.
void adamw_step(ad::ParameterSet& params, OptimizerState& state, const TrainConfig& cfg);

/// One training or validation item. Generation targets are BOS … EOS;
/// classifier items carry a label and no target.
struct Example {
    std::string id;
    TokenSequence source;
    TokenSequence guidance;
    TokenSequence target;
    std::int32_t label = -1;

    std::size_t tokens() const { return source.size() + guidance.size() + target.size(); }
};

enum class MetricKind { rouge_l, loss };
std::string to_string(MetricKind k);

/// Uniform view of the three networks for the training loop.
class Trainable {
public:
    static Trainable summarizer(model::GuidedSummarizer& m) { return Trainable(&m); }
    static Trainable seq2seq(model::Seq2SeqModel& m) { return Trainable(&m); }
    static Trainable classifier(model::ConsistencyClassifier& m) { return Trainable(&m); }

    ad::ParameterSet& parameters();
    const model::ModelConfig& config() const;
    model::NllTerm nll(const Example& ex) const;
    TokenSequence greedy(const Example& ex, const decoding::DecodeConfig& cfg) const;
    MetricKind metric_kind() const;

private:
    using Ptr = std::variant<model::GuidedSummarizer*, model::Seq2SeqModel*, model::ConsistencyClassifier*>;
    explicit Trainable(Ptr p) : model_(p) {}
    Ptr model_;
};

struct Checkpoint {
    std::filesystem::path path;  // empty when kept in memory only
    std::size_t epoch = 0;
    std::uint64_t step = 0;
    double metric = 0.0;
    MetricKind metric_kind = MetricKind::loss;
};

/// Greedy token-budget packing of examples taken in `order`. An example over
/// budget forms its own batch.
std::vector<std::vector<std::size_t>> pack_batches(const std::vector<Example>& examples,
                                                   const std::vector<std::size_t>& order,
                                                   std::size_t max_tokens);

/// Mean ROUGE-L F1 of greedy decodes, or mean loss for the classifier.
double validation_metric(Trainable& model, const std::vector<Example>& validation,
                         const decoding::DecodeConfig& decode);

struct TrainOutputs {
    /// Checkpoints are written as ck_{kind}_{epoch}.bin here when non-empty.
    std::filesystem::path checkpoint_dir;
    /// JSON Lines {step, loss, lr, tokens}, truncated at start, when non-empty.
    std::filesystem::path log_path;
    std::string kind = "model";
};

/// Trains until max_updates or epochs, whichever comes first, with one
/// checkpoint per (possibly partial) epoch.
std::vector<Checkpoint> train(Trainable model, const std::vector<Example>& train_set,
                              const std::vector<Example>& validation_set, const TrainConfig& cfg,
                              const TrainOutputs& outputs = {});

/// Highest ROUGE-L or lowest loss; ties go to the earliest.
Checkpoint select_checkpoint(const std::vector<Checkpoint>& checkpoints, MetricKind kind);

/// Reads the sidecar written next to a checkpoint.
Checkpoint read_checkpoint_info(const std::filesystem::path& bin_path);

}  // namespace gslb::training
