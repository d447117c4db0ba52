#include "gslb/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "gslb/evaluation.hpp"

namespace gslb::training {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::string> as_words(const TokenSequence& ids) {
    std::vector<std::string> out;
    for (auto id : ids)
        if (id != corpus::Vocabulary::bos && id != corpus::Vocabulary::eos &&
            id != corpus::Vocabulary::pad)
            out.push_back(std::to_string(id));
    return out;
}

void write_sidecar(const std::filesystem::path& bin, const std::string& kind, const Checkpoint& c) {
    nlohmann::ordered_json j;
    j["kind"] = kind;
    j["epoch"] = c.epoch;
    j["step"] = c.step;
    j["metric"] = c.metric;
    j["metric_kind"] = to_string(c.metric_kind);
    auto side = bin;
    side.replace_extension(".json");
    std::ofstream out(side, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + side.string());
    out << j.dump(2) << '\n';
}

}  // namespace

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::summarizer:
            return "summarizer";
        case ModelKind::corrector:
            return "corrector";
        case ModelKind::classifier:
            return "classifier";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "summarizer") return ModelKind::summarizer;
    if (s == "corrector") return ModelKind::corrector;
    if (s == "classifier") return ModelKind::classifier;
    throw std::invalid_argument("unknown model kind '" + s +
                                "' (expected summarizer, corrector or classifier)");
}

Profile parse_profile(const std::string& s) {
    if (s == "paper") return Profile::paper;
    if (s == "desk") return Profile::desk;
    throw std::invalid_argument("unknown profile '" + s + "' (expected paper or desk)");
}

std::string to_string(MetricKind k) { return k == MetricKind::rouge_l ? "rouge_l" : "loss"; }

TrainConfig TrainConfig::defaults(Profile profile, ModelKind kind) {
    TrainConfig c;
    c.epochs = kind == ModelKind::summarizer ? 5 : 10;
    if (profile == Profile::desk) {
        c.lr = 1e-3;
        c.max_tokens = 256;
    }
    return c;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
        throw std::invalid_argument("train." + key + ": " + why);
    };
    if (!(lr > 0)) fail("lr", "must be positive");
    if (!(beta1 > 0 && beta1 < 1)) fail("beta1", "must lie in (0, 1)");
    if (!(beta2 > 0 && beta2 < 1)) fail("beta2", "must lie in (0, 1)");
    if (!(weight_decay >= 0)) fail("weight_decay", "must be non-negative");
    if (!(eps > 0)) fail("eps", "must be positive");
    if (update_freq == 0) fail("update_freq", "must be positive");
    if (max_tokens == 0) fail("max_tokens", "must be positive");
    if (max_updates == 0) fail("max_updates", "must be positive");
    if (epochs == 0) fail("epochs", "must be positive");
    validation_decode.validate();
}

OptimizerState::OptimizerState(const ad::ParameterSet& params) {
    for (const auto& e : params.entries()) {
        m.emplace_back(e.tensor.size(), 0.0);
        v.emplace_back(e.tensor.size(), 0.0);
    }
}

void adamw_step(ad::ParameterSet& params, OptimizerState& state, const TrainConfig& cfg) {
    const auto& entries = params.entries();
    if (state.m.size() != entries.size())
        throw std::logic_error("adamw_step: optimizer state does not match the parameter set");
    for (const auto& e : entries) {
        if (!e.tensor.has_grad()) continue;
        for (double g : e.tensor.grad())
            if (!std::isfinite(g)) throw ad::NonFiniteError("adamw_step: non-finite gradient in " + e.name);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        ad::Tensor tensor = entries[i].tensor;
        auto theta = tensor.mutable_values();
        const bool has = tensor.has_grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double g = has ? tensor.grad()[j] : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            theta[j] = ad::quantize(theta[j] - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                                         cfg.weight_decay * theta[j]));
        }
    }
}

// ---- Trainable ----

ad::ParameterSet& Trainable::parameters() {
    return std::visit([](auto* m) -> ad::ParameterSet& { return m->parameters(); }, model_);
}

const model::ModelConfig& Trainable::config() const {
    return std::visit([](auto* m) -> const model::ModelConfig& { return m->config(); }, model_);
}

model::NllTerm Trainable::nll(const Example& ex) const {
    return std::visit(
        overloaded{
            [&](model::GuidedSummarizer* m) { return model::summarizer_nll(*m, ex.source, ex.guidance, ex.target); },
            [&](model::Seq2SeqModel* m) { return model::seq2seq_nll(*m, ex.source, ex.target); },
            [&](model::ConsistencyClassifier* m) {
                if (ex.label != model::kCorrectClass && ex.label != model::kIncorrectClass)
                    throw std::invalid_argument("classifier example '" + ex.id + "' has no label");
                const std::int32_t target[1] = {ex.label};
                return model::NllTerm{ad::cross_entropy_sum(m->logits(ex.source), target), 1};
            }},
        model_);
}

TokenSequence Trainable::greedy(const Example& ex, const decoding::DecodeConfig& cfg) const {
    return std::visit(
        overloaded{[&](model::GuidedSummarizer* m) {
                       return decoding::greedy_decode(decoding::summarizer_step(*m, ex.source, ex.guidance),
                                                      cfg, m->config().vocab_size);
                   },
                   [&](model::Seq2SeqModel* m) {
                       return decoding::greedy_decode(decoding::seq2seq_step(*m, ex.source), cfg,
                                                      m->config().vocab_size);
                   },
                   [&](model::ConsistencyClassifier*) -> TokenSequence {
                       throw std::logic_error("the classifier does not generate");
                   }},
        model_);
}

MetricKind Trainable::metric_kind() const {
    return std::holds_alternative<model::ConsistencyClassifier*>(model_) ? MetricKind::loss
                                                                          : MetricKind::rouge_l;
}

// ---- loop ----

std::vector<std::vector<std::size_t>> pack_batches(const std::vector<Example>& examples,
                                                   const std::vector<std::size_t>& order,
                                                   std::size_t max_tokens) {
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> current;
    std::size_t used = 0;
    for (auto i : order) {
        const auto n = examples[i].tokens();
        if (!current.empty() && used + n > max_tokens) {
            batches.push_back(std::move(current));
            current.clear();
            used = 0;
        }
        current.push_back(i);
        used += n;
    }
    if (!current.empty()) batches.push_back(std::move(current));
    return batches;
}

double validation_metric(Trainable& model, const std::vector<Example>& validation,
                         const decoding::DecodeConfig& decode) {
    if (validation.empty()) throw std::invalid_argument("validation split is empty");
    double total = 0.0;
    if (model.metric_kind() == MetricKind::loss) {
        ad::NoGradGuard guard;
        for (const auto& ex : validation) {
            auto t = model.nll(ex);
            total += t.sum.item() / static_cast<double>(t.tokens);
        }
    } else {
        for (const auto& ex : validation) {
            const auto out = as_words(model.greedy(ex, decode));
            total += evaluation::rouge_l(out, as_words(ex.target)).f1;
        }
    }
    return total / static_cast<double>(validation.size());
}

std::vector<Checkpoint> train(Trainable model, const std::vector<Example>& train_set,
                              const std::vector<Example>& validation_set, const TrainConfig& cfg,
                              const TrainOutputs& outputs) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("training split is empty");
    if (validation_set.empty()) throw std::invalid_argument("validation split is empty");

    auto& params = model.parameters();
    OptimizerState state(params);
    Rng rng(cfg.seed);
    std::ofstream log;
    if (!outputs.log_path.empty()) {
        log.open(outputs.log_path, std::ios::trunc);
        if (!log) throw std::runtime_error("cannot write training log " + outputs.log_path.string());
    }
    if (!outputs.checkpoint_dir.empty()) std::filesystem::create_directories(outputs.checkpoint_dir);

    std::vector<Checkpoint> checkpoints;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    params.zero_grad();
    for (std::size_t epoch = 1; epoch <= cfg.epochs && state.step < cfg.max_updates; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        const auto batches = pack_batches(train_set, order, cfg.max_tokens);

        double loss_sum = 0.0;
        std::size_t target_tokens = 0, input_tokens = 0, pending = 0;
        auto flush = [&] {
            if (pending == 0) return;
            const double inv = 1.0 / static_cast<double>(target_tokens);
            for (const auto& e : params.entries()) {
                ad::Tensor t = e.tensor;
                if (!t.has_grad()) continue;
                for (double& g : t.mutable_grad()) g *= inv;
            }
            adamw_step(params, state, cfg);
            params.zero_grad();
            if (log) {
                nlohmann::ordered_json j;
                j["step"] = state.step;
                j["loss"] = loss_sum * inv;
                j["lr"] = cfg.lr;
                j["tokens"] = input_tokens;
                log << j.dump() << '\n';
            }
            loss_sum = 0.0;
            target_tokens = input_tokens = pending = 0;
        };

        for (const auto& batch : batches) {
            for (auto i : batch) {
                auto t = model.nll(train_set[i]);
                loss_sum += t.sum.item();
                target_tokens += t.tokens;
                input_tokens += train_set[i].tokens();
                ad::backward(t.sum);
            }
            if (++pending == cfg.update_freq) flush();
            if (state.step >= cfg.max_updates) break;
        }
        if (state.step < cfg.max_updates) flush();
        params.zero_grad();

        Checkpoint c;
        c.epoch = epoch;
        c.step = state.step;
        c.metric_kind = model.metric_kind();
        c.metric = validation_metric(model, validation_set, cfg.validation_decode);
        if (!outputs.checkpoint_dir.empty()) {
            c.path = outputs.checkpoint_dir /
                     ("ck_" + outputs.kind + "_" + std::to_string(epoch) + ".bin");
            params.save(c.path, model.config().float_width);
            write_sidecar(c.path, outputs.kind, c);
        }
        checkpoints.push_back(c);
    }
    return checkpoints;
}

Checkpoint select_checkpoint(const std::vector<Checkpoint>& checkpoints, MetricKind kind) {
    if (checkpoints.empty()) throw std::invalid_argument("select_checkpoint: no checkpoints");
    std::size_t best = 0;
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        const double a = checkpoints[i].metric, b = checkpoints[best].metric;
        if (kind == MetricKind::rouge_l ? a > b : a < b) best = i;
    }
    return checkpoints[best];
}

Checkpoint read_checkpoint_info(const std::filesystem::path& bin_path) {
    auto side = bin_path;
    side.replace_extension(".json");
    std::ifstream in(side);
    if (!in) throw std::runtime_error("missing checkpoint sidecar " + side.string());
    const auto j = nlohmann::json::parse(in);
    Checkpoint c;
    c.path = bin_path;
    c.epoch = j.at("epoch").get<std::size_t>();
    c.step = j.at("step").get<std::uint64_t>();
    c.metric = j.at("metric").get<double>();
    c.metric_kind = j.at("metric_kind").get<std::string>() == "rouge_l" ? MetricKind::rouge_l
                                                                          : MetricKind::loss;
    return c;
}

}  // namespace gslb::training
