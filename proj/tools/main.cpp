#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "stages.hpp"

using namespace gslb;

int main(int argc, char** argv) {
    CLI::App app{"Guided summarization with post-editing correction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string profile_name = "desk";
    std::string model_kind;
    bool quiet = false;
    app.add_option("-c,--config", config_path, "TOML run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--profile", profile_name, "hyperparameter defaults")
        ->check(CLI::IsMember({"paper", "desk"}))
        ->capture_default_str();
    app.add_flag("-q,--quiet", quiet, "log warnings and errors only");

    app.add_subcommand("lexicon-build", "normalize the terminology list and build the vocabulary");
    app.add_subcommand("guidance-extract", "extract guidance signals for every split");
    app.add_subcommand("corrupt", "build the corrector and classifier sets");
    auto* train = app.add_subcommand("train", "train one network and select its checkpoint");
    train->add_option("-m,--model", model_kind, "network to train")
        ->required()
        ->check(CLI::IsMember({"summarizer", "corrector", "classifier"}));
    app.add_subcommand("decode", "beam-decode summaries for the configured split");
    app.add_subcommand("correct", "post-edit decoded summaries");
    app.add_subcommand("evaluate", "score decoded and corrected summaries");
    app.add_subcommand("pipeline", "run every stage in order");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        std::optional<std::string> seed;
        if (const char* env = std::getenv("GSLB_SEED"); env && *env) seed = env;
        const auto cfg = cli::load_run_config(config_path, training::parse_profile(profile_name), seed);
        const auto name = app.get_subcommands().front()->get_name();
        if (name == "lexicon-build") cli::lexicon_build(cfg);
        else if (name == "guidance-extract") cli::guidance_extract(cfg);
        else if (name == "corrupt") cli::corrupt(cfg);
        else if (name == "train") cli::train_model(cfg, training::parse_model_kind(model_kind));
        else if (name == "decode") cli::decode(cfg);
        else if (name == "correct") cli::correct(cfg);
        else if (name == "evaluate") cli::evaluate(cfg);
        else cli::pipeline(cfg);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
