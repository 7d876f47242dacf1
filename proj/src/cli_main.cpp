#include <iostream>

#include <CLI11.hpp>

#include "seqlab/cli.hpp"
#include "seqlab/data.hpp"
#include "seqlab/training.hpp"

namespace seqlab {

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> direct;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_path, "flat key=value config file");
        app->add_option("--set", sets, "extra key=value override (repeatable)");
        auto opt = [this, app](const char* flag, const char* key, const char* help) {
            app->add_option_function<std::string>(
                flag, [this, key](const std::string& v) { direct.emplace_back(key, v); }, help);
        };
        opt("--task", "task", "label | transduce");
        opt("--head", "head", "indp | rnn | crf");
        opt("--objective", "objective",
            "ml | ac | ac+ml | reinforce | reinforce-baseline | self-critical | "
            "scheduled-sampling");
        opt("--seed", "seed", "random seed");
        opt("--seeds", "seeds", "comma-separated seed list (replicate)");
        opt("--beam", "beam", "beam width for evaluation and tagging");
        opt("--out", "out", "output path (metrics CSV, tag output, or directory)");
        opt("--init", "init", "checkpoint to start from");
        opt("--checkpoint", "checkpoint", "checkpoint path to write");
        opt("--train", "train", "training data path");
        opt("--dev", "dev", "development data path");
        opt("--test", "test", "test data path");
        opt("--metric", "metric", "accuracy | f1 | word-acc");
        opt("--epochs", "epochs", "ML epoch budget");
        opt("--finetune-epochs", "finetune_epochs", "fine-tuning epoch budget");
        opt("--models", "models", "replicate: comma list of head:objective specs");
    }

    RunConfig build() const {
        RunConfig config;
        if (!config_path.empty()) config = load_run_config(config_path);
        for (const std::string& kv : sets) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
            config.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        apply_overrides(config, direct);
        return config;
    }
};

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"seqlab: neural sequence labeling and transduction toolkit"};
    app.require_subcommand(1);

    CommonFlags train_flags, finetune_flags, eval_flags, tag_flags, replicate_flags, synth_flags;
    std::string tag_input;
    std::size_t synth_tags = 5, synth_words = 50;
    double synth_beta = 0.95;

    CLI::App* train = app.add_subcommand("train", "maximum-likelihood training");
    train_flags.add_to(train);
    CLI::App* finetune = app.add_subcommand("finetune", "RL / scheduled-sampling fine-tuning");
    finetune_flags.add_to(finetune);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_flags.add_to(eval);
    CLI::App* tag = app.add_subcommand("tag", "tag or transduce an input file");
    tag_flags.add_to(tag);
    tag->add_option("input", tag_input, "input file")->required();
    CLI::App* replicate = app.add_subcommand("replicate", "multi-seed runs with t-tests");
    replicate_flags.add_to(replicate);
    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic Markov task");
    synth_flags.add_to(synth);
    synth->add_option("--tags", synth_tags, "tag count");
    synth->add_option("--words", synth_words, "word type count");
    synth->add_option("--beta", synth_beta, "transition concentration in [0,1]");

    try {
        app.parse(argc, argv);
        if (train->parsed()) cmd_train(train_flags.build(), std::cout);
        if (finetune->parsed()) cmd_finetune(finetune_flags.build(), std::cout);
        if (eval->parsed()) cmd_eval(eval_flags.build(), std::cout);
        if (tag->parsed()) cmd_tag(tag_flags.build(), tag_input, std::cout);
        if (replicate->parsed()) cmd_replicate(replicate_flags.build(), std::cout);
        if (synth->parsed())
            cmd_synth(synth_flags.build(), synth_tags, synth_words, synth_beta, std::cout);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace seqlab
