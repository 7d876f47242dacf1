#include "seqlab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "seqlab/checkpoint.hpp"
#include "seqlab/eval.hpp"

namespace seqlab {

namespace {

namespace fs = std::filesystem;

Dataset load_dataset(const RunConfig& config) {
    if (config.train_path.empty() || config.dev_path.empty())
        throw UsageError("config: train= and dev= data paths are required");
    DatasetOptions options;
    options.vocab_min_freq = config.vocab_min_freq;
    options.transduce = config.task == "transduce";
    auto read = [&](const std::string& path) -> RawCorpus {
        if (path.empty()) return {};
        return options.transduce ? read_pair_corpus(path, config.pairs_split_spaces)
                                 : read_column_corpus(path);
    };
    return build_dataset(read(config.train_path), read(config.dev_path), read(config.test_path),
                         options);
}

ModelConfig make_model_config(const RunConfig& config, std::size_t n_words, std::size_t n_chars,
                              std::size_t n_tags) {
    ModelConfig mc;
    mc.task = task_from_string(config.task);
    mc.head = head_from_string(config.head);
    mc.n_tags = n_tags;
    mc.out_emb_dim = config.out_emb_dim;
    mc.dec_units = config.dec_units;
    mc.max_decode = config.max_decode;
    mc.encoder.src_vocab = n_words;
    mc.encoder.src_dim = config.src_dim;
    mc.encoder.use_char_rnn = mc.task == Task::Label && config.use_char_rnn;
    mc.encoder.char_vocab = n_chars;
    mc.encoder.char_dim = config.char_dim;
    mc.encoder.char_units = config.char_units;
    mc.encoder.use_caps = mc.task == Task::Label && config.use_caps;
    mc.encoder.units = config.enc_units;
    mc.encoder.dropout = config.train.dropout;
    mc.encoder.max_len = std::max(config.max_len, mc.max_decode);
    return mc;
}

std::string join_tokens(const std::vector<std::size_t>& ids, const Vocabulary& vocab,
                        const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += sep;
        out += vocab.token(ids[i]);
    }
    return out;
}

// Predictions outside the BILOU alphabet (reserved ids, truncated tags)
// count as O for span extraction.
std::string sanitize_bilou(const std::string& tag) {
    if (tag == "O") return tag;
    if (tag.size() >= 3 && tag[1] == '-' &&
        (tag[0] == 'B' || tag[0] == 'I' || tag[0] == 'L' || tag[0] == 'U'))
        return tag;
    return "O";
}

double eval_metric(Model& model, const std::vector<LabeledExample>& examples,
                   const Vocabulary& tags, const RunConfig& config, std::size_t beam) {
    if (examples.empty()) return 0.0;
    const bool transduce = model.config().task == Task::Transduce;
    if (config.metric == "word-acc" || transduce) {
        std::vector<std::string> gold, predicted;
        const std::string sep = config.pairs_split_spaces ? " " : "";
        for (const LabeledExample& ex : examples) {
            std::vector<std::size_t> gold_ids = ex.tags;
            while (!gold_ids.empty() &&
                   (gold_ids.back() == Vocabulary::kEos || gold_ids.back() == Vocabulary::kPad))
                gold_ids.pop_back();
            gold.push_back(join_tokens(gold_ids, tags, sep));
            predicted.push_back(join_tokens(decode_example(model, ex, beam), tags, sep));
        }
        return word_accuracy(gold, predicted);
    }
    if (config.metric == "f1") {
        std::vector<std::vector<std::string>> gold, predicted;
        for (const LabeledExample& ex : examples) {
            std::vector<std::string> g, p;
            for (std::size_t id : ex.tags) g.push_back(sanitize_bilou(tags.token(id)));
            for (std::size_t id : decode_example(model, ex, beam))
                p.push_back(sanitize_bilou(tags.token(id)));
            gold.push_back(std::move(g));
            predicted.push_back(std::move(p));
        }
        return entity_f1(gold, predicted).f1;
    }
    std::vector<std::vector<std::size_t>> gold, predicted;
    for (const LabeledExample& ex : examples) {
        gold.push_back(ex.tags);
        predicted.push_back(decode_example(model, ex, beam));
    }
    return tag_accuracy(gold, predicted);
}

void write_metric_csv(const std::string& path, const TrainLog& log,
                      const std::string& metric_name) {
    std::ofstream file(path);
    if (!file) throw DataError("cannot write metric log: " + path);
    file.precision(17);
    file << "epoch,split,metric,value\n";
    for (const EpochRow& row : log.rows) {
        file << row.epoch << ",train,loss," << row.train_loss << '\n';
        file << row.epoch << ",dev," << metric_name << ',' << row.dev_metric << '\n';
    }
}

std::string metrics_path(const RunConfig& config) {
    return config.out_path.empty() ? config.checkpoint_path + ".metrics.csv" : config.out_path;
}

void check_checkpoint_compatible(const RunConfig& config, const Checkpoint& ckpt) {
    if (config.keys_set.count("task") && config.task != to_string(ckpt.config.task))
        throw UsageError("checkpoint task is " + to_string(ckpt.config.task) +
                         " but the run requests " + config.task);
    if (config.keys_set.count("head") && config.head != to_string(ckpt.config.head))
        throw UsageError("checkpoint head is " + to_string(ckpt.config.head) +
                         " but the run requests " + config.head);
}

std::vector<LabeledExample> encode_with(const Checkpoint& ckpt, const RawCorpus& raw,
                                        bool append_eos) {
    std::vector<LabeledExample> out;
    out.reserve(raw.size());
    const bool transduce = ckpt.config.task == Task::Transduce;
    for (const RawSentence& sentence : raw)
        out.push_back(encode_sentence(sentence, ckpt.words, ckpt.chars, ckpt.tags, transduce,
                                      append_eos));
    return out;
}

DevEvalFn make_dev_eval(const std::vector<LabeledExample>& dev, const Vocabulary& tags,
                        const RunConfig& config) {
    return [&dev, &tags, &config](Model& m) {
        return eval_metric(m, dev, tags, config, config.dev_beam);
    };
}

}  // namespace

void cmd_train(const RunConfig& config, std::ostream& out) {
    config.validate("train");
    config.train.validate();
    Dataset data = load_dataset(config);
    ModelConfig mc =
        make_model_config(config, data.words.size(), data.chars.size(), data.tags.size());
    if (mc.task == Task::Transduce && !config.keys_set.count("max_decode")) {
        // 2 x longest training source, but never below an observed target
        std::size_t longest_src = 1, longest_tgt = 1;
        for (const LabeledExample& ex : data.train) {
            longest_src = std::max(longest_src, ex.length());
            longest_tgt = std::max(longest_tgt, ex.tags.size());
        }
        mc.max_decode = std::max(2 * longest_src, longest_tgt);
        mc.encoder.max_len = std::max(mc.encoder.max_len, mc.max_decode);
    }
    Rng init_rng(config.train.seed);
    Model model(mc, init_rng);
    if (!config.embeddings_path.empty()) {
        std::unordered_map<std::string, std::size_t> rows;
        for (std::size_t id = Vocabulary::kReserved; id < data.words.size(); ++id)
            rows[data.words.token(id)] = id;
        const std::size_t loaded =
            load_pretrained_embeddings(config.embeddings_path, rows, model.encoder.src_emb);
        out << "loaded " << loaded << " pre-trained embeddings\n";
    }

    Adam adam(model.params(), config.train.ml_lr);
    auto on_best = [&](Model& m, std::size_t epoch, double dev) {
        Checkpoint ckpt = make_checkpoint(m, data.words, data.chars, data.tags, "ml", epoch, dev,
                                          nullptr, &adam);
        save_checkpoint(config.checkpoint_path, ckpt);
    };
    TrainLog log = train_ml(model, data.train, config.train,
                            make_dev_eval(data.dev, data.tags, config), on_best);
    write_metric_csv(metrics_path(config), log, config.metric);
    out << "trained " << log.rows.size() << " epochs; best dev " << config.metric << " "
        << log.best_dev << " at epoch " << log.best_epoch << '\n';
    out << "checkpoint: " << config.checkpoint_path << '\n';
}

void cmd_finetune(const RunConfig& config, std::ostream& out) {
    config.validate("finetune");
    config.train.validate();
    Checkpoint ckpt = load_checkpoint(config.init_checkpoint);
    check_checkpoint_compatible(config, ckpt);
    Model model = restore_model(ckpt);
    if (model.config().head != Head::Rnn)
        throw UsageError("finetune requires an rnn-head checkpoint, got " +
                         to_string(model.config().head));

    const bool transduce = model.config().task == Task::Transduce;
    auto read = [&](const std::string& path) -> RawCorpus {
        if (path.empty()) return {};
        return transduce ? read_pair_corpus(path, config.pairs_split_spaces)
                         : read_column_corpus(path);
    };
    if (config.train_path.empty() || config.dev_path.empty())
        throw UsageError("config: train= and dev= data paths are required");
    std::vector<LabeledExample> train = encode_with(ckpt, read(config.train_path), true);
    std::vector<LabeledExample> dev = encode_with(ckpt, read(config.dev_path), true);

    const Objective objective = objective_from_string(config.objective);
    const bool needs_critic = objective == Objective::Ac || objective == Objective::AcMl ||
                              objective == Objective::ReinforceBaseline;
    Rng critic_rng(config.train.seed ^ 0x51EEDULL);
    CriticNet critic;
    if (needs_critic)
        critic = CriticNet(model.config().dec_units, model.context_dim(),
                           model.config().dec_units, critic_rng);

    auto on_best = [&](Model& m, std::size_t epoch, double dev_metric) {
        Checkpoint best = make_checkpoint(m, ckpt.words, ckpt.chars, ckpt.tags, config.objective,
                                          epoch, dev_metric, needs_critic ? &critic : nullptr);
        save_checkpoint(config.checkpoint_path, best);
    };
    TrainLog log = finetune(model, needs_critic ? &critic : nullptr, objective, train,
                            config.train, make_dev_eval(dev, ckpt.tags, config), on_best);
    write_metric_csv(metrics_path(config), log, config.metric);
    out << "fine-tuned (" << config.objective << ") " << log.rows.size()
        << " epochs; best dev " << config.metric << " " << log.best_dev << " at epoch "
        << log.best_epoch << '\n';
    out << "checkpoint: " << config.checkpoint_path << '\n';
}

void cmd_eval(const RunConfig& config, std::ostream& out) {
    if (config.init_checkpoint.empty())
        throw UsageError("eval requires init=<checkpoint>");
    Checkpoint ckpt = load_checkpoint(config.init_checkpoint);
    check_checkpoint_compatible(config, ckpt);
    Model model = restore_model(ckpt);
    const bool transduce = model.config().task == Task::Transduce;
    auto read = [&](const std::string& path) -> RawCorpus {
        return transduce ? read_pair_corpus(path, config.pairs_split_spaces)
                         : read_column_corpus(path);
    };
    out.precision(17);
    bool any = false;
    if (!config.dev_path.empty()) {
        std::vector<LabeledExample> dev = encode_with(ckpt, read(config.dev_path), true);
        out << "dev " << config.metric << " "
            << eval_metric(model, dev, ckpt.tags, config, config.beam) << '\n';
        any = true;
    }
    if (!config.test_path.empty()) {
        std::vector<LabeledExample> test = encode_with(ckpt, read(config.test_path), true);
        out << "test " << config.metric << " "
            << eval_metric(model, test, ckpt.tags, config, config.beam) << '\n';
        any = true;
    }
    if (!any) throw UsageError("eval: no dev= or test= data given");
}

void cmd_tag(const RunConfig& config, const std::string& input_path, std::ostream& out) {
    if (config.init_checkpoint.empty())
        throw UsageError("tag requires init=<checkpoint>");
    Checkpoint ckpt = load_checkpoint(config.init_checkpoint);
    check_checkpoint_compatible(config, ckpt);
    Model model = restore_model(ckpt);
    const bool transduce = model.config().task == Task::Transduce;

    std::ifstream in(input_path);
    if (!in) throw DataError("cannot open input file: " + input_path);

    std::ofstream file_out;
    std::ostream* sink = &out;
    if (!config.out_path.empty()) {
        file_out.open(config.out_path);
        if (!file_out) throw DataError("cannot write output file: " + config.out_path);
        sink = &file_out;
    }

    if (transduce) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            const std::string source = tab == std::string::npos ? line : line.substr(0, tab);
            RawSentence sentence;
            sentence.tokens = config.pairs_split_spaces
                                  ? [&] {
                                        RawSentence s;
                                        std::istringstream ss(source);
                                        std::string tok;
                                        while (ss >> tok) s.tokens.push_back(tok);
                                        return s;
                                    }()
                                        .tokens
                                  : utf8_split(source);
            LabeledExample ex =
                encode_sentence(sentence, ckpt.words, ckpt.chars, ckpt.tags, true, false);
            std::vector<std::size_t> hyp = decode_example(model, ex, config.beam);
            *sink << source << '\t'
                  << join_tokens(hyp, ckpt.tags, config.pairs_split_spaces ? " " : "") << '\n';
        }
        return;
    }

    // Column input; only the first column is consumed.
    RawCorpus sentences;
    RawSentence current;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string token;
        if (!(ss >> token)) {
            if (!current.tokens.empty()) {
                sentences.push_back(std::move(current));
                current = RawSentence{};
            }
            continue;
        }
        current.tokens.push_back(token);
    }
    if (!current.tokens.empty()) sentences.push_back(std::move(current));

    for (std::size_t s = 0; s < sentences.size(); ++s) {
        LabeledExample ex =
            encode_sentence(sentences[s], ckpt.words, ckpt.chars, ckpt.tags, false, false);
        std::vector<std::size_t> tags = decode_example(model, ex, config.beam);
        for (std::size_t i = 0; i < sentences[s].tokens.size(); ++i)
            *sink << sentences[s].tokens[i] << '\t' << ckpt.tags.token(tags[i]) << '\n';
        *sink << '\n';
    }
}

namespace {

struct ModelSpec {
    std::string head;
    std::string objective;
    std::string name() const { return head + ":" + objective; }
};

std::vector<ModelSpec> parse_model_specs(const std::string& models) {
    std::vector<ModelSpec> specs;
    std::istringstream ss(models);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const std::size_t colon = item.find(':');
        ModelSpec spec;
        spec.head = colon == std::string::npos ? item : item.substr(0, colon);
        spec.objective = colon == std::string::npos ? "ml" : item.substr(colon + 1);
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw UsageError("replicate: models= list is empty");
    return specs;
}

}  // namespace

void cmd_replicate(const RunConfig& config, std::ostream& out) {
    if (config.seeds.size() < 2)
        throw UsageError("replicate requires seeds=s1,s2,... with at least 2 seeds");
    if (config.out_path.empty()) throw UsageError("replicate requires out=<directory>");
    std::vector<ModelSpec> specs = parse_model_specs(config.models);
    fs::create_directories(config.out_path);

    struct ModelScores {
        ModelSpec spec;
        EvalReport dev, test;
    };
    std::vector<ModelScores> results;

    for (const ModelSpec& spec : specs) {
        ModelScores scores;
        scores.spec = spec;
        scores.dev.metric = config.metric;
        scores.test.metric = config.metric;
        for (std::uint64_t seed : config.seeds) {
            RunConfig run = config;
            run.head = spec.head;
            run.objective = "ml";
            run.train.seed = seed;
            const std::string stem =
                config.out_path + "/" + spec.head + "_" + spec.objective + "_s" +
                std::to_string(seed);
            run.checkpoint_path = stem + ".ml.ckpt";
            run.out_path = stem + ".ml.metrics.csv";
            std::ostringstream quiet;
            cmd_train(run, quiet);

            if (spec.objective != "ml") {
                RunConfig ft = run;
                ft.objective = spec.objective;
                ft.init_checkpoint = run.checkpoint_path;
                ft.checkpoint_path = stem + ".ckpt";
                ft.out_path = stem + ".metrics.csv";
                cmd_finetune(ft, quiet);
                run.checkpoint_path = ft.checkpoint_path;
            }

            Checkpoint best = load_checkpoint(run.checkpoint_path);
            Model model = restore_model(best);
            auto read = [&](const std::string& path) -> RawCorpus {
                return config.task == "transduce"
                           ? read_pair_corpus(path, config.pairs_split_spaces)
                           : read_column_corpus(path);
            };
            std::vector<LabeledExample> dev = encode_with(best, read(config.dev_path), true);
            scores.dev.seeds.push_back(seed);
            scores.dev.values.push_back(
                eval_metric(model, dev, best.tags, config, config.beam));
            if (!config.test_path.empty()) {
                std::vector<LabeledExample> test =
                    encode_with(best, read(config.test_path), true);
                scores.test.seeds.push_back(seed);
                scores.test.values.push_back(
                    eval_metric(model, test, best.tags, config, config.beam));
            }
        }
        results.push_back(std::move(scores));
    }

    std::vector<std::pair<std::string, EvalReport>> rows;
    out.precision(10);
    for (const ModelScores& r : results) {
        rows.emplace_back(r.spec.name() + ":dev", r.dev);
        out << r.spec.name() << " dev " << config.metric << " mean " << r.dev.mean() << " +- "
            << r.dev.stddev() << '\n';
        if (!r.test.values.empty()) {
            rows.emplace_back(r.spec.name() + ":test", r.test);
            out << r.spec.name() << " test " << config.metric << " mean " << r.test.mean()
                << " +- " << r.test.stddev() << '\n';
        }
    }
    {
        std::ofstream report(config.out_path + "/report.csv");
        report << report_csv(rows);
    }
    std::ofstream pvals(config.out_path + "/pvalues.csv");
    pvals << "model_a,model_b,split,p\n";
    pvals.precision(10);
    for (std::size_t i = 0; i < results.size(); ++i) {
        for (std::size_t j = i + 1; j < results.size(); ++j) {
            const double p_dev = t_test_p(results[i].dev.values, results[j].dev.values);
            pvals << results[i].spec.name() << ',' << results[j].spec.name() << ",dev," << p_dev
                  << '\n';
            out << results[i].spec.name() << " vs " << results[j].spec.name() << " dev p="
                << p_dev << '\n';
            if (!results[i].test.values.empty() && !results[j].test.values.empty()) {
                const double p = t_test_p(results[i].test.values, results[j].test.values);
                pvals << results[i].spec.name() << ',' << results[j].spec.name() << ",test," << p
                      << '\n';
                out << results[i].spec.name() << " vs " << results[j].spec.name() << " test p="
                    << p << '\n';
            }
        }
    }
}

void cmd_synth(const RunConfig& config, std::size_t n_tags, std::size_t n_words, double beta,
               std::ostream& out) {
    if (config.out_path.empty()) throw UsageError("synth requires out=<directory>");
    SynthConfig sc;
    sc.n_tags = n_tags;
    sc.n_words = n_words;
    sc.beta = beta;
    sc.seed = config.train.seed;
    SynthTask task = synth_markov_task(sc);
    fs::create_directories(config.out_path);
    write_column_corpus(config.out_path + "/train.txt", task.train);
    write_column_corpus(config.out_path + "/dev.txt", task.dev);
    write_column_corpus(config.out_path + "/test.txt", task.test);
    out << "wrote synthetic task (" << sc.n_tags << " tags, " << sc.n_words << " words, beta "
        << beta << ") to " << config.out_path << '\n';
}

}  // namespace seqlab
