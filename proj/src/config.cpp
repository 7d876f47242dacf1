#include "seqlab/config.hpp"

#include <fstream>
#include <sstream>

#include "seqlab/data.hpp"

namespace seqlab {

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "no") return false;
    throw UsageError("config: bad boolean for " + key + ": " + value);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        return std::stoul(value);
    } catch (const std::exception&) {
        throw UsageError("config: bad integer for " + key + ": " + value);
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        return std::stod(value);
    } catch (const std::exception&) {
        throw UsageError("config: bad number for " + key + ": " + value);
    }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& value) {
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            seeds.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw UsageError("config: bad seed list entry: " + item);
        }
    }
    if (seeds.empty()) throw UsageError("config: empty seed list");
    return seeds;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    keys_set.insert(key);
    if (key == "task") task = value;
    else if (key == "head") head = value;
    else if (key == "objective") objective = value;
    else if (key == "src_dim" || key == "word_dim") src_dim = parse_size(key, value);
    else if (key == "use_char_rnn") use_char_rnn = parse_bool(key, value);
    else if (key == "char_dim") char_dim = parse_size(key, value);
    else if (key == "char_units") char_units = parse_size(key, value);
    else if (key == "use_caps") use_caps = parse_bool(key, value);
    else if (key == "enc_units") enc_units = parse_size(key, value);
    else if (key == "dec_units") dec_units = parse_size(key, value);
    else if (key == "out_emb_dim") out_emb_dim = parse_size(key, value);
    else if (key == "max_len") max_len = parse_size(key, value);
    else if (key == "max_decode") max_decode = parse_size(key, value);
    else if (key == "n_step") train.n_step = parse_size(key, value);
    else if (key == "ml_lr") train.ml_lr = parse_real(key, value);
    else if (key == "rl_step") train.rl_step = parse_real(key, value);
    else if (key == "critic_lr") train.critic_lr = parse_real(key, value);
    else if (key == "batch_size") train.batch_size = parse_size(key, value);
    else if (key == "max_grad_norm") train.max_grad_norm = parse_real(key, value);
    else if (key == "dropout") train.dropout = parse_real(key, value);
    else if (key == "ss_k") train.ss_k = parse_real(key, value);
    else if (key == "seed") train.seed = std::stoull(value);
    else if (key == "epochs") train.epochs = parse_size(key, value);
    else if (key == "finetune_epochs") train.finetune_epochs = parse_size(key, value);
    else if (key == "patience") train.patience = parse_size(key, value);
    else if (key == "rl_use_adam") train.rl_use_adam = parse_bool(key, value);
    else if (key == "train") train_path = value;
    else if (key == "dev") dev_path = value;
    else if (key == "test") test_path = value;
    else if (key == "embeddings") embeddings_path = value;
    else if (key == "vocab_min_freq") vocab_min_freq = parse_size(key, value);
    else if (key == "pairs_split_spaces") pairs_split_spaces = parse_bool(key, value);
    else if (key == "metric") metric = value;
    else if (key == "beam") beam = parse_size(key, value);
    else if (key == "dev_beam") dev_beam = parse_size(key, value);
    else if (key == "checkpoint") checkpoint_path = value;
    else if (key == "init") init_checkpoint = value;
    else if (key == "out") out_path = value;
    else if (key == "seeds") seeds = parse_seed_list(value);
    else if (key == "models") models = value;
    else throw UsageError("config: unknown key: " + key);
}

void RunConfig::validate(const std::string& command) const {
    if (task != "label" && task != "transduce")
        throw UsageError("config: task must be label or transduce, got " + task);
    if (head != "indp" && head != "rnn" && head != "crf")
        throw UsageError("config: head must be indp, rnn or crf, got " + head);
    static const std::set<std::string> kObjectives = {
        "ml", "ac", "ac+ml", "reinforce", "reinforce-baseline", "self-critical",
        "scheduled-sampling"};
    if (!kObjectives.count(objective))
        throw UsageError("config: unknown objective " + objective);
    if (metric != "accuracy" && metric != "f1" && metric != "word-acc")
        throw UsageError("config: metric must be accuracy, f1 or word-acc, got " + metric);
    if (head == "crf" && objective != "ml")
        throw UsageError("config: the crf head admits only objective=ml, got " + objective);
    if (objective != "ml" && head != "rnn")
        throw UsageError("config: objective " + objective + " requires head=rnn");
    if (command == "train" && objective != "ml")
        throw UsageError("config: train handles objective=ml only; objective " + objective +
                         " requires `finetune` from an ML checkpoint");
    if (command == "finetune") {
        if (objective == "ml")
            throw UsageError("config: finetune expects a non-ml objective");
        if (init_checkpoint.empty())
            throw UsageError("config: objective " + objective +
                             " requires an ML pre-trained checkpoint (set init=...)");
    }
    if (beam < 1 || dev_beam < 1) throw UsageError("config: beam widths must be >= 1");
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw DataError("cannot open config file: " + path);
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw UsageError("config " + path + " line " + std::to_string(line_no) +
                             ": expected key=value");
        config.set(line.substr(start, eq - start), line.substr(eq + 1));
    }
    return config;
}

void apply_overrides(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& overrides) {
    for (const auto& [key, value] : overrides) config.set(key, value);
}

}  // namespace seqlab
