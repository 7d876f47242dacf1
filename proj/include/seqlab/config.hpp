#pragma once

#include <set>
#include <string>
#include <vector>

#include "seqlab/training.hpp"

namespace seqlab {

// Invalid flag/config combinations; the CLI maps it to exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Full run description: flat key=value config file with CLI-flag overrides.
struct RunConfig {
    std::string task = "label";
    std::string head = "rnn";
    std::string objective = "ml";

    // model structure; defaults mirror the English-NER column of the
    // hyper-parameter table (word dim 100, char/output embeddings 32,
    // 256 units per direction)
    std::size_t src_dim = 100;
    bool use_char_rnn = true;
    std::size_t char_dim = 32;
    std::size_t char_units = 32;
    bool use_caps = true;
    std::size_t enc_units = 256;
    std::size_t dec_units = 256;
    std::size_t out_emb_dim = 32;
    std::size_t max_len = 512;
    std::size_t max_decode = 64;  // transduce: defaults to 2 x longest training source

    TrainConfig train;

    // data
    std::string train_path, dev_path, test_path;
    std::string embeddings_path;
    std::size_t vocab_min_freq = 2;
    bool pairs_split_spaces = false;

    // evaluation
    std::string metric = "accuracy";  // accuracy | f1 | word-acc
    std::size_t beam = 10;            // final evaluation beam
    std::size_t dev_beam = 1;         // per-epoch dev decoding

    // io
    std::string checkpoint_path = "model.ckpt";
    std::string init_checkpoint;
    std::string out_path;
    std::vector<std::uint64_t> seeds;
    std::string models;  // replicate: comma list of head:objective pairs

    std::set<std::string> keys_set;

    void set(const std::string& key, const std::string& value);
    // Contract checks shared by all commands (metric name, head/objective
    // combinations, pre-training requirement).
    void validate(const std::string& command) const;
};

RunConfig load_run_config(const std::string& path);
void apply_overrides(RunConfig& config,
                     const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace seqlab
