#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqlab/rng.hpp"
#include "seqlab/tensor.hpp"

namespace seqlab {

// Thrown for unreadable or malformed input files; the CLI maps it to exit 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Token/id map with a fixed reserved prefix. Ids are stable across runs:
// entries are added by descending training frequency, ties lexicographic.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kNum = 2;
    static constexpr std::size_t kEos = 3;
    static constexpr std::size_t kGo = 4;  // sequence-start
    static constexpr std::size_t kReserved = 5;

    Vocabulary();

    static Vocabulary build(const std::unordered_map<std::string, std::size_t>& counts,
                            std::size_t min_freq);

    std::size_t add(const std::string& token);           // idempotent
    std::size_t get(const std::string& token) const;     // kUnk when absent
    bool contains(const std::string& token) const;
    const std::string& token(std::size_t id) const;
    std::size_t size() const { return id_to_token_.size(); }
    const std::vector<std::string>& tokens() const { return id_to_token_; }
    const std::unordered_map<std::string, std::size_t>& map() const { return token_to_id_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, std::size_t> token_to_id_;
};

// Capitalization flags [all-upper, initial-upper, contains-digit, all-lower]
// computed on the original surface form.
std::array<double, 4> cap_flags(const std::string& surface);

// NUM/UNK replacement: digit strings (separators . , - allowed) map to the
// NUM symbol, tokens outside the vocabulary to UNK. Idempotent.
std::string preprocess(const std::string& token, const Vocabulary& words);

// Splits a UTF-8 string into code-point substrings; bytes that do not start
// a valid sequence are passed through singly.
std::vector<std::string> utf8_split(const std::string& s);

struct LabeledExample {
    std::vector<std::size_t> src;               // token ids after preprocessing
    std::vector<std::string> surfaces;          // original forms
    std::vector<std::vector<std::size_t>> chars;  // char ids per token
    std::vector<std::array<double, 4>> caps;    // cap flags per token
    std::vector<std::size_t> tags;              // target ids

    std::size_t length() const { return src.size(); }
};

// Raw sentence: parallel token/tag strings.
struct RawSentence {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
};
using RawCorpus = std::vector<RawSentence>;

// Column format: one token per line, whitespace-separated columns, blank
// line between sentences.
RawCorpus read_column_corpus(const std::string& path, std::size_t token_col = 0,
                             std::size_t tag_col = 1);
void write_column_corpus(const std::string& path, const RawCorpus& corpus);

// Transliteration pairs: "source<TAB>target" per line. When split_spaces is
// set each side is split on spaces, otherwise into UTF-8 code points.
RawCorpus read_pair_corpus(const std::string& path, bool split_spaces = false);

// BIO -> BILOU (singletons U-, ends L-). Throws DataError on invalid BIO.
std::vector<std::string> bilou_encode(const std::vector<std::string>& bio);

struct Dataset {
    std::vector<LabeledExample> train, dev, test;
    Vocabulary words;  // label task: word vocab; transduce: source symbols
    Vocabulary chars;  // within-word characters (label task only)
    Vocabulary tags;   // label task: tag set; transduce: target symbols
    bool transduce = false;
};

struct DatasetOptions {
    std::size_t vocab_min_freq = 2;
    bool transduce = false;
    bool append_eos = true;  // transduction targets end with EOS
};

// Builds vocabularies from the training split only and encodes all splits.
Dataset build_dataset(const RawCorpus& train, const RawCorpus& dev, const RawCorpus& test,
                      const DatasetOptions& options);

// Encodes one sentence against fixed vocabularies (e.g. from a checkpoint).
LabeledExample encode_sentence(const RawSentence& raw, const Vocabulary& words,
                               const Vocabulary& chars, const Vocabulary& tags, bool transduce,
                               bool append_eos);

// --- Synthetic Markov tagging task -----------------------------------------

struct SynthConfig {
    std::size_t n_tags = 5;
    std::size_t n_words = 50;
    std::size_t len_min = 3;
    std::size_t len_max = 20;
    std::size_t n_train = 1000;
    std::size_t n_dev = 200;
    std::size_t n_test = 200;
    double beta = 0.95;      // transition concentration; 0 = i.i.d. tags
    double ambiguity = 0.5;  // emission mass borrowed from the neighbor tag
    std::uint64_t seed = 1;
};

// Ground-truth generative model, exposed so tests can build exact oracles.
struct SynthModel {
    Tensor init;         // T x 1
    Tensor transitions;  // T x T, rows sum to 1
    Tensor emissions;    // T x V, rows sum to 1
};

SynthModel make_synth_model(const SynthConfig& config);

struct SynthTask {
    SynthModel model;
    RawCorpus train, dev, test;
};

SynthTask synth_markov_task(const SynthConfig& config);

std::string synth_word_name(std::size_t id);
std::string synth_tag_name(std::size_t id);

}  // namespace seqlab
