#pragma once

#include "seqlab/data.hpp"
#include "seqlab/layers.hpp"

namespace seqlab {

struct EncoderConfig {
    std::size_t src_vocab = 0;
    std::size_t src_dim = 32;  // word embedding (label) or symbol embedding (transduce)
    bool use_char_rnn = true;
    std::size_t char_vocab = 0;
    std::size_t char_dim = 32;
    std::size_t char_units = 32;
    bool use_caps = true;
    std::size_t units = 256;  // per direction; h_t is 2 x units
    double dropout = 0.5;
    std::size_t max_len = 512;
};

// Token features (embedding + char bi-RNN finals + dropout, then cap flags)
// followed by a sentence-level bi-directional LSTM. Transduction encoders
// run directly on symbol embeddings with no char sub-layer or cap flags.
class Encoder {
public:
    Encoder() = default;
    Encoder(const EncoderConfig& config, Rng& rng);

    std::size_t output_dim() const { return 2 * config_.units; }
    std::size_t feature_dim() const;
    const EncoderConfig& config() const { return config_; }

    // Context-independent features for one token. Dropout masks come from
    // dropout_rng; pass nullptr (or train=false) for inference.
    NodeId token_features(Tape& t, const LabeledExample& ex, std::size_t index, bool train,
                          Rng* dropout_rng);

    // H = (h_1 .. h_l). Throws DataError when l exceeds max_len.
    std::vector<NodeId> encode(Tape& t, const LabeledExample& ex, bool train, Rng* dropout_rng);

    void collect(ParamSet& out);

    EmbeddingTable src_emb;
    EmbeddingTable char_emb;
    LstmCell char_fwd, char_bwd;
    LstmCell sent_fwd, sent_bwd;

private:
    EncoderConfig config_;
};

}  // namespace seqlab
