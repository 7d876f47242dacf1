#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "seqlab/rng.hpp"
#include "seqlab/tape.hpp"

namespace seqlab {

// Uniform init in [-range, range].
Tensor uniform_init(std::size_t rows, std::size_t cols, Rng& rng, double range = 0.1);

struct Linear {
    Param weight;  // out x in
    Param bias;    // out x 1

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    NodeId apply(Tape& t, NodeId x);
    void collect(ParamSet& out);
};

// Gate blocks are stacked input/forget/cell/output; forget biases start at 1.
struct LstmCell {
    Param w_input;   // 4H x in
    Param w_hidden;  // 4H x H
    Param bias;      // 4H x 1
    std::size_t hidden = 0;

    LstmCell() = default;
    LstmCell(const std::string& name, std::size_t input_dim, std::size_t hidden_units, Rng& rng);

    struct State {
        NodeId h = -1;
        NodeId c = -1;
    };

    State initial(Tape& t) const;  // zero state
    State step(Tape& t, NodeId x, State prev);
    void collect(ParamSet& out);
};

// Runs fwd left-to-right and bwd right-to-left; output t is [fwd_h_t ; bwd_h_t].
std::vector<NodeId> bidir_run(Tape& t, LstmCell& fwd, LstmCell& bwd,
                              const std::vector<NodeId>& inputs);

struct EmbeddingTable {
    Param table;  // vocab x dim
    bool trainable = true;

    EmbeddingTable() = default;
    EmbeddingTable(const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng);

    std::size_t vocab_size() const { return table.value.rows(); }
    std::size_t dim() const { return table.value.cols(); }

    NodeId lookup(Tape& t, std::size_t id);
    void collect(ParamSet& out);
};

// Plain-text embedding file: token followed by dim whitespace-separated reals
// per line. Rows for tokens absent from the file keep their current values.
// Returns the number of vocabulary rows overwritten.
std::size_t load_pretrained_embeddings(
    const std::string& path, const std::unordered_map<std::string, std::size_t>& token_to_row,
    EmbeddingTable& table);

// Feed-forward return regressor: two leaky-ReLU hidden layers and a linear
// scalar output. Inputs are detached on entry, so no downstream loss can
// reach actor parameters through it.
struct CriticNet {
    Linear fc1, fc2, out;
    double slope = 0.01;

    CriticNet() = default;
    CriticNet(std::size_t state_dim, std::size_t ctx_dim, std::size_t hidden, Rng& rng);

    NodeId forward(Tape& t, NodeId dec_state, NodeId context);
    ParamSet params();
};

}  // namespace seqlab
