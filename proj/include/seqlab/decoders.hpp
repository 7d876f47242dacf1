#pragma once

#include <vector>

#include "seqlab/layers.hpp"

namespace seqlab {

// --- Independent softmax head ----------------------------------------------

struct IndpHead {
    Linear proj;  // n_tags x enc_dim

    IndpHead() = default;
    IndpHead(std::size_t enc_dim, std::size_t n_tags, Rng& rng)
        : proj("indp.proj", enc_dim, n_tags, rng) {}

    std::size_t n_tags() const { return proj.weight.value.rows(); }

    // sum_t log softmax(W h_t + b)[y_t]
    NodeId sequence_log_prob(Tape& t, const std::vector<NodeId>& enc_states,
                             const std::vector<std::size_t>& tags);
    std::vector<std::size_t> decode(Tape& t, const std::vector<NodeId>& enc_states);
    void collect(ParamSet& out) { proj.collect(out); }
};

// --- Decoder RNN with input feeding -----------------------------------------

// Bilinear attention: score(d, h) = d^T W h, softmax over source positions.
// Returns the context (convex combination of encoder columns) and the
// attention row.
struct AttentionResult {
    NodeId context;
    NodeId weights;  // 1 x l
};
AttentionResult attention_context(Tape& t, NodeId dec_state, NodeId enc_matrix, Param& w_attn);

struct RnnDecoder {
    EmbeddingTable out_emb;  // (n_tags + 1) x emb_dim; extra row is the GO symbol
    LstmCell cell;           // input: [emb(y_prev) ; c_prev]
    Linear out_proj;         // n_tags x (units + ctx_dim)
    Param w_attn;            // units x enc_dim; used in attention mode only
    std::size_t n_tags = 0;
    std::size_t ctx_dim = 0;
    bool use_attention = false;

    RnnDecoder() = default;
    RnnDecoder(std::size_t n_tags, std::size_t emb_dim, std::size_t units, std::size_t ctx_dim,
               bool use_attention, Rng& rng);

    std::size_t go_id() const { return n_tags; }

    struct State {
        LstmCell::State lstm;
        NodeId prev_context = -1;
        std::size_t prev_token = 0;
    };

    State initial(Tape& t);

    // One decoding step: advances the recurrence with the previous token and
    // context, resolves the current context (labeling mode: the encoder
    // state at this position; attention mode: attend over the encoder
    // matrix), and produces log p(. | c_t, d_t).
    struct StepOut {
        State state;
        NodeId dec_state = -1;  // d_t (hidden half)
        NodeId context = -1;    // c_t
        NodeId log_probs = -1;  // n_tags x 1
    };
    StepOut step(Tape& t, const State& prev, const std::vector<NodeId>& enc_states,
                 NodeId enc_matrix, std::size_t step_index);

    void collect(ParamSet& out);
};

// --- Linear-chain CRF --------------------------------------------------------

// Concrete potentials for decoding and oracle checks. start/stop are the
// boundary scores; zero tensors mean "no boundary preference".
struct CrfPotentials {
    Tensor emissions;    // l x T
    Tensor transitions;  // T x T
    Tensor start;        // T x 1
    Tensor stop;         // T x 1

    std::size_t length() const { return emissions.rows(); }
    std::size_t n_tags() const { return emissions.cols(); }
};

double crf_log_z(const CrfPotentials& p);
double crf_log_likelihood(const CrfPotentials& p, const std::vector<std::size_t>& tags);
// Max-product decode; ties break toward the lowest tag index.
std::vector<std::size_t> crf_viterbi(const CrfPotentials& p);

struct CrfHead {
    Linear emis;  // T x enc_dim
    Param trans;  // T x T
    Param start;  // T x 1
    Param stop;   // T x 1

    CrfHead() = default;
    CrfHead(std::size_t enc_dim, std::size_t n_tags, Rng& rng);

    std::size_t n_tags() const { return emis.weight.value.rows(); }

    std::vector<NodeId> emission_nodes(Tape& t, const std::vector<NodeId>& enc_states);
    // log p(Y | H) = path score - log Z, built on the tape.
    NodeId sequence_log_prob(Tape& t, const std::vector<NodeId>& enc_states,
                             const std::vector<std::size_t>& tags);
    // Potentials with current parameter values for Viterbi decoding.
    CrfPotentials materialize(Tape& t, const std::vector<NodeId>& enc_states);
    void collect(ParamSet& out);
};

// Tape-level forward recursion shared by training and the pure wrappers.
NodeId crf_log_z_node(Tape& t, const std::vector<NodeId>& emission_nodes, NodeId trans,
                      NodeId start, NodeId stop);
NodeId crf_path_score_node(Tape& t, const std::vector<NodeId>& emission_nodes, NodeId trans,
                           NodeId start, NodeId stop, const std::vector<std::size_t>& tags);

// Pads source and target with PAD up to max_len for CRF transduction.
// Throws std::invalid_argument when either side exceeds max_len.
struct PaddedPair {
    std::vector<std::size_t> src;
    std::vector<std::size_t> tgt;
};
PaddedPair crf_pad_transduce(const std::vector<std::size_t>& src,
                             const std::vector<std::size_t>& tgt, std::size_t max_len,
                             std::size_t pad_id);

// Drops everything at and after the first PAD (decode truncation rule).
std::vector<std::size_t> strip_padding(const std::vector<std::size_t>& seq, std::size_t pad_id);

}  // namespace seqlab
