#include "seqlab/decoders.hpp"

#include <stdexcept>

namespace seqlab {

NodeId IndpHead::sequence_log_prob(Tape& t, const std::vector<NodeId>& enc_states,
                                   const std::vector<std::size_t>& tags) {
    if (tags.size() != enc_states.size())
        throw std::invalid_argument("indp: tag length " + std::to_string(tags.size()) +
                                    " vs encoder length " + std::to_string(enc_states.size()));
    NodeId total = t.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < enc_states.size(); ++i) {
        NodeId logp = t.log_softmax(proj.apply(t, enc_states[i]));
        total = t.add(total, t.pick(logp, tags[i]));
    }
    return total;
}

std::vector<std::size_t> IndpHead::decode(Tape& t, const std::vector<NodeId>& enc_states) {
    std::vector<std::size_t> out;
    out.reserve(enc_states.size());
    for (NodeId h : enc_states) out.push_back(t.value(proj.apply(t, h)).argmax());
    return out;
}

AttentionResult attention_context(Tape& t, NodeId dec_state, NodeId enc_matrix, Param& w_attn) {
    NodeId scores = t.matmul(t.matmul(t.transpose(dec_state), t.leaf(w_attn)), enc_matrix);
    NodeId alpha = t.softmax(scores);  // 1 x l
    NodeId context = t.matmul(enc_matrix, t.transpose(alpha));
    return {context, alpha};
}

RnnDecoder::RnnDecoder(std::size_t n_tags_, std::size_t emb_dim, std::size_t units,
                       std::size_t ctx_dim_, bool use_attention_, Rng& rng)
    : out_emb("decoder.out_emb", n_tags_ + 1, emb_dim, rng),
      cell("decoder.cell", emb_dim + ctx_dim_, units, rng),
      out_proj("decoder.out_proj", units + ctx_dim_, n_tags_, rng),
      w_attn("decoder.w_attn", use_attention_ ? uniform_init(units, ctx_dim_, rng) : Tensor()),
      n_tags(n_tags_),
      ctx_dim(ctx_dim_),
      use_attention(use_attention_) {}

RnnDecoder::State RnnDecoder::initial(Tape& t) {
    State s;
    s.lstm = cell.initial(t);
    s.prev_context = t.constant(Tensor(ctx_dim, 1));
    s.prev_token = go_id();
    return s;
}

RnnDecoder::StepOut RnnDecoder::step(Tape& t, const State& prev,
                                     const std::vector<NodeId>& enc_states, NodeId enc_matrix,
                                     std::size_t step_index) {
    NodeId x = t.concat_rows({out_emb.lookup(t, prev.prev_token), prev.prev_context});
    LstmCell::State lstm = cell.step(t, x, prev.lstm);
    NodeId context = use_attention ? attention_context(t, lstm.h, enc_matrix, w_attn).context
                                   : enc_states[step_index];
    NodeId logits = out_proj.apply(t, t.concat_rows({lstm.h, context}));
    StepOut out;
    out.state.lstm = lstm;
    out.state.prev_context = context;
    out.dec_state = lstm.h;
    out.context = context;
    out.log_probs = t.log_softmax(logits);
    return out;
}

void RnnDecoder::collect(ParamSet& out) {
    out_emb.collect(out);
    cell.collect(out);
    out_proj.collect(out);
    if (use_attention) out.push_back(&w_attn);
}


// --- CRF ---------------------------------------------------------------------

CrfHead::CrfHead(std::size_t enc_dim, std::size_t n_tags, Rng& rng)
    : emis("crf.emis", enc_dim, n_tags, rng),
      trans("crf.trans", uniform_init(n_tags, n_tags, rng)),
      start("crf.start", uniform_init(n_tags, 1, rng)),
      stop("crf.stop", uniform_init(n_tags, 1, rng)) {}

std::vector<NodeId> CrfHead::emission_nodes(Tape& t, const std::vector<NodeId>& enc_states) {
    std::vector<NodeId> out;
    out.reserve(enc_states.size());
    for (NodeId h : enc_states) out.push_back(emis.apply(t, h));
    return out;
}

NodeId crf_log_z_node(Tape& t, const std::vector<NodeId>& emission_nodes, NodeId trans,
                      NodeId start, NodeId stop) {
    if (emission_nodes.empty()) throw std::invalid_argument("crf_log_z: empty sequence");
    NodeId alpha = t.add(emission_nodes[0], start);
    for (std::size_t i = 1; i < emission_nodes.size(); ++i) {
        NodeId scored = t.bcast_add_col(trans, alpha);       // trans[i][j] + alpha[i]
        alpha = t.add(emission_nodes[i], t.logsumexp_cols(scored));
    }
    return t.logsumexp_cols(t.add(alpha, stop));  // T x 1 reduces to 1 x 1
}

NodeId crf_path_score_node(Tape& t, const std::vector<NodeId>& emission_nodes, NodeId trans,
                           NodeId start, NodeId stop, const std::vector<std::size_t>& tags) {
    if (tags.size() != emission_nodes.size())
        throw std::invalid_argument("crf: tag length " + std::to_string(tags.size()) +
                                    " vs emission length " + std::to_string(emission_nodes.size()));
    const std::size_t n_tags = t.value(emission_nodes[0]).rows();
    for (std::size_t y : tags)
        if (y >= n_tags)
            throw std::invalid_argument("crf: tag id " + std::to_string(y) + " out of range");
    NodeId score = t.pick(start, tags[0]);
    for (std::size_t i = 0; i < tags.size(); ++i) {
        score = t.add(score, t.pick(emission_nodes[i], tags[i]));
        if (i > 0) score = t.add(score, t.pick(trans, tags[i - 1] * n_tags + tags[i]));
    }
    return t.add(score, t.pick(stop, tags.back()));
}

NodeId CrfHead::sequence_log_prob(Tape& t, const std::vector<NodeId>& enc_states,
                                  const std::vector<std::size_t>& tags) {
    std::vector<NodeId> e = emission_nodes(t, enc_states);
    NodeId trans_node = t.leaf(trans);
    NodeId start_node = t.leaf(start);
    NodeId stop_node = t.leaf(stop);
    NodeId path = crf_path_score_node(t, e, trans_node, start_node, stop_node, tags);
    NodeId log_z = crf_log_z_node(t, e, trans_node, start_node, stop_node);
    return t.add(path, t.negate(log_z));
}

CrfPotentials CrfHead::materialize(Tape& t, const std::vector<NodeId>& enc_states) {
    CrfPotentials p;
    p.emissions = Tensor(enc_states.size(), n_tags());
    for (std::size_t i = 0; i < enc_states.size(); ++i) {
        const Tensor& e = t.value(emis.apply(t, enc_states[i]));
        for (std::size_t j = 0; j < n_tags(); ++j) p.emissions.at(i, j) = e[j];
    }
    p.transitions = trans.value;
    p.start = start.value;
    p.stop = stop.value;
    return p;
}

void CrfHead::collect(ParamSet& out) {
    emis.collect(out);
    out.push_back(&trans);
    out.push_back(&start);
    out.push_back(&stop);
}

namespace {

// Runs the tape recursion over constants; keeps the pure API on the same
// code path as training.
struct CrfConstants {
    Tape tape;
    std::vector<NodeId> emissions;
    NodeId trans, start, stop;

    explicit CrfConstants(const CrfPotentials& p) {
        const std::size_t l = p.length(), T = p.n_tags();
        if (l < 1 || T < 1) throw std::invalid_argument("crf: need l >= 1 and T >= 1");
        for (std::size_t i = 0; i < l; ++i) {
            Tensor e(T, 1);
            for (std::size_t j = 0; j < T; ++j) e[j] = p.emissions.at(i, j);
            emissions.push_back(tape.constant(std::move(e)));
        }
        trans = tape.constant(p.transitions.empty() ? Tensor(T, T) : p.transitions);
        start = tape.constant(p.start.empty() ? Tensor(T, 1) : p.start);
        stop = tape.constant(p.stop.empty() ? Tensor(T, 1) : p.stop);
    }
};

}  // namespace

double crf_log_z(const CrfPotentials& p) {
    CrfConstants c(p);
    return c.tape.value(crf_log_z_node(c.tape, c.emissions, c.trans, c.start, c.stop))[0];
}

double crf_log_likelihood(const CrfPotentials& p, const std::vector<std::size_t>& tags) {
    CrfConstants c(p);
    NodeId path = crf_path_score_node(c.tape, c.emissions, c.trans, c.start, c.stop, tags);
    NodeId log_z = crf_log_z_node(c.tape, c.emissions, c.trans, c.start, c.stop);
    return c.tape.value(path)[0] - c.tape.value(log_z)[0];
}

std::vector<std::size_t> crf_viterbi(const CrfPotentials& p) {
    const std::size_t l = p.length(), T = p.n_tags();
    if (l < 1 || T < 1) throw std::invalid_argument("crf_viterbi: need l >= 1 and T >= 1");
    const Tensor trans = p.transitions.empty() ? Tensor(T, T) : p.transitions;
    const Tensor start = p.start.empty() ? Tensor(T, 1) : p.start;
    const Tensor stop = p.stop.empty() ? Tensor(T, 1) : p.stop;

    Tensor delta(l, T);
    std::vector<std::vector<std::size_t>> back(l, std::vector<std::size_t>(T, 0));
    for (std::size_t j = 0; j < T; ++j) delta.at(0, j) = p.emissions.at(0, j) + start[j];
    for (std::size_t i = 1; i < l; ++i) {
        for (std::size_t j = 0; j < T; ++j) {
            std::size_t best_prev = 0;
            double best = delta.at(i - 1, 0) + trans.at(0, j);
            for (std::size_t k = 1; k < T; ++k) {
                const double cand = delta.at(i - 1, k) + trans.at(k, j);
                if (cand > best) {  // strict: ties keep the lowest index
                    best = cand;
                    best_prev = k;
                }
            }
            delta.at(i, j) = best + p.emissions.at(i, j);
            back[i][j] = best_prev;
        }
    }
    std::size_t best_last = 0;
    double best = delta.at(l - 1, 0) + stop[0];
    for (std::size_t j = 1; j < T; ++j) {
        const double cand = delta.at(l - 1, j) + stop[j];
        if (cand > best) {
            best = cand;
            best_last = j;
        }
    }
    std::vector<std::size_t> path(l);
    path[l - 1] = best_last;
    for (std::size_t i = l - 1; i > 0; --i) path[i - 1] = back[i][path[i]];
    return path;
}

PaddedPair crf_pad_transduce(const std::vector<std::size_t>& src,
                             const std::vector<std::size_t>& tgt, std::size_t max_len,
                             std::size_t pad_id) {
    if (src.size() > max_len || tgt.size() > max_len)
        throw std::invalid_argument(
            "crf_pad_transduce: sequence length exceeds max_len " + std::to_string(max_len) +
            " (source " + std::to_string(src.size()) + ", target " + std::to_string(tgt.size()) +
            ")");
    PaddedPair out{src, tgt};
    out.src.resize(max_len, pad_id);
    out.tgt.resize(max_len, pad_id);
    return out;
}

std::vector<std::size_t> strip_padding(const std::vector<std::size_t>& seq, std::size_t pad_id) {
    std::vector<std::size_t> out;
    for (std::size_t id : seq) {
        if (id == pad_id) break;
        out.push_back(id);
    }
    return out;
}

}  // namespace seqlab
