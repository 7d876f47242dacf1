#include "seqlab/layers.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqlab {

Tensor uniform_init(std::size_t rows, std::size_t cols, Rng& rng, double range) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-range, range);
    return t;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", uniform_init(out, in, rng)),
      bias(name + ".bias", Tensor(out, 1)) {}

NodeId Linear::apply(Tape& t, NodeId x) {
    return t.add(t.matmul(t.leaf(weight), x), t.leaf(bias));
}

void Linear::collect(ParamSet& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

LstmCell::LstmCell(const std::string& name, std::size_t input_dim, std::size_t hidden_units,
                   Rng& rng)
    : w_input(name + ".w_input", uniform_init(4 * hidden_units, input_dim, rng)),
      w_hidden(name + ".w_hidden", uniform_init(4 * hidden_units, hidden_units, rng)),
      bias(name + ".bias", Tensor(4 * hidden_units, 1)),
      hidden(hidden_units) {
    for (std::size_t i = hidden; i < 2 * hidden; ++i) bias.value[i] = 1.0;  // forget gate
}

LstmCell::State LstmCell::initial(Tape& t) const {
    return State{t.constant(Tensor(hidden, 1)), t.constant(Tensor(hidden, 1))};
}

LstmCell::State LstmCell::step(Tape& t, NodeId x, State prev) {
    NodeId gates =
        t.add(t.add(t.matmul(t.leaf(w_input), x), t.matmul(t.leaf(w_hidden), prev.h)), t.leaf(bias));
    NodeId gi = t.sigmoid(t.slice_rows(gates, 0, hidden));
    NodeId gf = t.sigmoid(t.slice_rows(gates, hidden, 2 * hidden));
    NodeId gc = t.tanh(t.slice_rows(gates, 2 * hidden, 3 * hidden));
    NodeId go = t.sigmoid(t.slice_rows(gates, 3 * hidden, 4 * hidden));
    NodeId c_next = t.add(t.mul(gf, prev.c), t.mul(gi, gc));
    NodeId h_next = t.mul(go, t.tanh(c_next));
    return State{h_next, c_next};
}

void LstmCell::collect(ParamSet& out) {
    out.push_back(&w_input);
    out.push_back(&w_hidden);
    out.push_back(&bias);
}

std::vector<NodeId> bidir_run(Tape& t, LstmCell& fwd, LstmCell& bwd,
                              const std::vector<NodeId>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("bidir_run: empty input sequence");
    const std::size_t l = inputs.size();
    std::vector<NodeId> fwd_h(l), bwd_h(l);
    LstmCell::State state = fwd.initial(t);
    for (std::size_t i = 0; i < l; ++i) {
        state = fwd.step(t, inputs[i], state);
        fwd_h[i] = state.h;
    }
    state = bwd.initial(t);
    for (std::size_t i = l; i-- > 0;) {
        state = bwd.step(t, inputs[i], state);
        bwd_h[i] = state.h;
    }
    std::vector<NodeId> out(l);
    for (std::size_t i = 0; i < l; ++i) out[i] = t.concat_rows({fwd_h[i], bwd_h[i]});
    return out;
}

EmbeddingTable::EmbeddingTable(const std::string& name, std::size_t vocab, std::size_t dim,
                               Rng& rng)
    : table(name, uniform_init(vocab, dim, rng)) {}

NodeId EmbeddingTable::lookup(Tape& t, std::size_t id) {
    if (id >= vocab_size())
        throw std::invalid_argument("EmbeddingTable::lookup: id " + std::to_string(id) +
                                    " out of range for vocab " + std::to_string(vocab_size()));
    NodeId node = trainable ? t.leaf(table) : t.constant(table.value);
    return t.lookup(node, id);
}

void EmbeddingTable::collect(ParamSet& out) {
    if (trainable) out.push_back(&table);
}

std::size_t load_pretrained_embeddings(
    const std::string& path, const std::unordered_map<std::string, std::size_t>& token_to_row,
    EmbeddingTable& table) {
    std::ifstream file(path);
    if (!file) throw std::runtime_error("cannot open embedding file: " + path);
    const std::size_t dim = table.dim();
    std::size_t loaded = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        auto it = token_to_row.find(token);
        if (it == token_to_row.end()) continue;
        for (std::size_t j = 0; j < dim; ++j) {
            double v;
            if (!(ss >> v))
                throw std::runtime_error("embedding file " + path + " line " +
                                         std::to_string(line_no) + ": expected " +
                                         std::to_string(dim) + " values");
            table.table.value.at(it->second, j) = v;
        }
        ++loaded;
    }
    return loaded;
}

CriticNet::CriticNet(std::size_t state_dim, std::size_t ctx_dim, std::size_t hidden, Rng& rng)
    : fc1("critic.fc1", state_dim + ctx_dim, hidden, rng),
      fc2("critic.fc2", hidden, hidden, rng),
      out("critic.out", hidden, 1, rng) {}

NodeId CriticNet::forward(Tape& t, NodeId dec_state, NodeId context) {
    NodeId x = t.concat_rows({t.detach(dec_state), t.detach(context)});
    NodeId h1 = t.leaky_relu(fc1.apply(t, x), slope);
    NodeId h2 = t.leaky_relu(fc2.apply(t, h1), slope);
    return out.apply(t, h2);
}

ParamSet CriticNet::params() {
    ParamSet set;
    fc1.collect(set);
    fc2.collect(set);
    out.collect(set);
    return set;
}

}  // namespace seqlab
