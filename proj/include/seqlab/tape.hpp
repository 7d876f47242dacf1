#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqlab/tensor.hpp"

namespace seqlab {

// Trainable tensor. Gradients accumulate here across backward passes until
// zero_grad() is called.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

using ParamSet = std::vector<Param*>;

// L2 norm over all grads in the set.
double global_grad_norm(const ParamSet& params);

// Scales every grad by max_norm/norm when the global norm exceeds max_norm.
// Returns the post-clip global norm.
double clip_global_norm(ParamSet& params, double max_norm);

using NodeId = int;

// Reverse-mode differentiation tape over dense tensors. Nodes are appended
// in topological order; backward() walks them in reverse and accumulates
// gradients into registered Params. Single-threaded by construction.
class Tape {
public:
    Tape();

    // Leaves.
    NodeId leaf(Param& p);          // trainable; memoized per tape
    NodeId constant(Tensor value);  // no gradient tracked

    // Detachment marker: value passes through, gradient flow stops here.
    NodeId detach(NodeId x);

    // Arithmetic.
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId matmul(NodeId a, NodeId b);
    NodeId negate(NodeId x);
    NodeId scale(NodeId x, double c);
    NodeId sum(NodeId x);  // scalar

    // Shape.
    NodeId concat_rows(const std::vector<NodeId>& parts);  // stack vertically
    NodeId concat_cols(const std::vector<NodeId>& parts);  // stack horizontally
    NodeId slice_rows(NodeId x, std::size_t begin, std::size_t end);
    NodeId transpose(NodeId x);
    NodeId pick(NodeId x, std::size_t flat_index);  // scalar element

    // Nonlinearities.
    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId leaky_relu(NodeId x, double slope);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);          // domain error on non-positive input
    NodeId softmax(NodeId x);      // over all entries, max-subtracted
    NodeId log_softmax(NodeId x);  // fused, safe against log(0)

    // Table lookup: row of a (vocab x dim) tensor as a dim x 1 column.
    NodeId lookup(NodeId table, std::size_t row);

    // Inverted-dropout mask multiply; mask entries are 0 or 1/(1-p).
    NodeId dropout(NodeId x, Tensor mask);

    // CRF recursion helpers.
    NodeId bcast_add_col(NodeId mat, NodeId col);  // out[i][j] = mat[i][j] + col[i]
    NodeId logsumexp_cols(NodeId mat);             // out[j] = lse_i mat[i][j], cols x 1

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and accumulates into Param::grad for every
    // parameter leaf on the tape. Node gradients from earlier backward
    // passes are discarded first, so repeated calls are independent.
    void backward(NodeId loss);

    // Gradient of the last backward()'s loss w.r.t. a node (zeros if the
    // node was not reached).
    Tensor grad(NodeId id) const;

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        std::function<void(Tape&, NodeId)> backward_fn;  // null for leaves
        Param* param = nullptr;
        bool detached = false;
    };

    NodeId push(Tensor value, std::vector<NodeId> inputs,
                std::function<void(Tape&, NodeId)> backward_fn);
    Tensor& grad_buf(NodeId id);
    bool reached(NodeId id) const { return !grads_[id].empty(); }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Param*, NodeId> leaf_ids_;
};

}  // namespace seqlab
