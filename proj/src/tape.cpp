#include "seqlab/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "seqlab/kernels.hpp"

namespace seqlab {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

double global_grad_norm(const ParamSet& params) {
    double sq = 0.0;
    for (const Param* p : params) sq += K().dot(p->grad.data(), p->grad.data(), p->grad.size());
    return std::sqrt(sq);
}

double clip_global_norm(ParamSet& params, double max_norm) {
    require(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
    const double norm = global_grad_norm(params);
    if (norm <= max_norm) return norm;
    const double factor = max_norm / norm;
    for (Param* p : params)
        K().scale(factor, p->grad.data(), p->grad.data(), p->grad.size());
    return global_grad_norm(params);
}

Tape::Tape() {
    nodes_.reserve(1024);
    grads_.reserve(1024);
}

NodeId Tape::push(Tensor value, std::vector<NodeId> inputs,
                  std::function<void(Tape&, NodeId)> backward_fn) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward_fn), nullptr, false});
    grads_.emplace_back();
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(NodeId id) {
    Tensor& g = grads_[id];
    if (g.empty()) g = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
    return g;
}

NodeId Tape::leaf(Param& p) {
    auto it = leaf_ids_.find(&p);
    if (it != leaf_ids_.end()) return it->second;
    NodeId id = push(p.value, {}, nullptr);
    nodes_[id].param = &p;
    leaf_ids_[&p] = id;
    return id;
}

NodeId Tape::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

NodeId Tape::detach(NodeId x) {
    NodeId id = push(nodes_[x].value, {x}, nullptr);
    nodes_[id].detached = true;
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    require(va.same_shape(vb), "add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out(va.rows(), va.cols());
    K().add(va.data(), vb.data(), out.data(), out.size());
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        NodeId a_ = t.nodes_[id].inputs[0];
        NodeId b_ = t.nodes_[id].inputs[1];
        K().axpy(1.0, g.data(), t.grad_buf(a_).data(), g.size());
        K().axpy(1.0, g.data(), t.grad_buf(b_).data(), g.size());
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    require(va.same_shape(vb), "mul: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out(va.rows(), va.cols());
    K().mul(va.data(), vb.data(), out.data(), out.size());
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        NodeId a_ = t.nodes_[id].inputs[0];
        NodeId b_ = t.nodes_[id].inputs[1];
        const Tensor& va_ = t.nodes_[a_].value;
        const Tensor& vb_ = t.nodes_[b_].value;
        Tensor tmp(g.rows(), g.cols());
        K().mul(g.data(), vb_.data(), tmp.data(), g.size());
        K().axpy(1.0, tmp.data(), t.grad_buf(a_).data(), g.size());
        K().mul(g.data(), va_.data(), tmp.data(), g.size());
        K().axpy(1.0, tmp.data(), t.grad_buf(b_).data(), g.size());
    });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = nodes_[a].value;
    const Tensor& vb = nodes_[b].value;
    require(va.cols() == vb.rows(),
            "matmul: incompatible shapes " + va.shape_str() + " and " + vb.shape_str());
    Tensor out(va.rows(), vb.cols());
    K().matmul(va.data(), vb.data(), out.data(), va.rows(), va.cols(), vb.cols());
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];  // m x n
        NodeId a_ = t.nodes_[id].inputs[0];
        NodeId b_ = t.nodes_[id].inputs[1];
        const Tensor& va_ = t.nodes_[a_].value;  // m x k
        const Tensor& vb_ = t.nodes_[b_].value;  // k x n
        Tensor& ga = t.grad_buf(a_);
        Tensor& gb = t.grad_buf(b_);
        const std::size_t m = va_.rows(), k = va_.cols(), n = vb_.cols();
        // ga += g * vb^T : ga[i][p] += dot(g row i, vb row p)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p)
                ga.at(i, p) += K().dot(g.row(i), vb_.row(p), n);
        // gb += va^T * g : gb row p += va[i][p] * g row i
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p)
                K().axpy(va_.at(i, p), g.row(i), gb.row(p), n);
    });
}

NodeId Tape::negate(NodeId x) { return scale(x, -1.0); }

NodeId Tape::scale(NodeId x, double c) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    K().scale(c, v.data(), out.data(), v.size());
    return push(std::move(out), {x}, [c](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        K().axpy(c, g.data(), t.grad_buf(t.nodes_[id].inputs[0]).data(), g.size());
    });
}

NodeId Tape::sum(NodeId x) {
    const Tensor& v = nodes_[x].value;
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) total += v[i];
    return push(Tensor::scalar(total), {x}, [](Tape& t, NodeId id) {
        const double g = t.grads_[id][0];
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_rows: empty input list");
    const std::size_t cols = nodes_[parts[0]].value.cols();
    std::size_t rows = 0;
    for (NodeId p : parts) {
        require(nodes_[p].value.cols() == cols,
                "concat_rows: column mismatch " + nodes_[p].value.shape_str());
        rows += nodes_[p].value.rows();
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (NodeId p : parts) {
        const Tensor& v = nodes_[p].value;
        for (std::size_t i = 0; i < v.size(); ++i) out[offset + i] = v[i];
        offset += v.size();
    }
    return push(std::move(out), parts, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        std::size_t offset = 0;
        for (NodeId p : t.nodes_[id].inputs) {
            Tensor& gp = t.grad_buf(p);
            K().axpy(1.0, g.data() + offset, gp.data(), gp.size());
            offset += gp.size();
        }
    });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_cols: empty input list");
    const std::size_t rows = nodes_[parts[0]].value.rows();
    std::size_t cols = 0;
    for (NodeId p : parts) {
        require(nodes_[p].value.rows() == rows,
                "concat_cols: row mismatch " + nodes_[p].value.shape_str());
        cols += nodes_[p].value.cols();
    }
    Tensor out(rows, cols);
    std::size_t col_offset = 0;
    for (NodeId p : parts) {
        const Tensor& v = nodes_[p].value;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, col_offset + j) = v.at(i, j);
        col_offset += v.cols();
    }
    return push(std::move(out), parts, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        std::size_t col_offset = 0;
        for (NodeId p : t.nodes_[id].inputs) {
            Tensor& gp = t.grad_buf(p);
            for (std::size_t i = 0; i < gp.rows(); ++i)
                for (std::size_t j = 0; j < gp.cols(); ++j)
                    gp.at(i, j) += g.at(i, col_offset + j);
            col_offset += gp.cols();
        }
    });
}

NodeId Tape::slice_rows(NodeId x, std::size_t begin, std::size_t end) {
    const Tensor& v = nodes_[x].value;
    require(begin < end && end <= v.rows(),
            "slice_rows: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                ") for " + v.shape_str());
    Tensor out(end - begin, v.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[begin * v.cols() + i];
    return push(std::move(out), {x}, [begin](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        K().axpy(1.0, g.data(), gx.data() + begin * gx.cols(), g.size());
    });
}

NodeId Tape::transpose(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.cols(), v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) out.at(j, i) = v.at(i, j);
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < gx.rows(); ++i)
            for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(j, i);
    });
}

NodeId Tape::pick(NodeId x, std::size_t flat_index) {
    const Tensor& v = nodes_[x].value;
    require(flat_index < v.size(),
            "pick: index " + std::to_string(flat_index) + " out of range for " + v.shape_str());
    return push(Tensor::scalar(v[flat_index]), {x}, [flat_index](Tape& t, NodeId id) {
        t.grad_buf(t.nodes_[id].inputs[0])[flat_index] += t.grads_[id][0];
    });
}

NodeId Tape::tanh(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& y = t.nodes_[id].value;
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

NodeId Tape::sigmoid(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& y = t.nodes_[id].value;
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] >= 0.0 ? v[i] : slope * v[i];
    return push(std::move(out), {x}, [slope](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& vx = t.nodes_[t.nodes_[id].inputs[0]].value;
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (vx[i] >= 0.0 ? 1.0 : slope);
    });
}

NodeId Tape::exp(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i]);
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& y = t.nodes_[id].value;
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
    });
}

NodeId Tape::log(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] <= 0.0)
            throw std::domain_error("log: non-positive input " + std::to_string(v[i]));
        out[i] = std::log(v[i]);
    }
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& vx = t.nodes_[t.nodes_[id].inputs[0]].value;
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / vx[i];
    });
}

NodeId Tape::softmax(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    const double m = v.max_value();
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        z += out[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] /= z;
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& y = t.nodes_[id].value;
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        const double gy = K().dot(g.data(), y.data(), g.size());
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - gy);
    });
}

NodeId Tape::log_softmax(NodeId x) {
    const Tensor& v = nodes_[x].value;
    Tensor out(v.rows(), v.cols());
    const double m = v.max_value();
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) z += std::exp(v[i] - m);
    const double lse = m + std::log(z);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
    return push(std::move(out), {x}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& y = t.nodes_[id].value;  // log-probs
        Tensor& gx = t.grad_buf(t.nodes_[id].inputs[0]);
        double gsum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gsum += g[i];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(y[i]) * gsum;
    });
}

NodeId Tape::lookup(NodeId table, std::size_t row) {
    const Tensor& v = nodes_[table].value;
    require(row < v.rows(),
            "lookup: row " + std::to_string(row) + " out of range for " + v.shape_str());
    Tensor out(v.cols(), 1);
    for (std::size_t j = 0; j < v.cols(); ++j) out[j] = v.at(row, j);
    return push(std::move(out), {table}, [row](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        Tensor& gt = t.grad_buf(t.nodes_[id].inputs[0]);
        K().axpy(1.0, g.data(), gt.row(row), g.size());
    });
}

NodeId Tape::dropout(NodeId x, Tensor mask) {
    const Tensor& v = nodes_[x].value;
    require(v.same_shape(mask),
            "dropout: mask shape " + mask.shape_str() + " vs input " + v.shape_str());
    Tensor out(v.rows(), v.cols());
    K().mul(v.data(), mask.data(), out.data(), v.size());
    NodeId mask_node = constant(std::move(mask));
    return push(std::move(out), {x, mask_node}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& m = t.nodes_[t.nodes_[id].inputs[1]].value;
        Tensor tmp(g.rows(), g.cols());
        K().mul(g.data(), m.data(), tmp.data(), g.size());
        K().axpy(1.0, tmp.data(), t.grad_buf(t.nodes_[id].inputs[0]).data(), g.size());
    });
}

NodeId Tape::bcast_add_col(NodeId mat, NodeId col) {
    const Tensor& vm = nodes_[mat].value;
    const Tensor& vc = nodes_[col].value;
    require(vc.cols() == 1 && vc.rows() == vm.rows(),
            "bcast_add_col: column " + vc.shape_str() + " vs matrix " + vm.shape_str());
    Tensor out(vm.rows(), vm.cols());
    for (std::size_t i = 0; i < vm.rows(); ++i)
        for (std::size_t j = 0; j < vm.cols(); ++j) out.at(i, j) = vm.at(i, j) + vc[i];
    return push(std::move(out), {mat, col}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        Tensor& gm = t.grad_buf(t.nodes_[id].inputs[0]);
        Tensor& gc = t.grad_buf(t.nodes_[id].inputs[1]);
        K().axpy(1.0, g.data(), gm.data(), g.size());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gc[i] += g.at(i, j);
    });
}

NodeId Tape::logsumexp_cols(NodeId mat) {
    const Tensor& v = nodes_[mat].value;
    Tensor out(v.cols(), 1);
    for (std::size_t j = 0; j < v.cols(); ++j) {
        double m = v.at(0, j);
        for (std::size_t i = 1; i < v.rows(); ++i) m = std::max(m, v.at(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < v.rows(); ++i) z += std::exp(v.at(i, j) - m);
        out[j] = m + std::log(z);
    }
    return push(std::move(out), {mat}, [](Tape& t, NodeId id) {
        const Tensor& g = t.grads_[id];
        const Tensor& y = t.nodes_[id].value;
        const Tensor& vm = t.nodes_[t.nodes_[id].inputs[0]].value;
        Tensor& gm = t.grad_buf(t.nodes_[id].inputs[0]);
        for (std::size_t i = 0; i < vm.rows(); ++i)
            for (std::size_t j = 0; j < vm.cols(); ++j)
                gm.at(i, j) += g[j] * std::exp(vm.at(i, j) - y[j]);
    });
}

void Tape::backward(NodeId loss) {
    require(loss >= 0 && loss < static_cast<NodeId>(nodes_.size()), "backward: bad node id");
    require(nodes_[loss].value.size() == 1,
            "backward: loss must be scalar, got " + nodes_[loss].value.shape_str());
    for (Tensor& g : grads_) g = Tensor();
    grad_buf(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        if (!reached(id)) continue;
        const Node& node = nodes_[id];
        if (node.detached || !node.backward_fn) continue;
        node.backward_fn(*this, id);
    }
    for (const auto& [param, id] : leaf_ids_) {
        if (!reached(id)) continue;
        Param* p = nodes_[id].param;
        K().axpy(1.0, grads_[id].data(), p->grad.data(), p->grad.size());
    }
}

Tensor Tape::grad(NodeId id) const {
    if (grads_[id].empty()) return Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
    return grads_[id];
}

}  // namespace seqlab
