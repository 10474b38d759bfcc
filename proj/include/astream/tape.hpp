#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "astream/tensor.hpp"

namespace astream {

using NodeId = int;

// Reverse-mode autodiff over tensor-valued nodes.
//
// A Tape records ops in creation order, which is already a topological order,
// so the backward pass is a single reverse sweep that touches each node once.
// Gradient accumulation happens in fixed index order everywhere, so a given
// graph produces bit-identical gradients run to run and for any OpenMP thread
// count. A tape is single-owner while a forward/backward pass is in flight;
// independent tapes may run concurrently.
//
// Every op checks its result for non-finite values and throws Error naming
// the op, keeping the "values stay finite" contract observable at the point
// of failure.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }
    void clear();

    // Leaves. Parameters pass requires_grad=true; data/masks are constants.
    NodeId leaf(Tensor value, bool requires_grad = false);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }

    // ---- elementwise ----
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId max(NodeId a, NodeId b);        // ties route gradient to a
    NodeId scale(NodeId a, double c);
    NodeId add_scalar(NodeId a, double c);
    NodeId rsub_scalar(double c, NodeId a);  // c - x
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);
    NodeId log(NodeId a);
    NodeId exp(NodeId a);
    NodeId pow(NodeId a, double exponent);   // x^e, e a run-time constant
    NodeId relu(NodeId a);                   // max(x, 0)
    NodeId clamp(NodeId a, double lo, double hi);  // zero gradient outside (lo,hi)
    NodeId mul_const(NodeId a, Tensor coeffs);     // dropout-mask / weight apply

    // ---- linear algebra & convolution ----
    NodeId matmul(NodeId a, NodeId b);            // [M,K]x[K,N]
    NodeId add_rowvec(NodeId a, NodeId v);        // [M,N] + [N], row broadcast
    NodeId dwconv1d(NodeId x, NodeId w, NodeId bias, int dilation);  // causal, [B,T,C], w [C,K]
    NodeId conv1d(NodeId x, NodeId w, NodeId bias, int dilation);    // causal, [B,T,Ci]->[B,T,Co], w [Co,Ci,K]

    // ---- fused recurrent layers (BPTT inside the node) ----
    NodeId lstm(NodeId x, NodeId wx, NodeId wh, NodeId b);  // [B,T,I] -> [B,T,H]; gates i,f,g,o
    NodeId gru(NodeId x, NodeId wx, NodeId wh, NodeId b);   // [B,T,I] -> [B,T,H]; gates r,z,n

    // ---- shape ----
    NodeId reshape(NodeId a, std::vector<int> shape);
    NodeId slice_time(NodeId x, int t);                  // [B,T,D] -> [B,D]
    NodeId slice_time_range(NodeId x, int t0, int t1);   // [B,T,D] -> [B,t1-t0,D]
    NodeId concat_time(const std::vector<NodeId>& xs);   // k x [B,D] -> [B,k,D]

    // ---- reductions & heads ----
    NodeId sum(NodeId a);                     // scalar
    NodeId mean(NodeId a);                    // scalar
    NodeId dot_const(NodeId a, Tensor coeffs);  // scalar = sum(a*coeffs); masked reductions
    NodeId pair_softmax_p1(NodeId logits);    // [...,2] -> [...]: 2-way softmax, prob of index 1

    // Backward from a scalar loss node. Call at most once per tape.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    // Gradient of the loss w.r.t. node id; zeros if the node is unreachable.
    const Tensor& grad(NodeId id);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        bool requires_grad = false;
        std::function<void(Tape&, NodeId)> backfn;
    };

    NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&, NodeId)> backfn,
                const char* op_name);
    Tensor& grad_mut(NodeId id);
    bool has_grad(NodeId id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
    bool wants_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    std::vector<Node> nodes_;
    bool grad_enabled_;
    bool backward_done_ = false;
};

}  // namespace astream
