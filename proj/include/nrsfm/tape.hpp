#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nrsfm/tensor.hpp"

namespace nrsfm {

// Handle to a node on a Tape.
struct Var {
    int index = -1;
};

// Batch-statistics buffers of a normalization layer. Owned by the caller;
// updated as a side effect of training-mode forwards, never differentiated.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
};

// Reverse-mode tape. Building an op evaluates it eagerly and records a
// backward closure; backward() replays the closures in reverse creation
// order, which is a reverse topological order by construction. Every op
// validates operand shapes and rejects non-finite results.
//
// Tapes are single-threaded. A tape can be differentiated once.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // trainable input
    Var leaf(Tensor value);
    // non-differentiable input
    Var constant(Tensor value);

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    std::size_t size() const { return nodes_.size(); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    // (N,F) + (F,) broadcast over rows
    Var add_rowvec(Var a, Var b);
    Var matmul(Var a, Var b);
    Var relu(Var a);
    Var tanh(Var a);
    // sum of all elements -> scalar
    Var sum(Var a);
    // per-column sums of a 2-D tensor -> (F,)
    Var colsum(Var a);
    Var reshape(Var a, Shape shape);
    // row i of a 2-D tensor -> (F,)
    Var row(Var a, std::size_t i);
    // rows [r0, r1) of a 2-D tensor
    Var slice_rows(Var a, std::size_t r0, std::size_t r1);
    // stack 1-D tensors of equal length F into (N,F)
    Var stack_rows(std::span<const Var> rows);
    // value copy that blocks gradient flow
    Var detach(Var a);

    // elementwise pseudo-Huber penalty of a squared norm:
    //   f(s) = eps * (sqrt(1 + s/eps^2) - 1),  s >= 0
    Var pseudo_huber_sq(Var s, double eps);

    // batch normalization over axis 0 of x:(N,F) with affine gamma/beta:(F,).
    // Training mode normalizes by batch statistics and pushes them into
    // `state` with the given momentum; eval mode normalizes by `state`.
    Var batchnorm(Var x, Var gamma, Var beta, BatchNormState* state, bool training,
                  double momentum = 0.1, double eps = 1e-5);

    // differentiable Rodrigues map: theta (3,) -> rotation matrix (3,3)
    Var rot_expm(Var theta);

    // Accumulate d loss / d node for every node reachable from `loss`.
    // loss must be scalar; a tape can only be differentiated once.
    void backward(Var loss);

    // Gradient of the last backward() w.r.t. v; exact zeros for nodes the
    // loss does not depend on.
    Tensor grad(Var v) const;

  private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::function<void(Tape&, const Tensor&)> backward;
    };

    int check(Var v) const;
    Var push(Tensor value, bool requires_grad, std::function<void(Tape&, const Tensor&)> back,
             const char* op);
    void accumulate(int index, const Tensor& delta);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;   // parallel to nodes_, empty until touched
    std::vector<char> has_grad_;  // parallel flags
    bool consumed_ = false;
};

}  // namespace nrsfm
