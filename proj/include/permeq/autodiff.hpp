#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "permeq/layers.hpp"

namespace permeq {

enum class LossKind { mse, cosine };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

/// mse: mean of squared errors over all entries of the batch.
/// cosine: batch mean of 1 - <x/|x|, y/|y|>^2, computed per sample.
struct LossSpec {
    LossKind kind = LossKind::mse;
};

/// One array per parameter block of a Network, same order and sizes.
struct Gradients {
    std::vector<std::vector<double>> blocks;

    static Gradients zeros_like(const Network& net);
    double squared_norm() const;
};

/// Record of a forward pass. Node values are (rows x channels) matrices;
/// backward() walks the nodes in reverse and accumulates into parameter
/// gradients registered when each node was created.
class Tape {
public:
    using Node = std::size_t;

    Node input(RowMatrix value);
    const RowMatrix& value(Node id) const { return nodes_.at(id).value; }

    /// Equivariant layer on `batch` stacked samples; parameter gradients go to
    /// grad_w / grad_b (must stay alive until backward()).
    Node equivariant(std::shared_ptr<const LayerKernel> kernel, const EquivariantLayer& layer,
                     Node x, std::size_t batch, std::span<double> grad_w,
                     std::span<double> grad_b);
    Node relu(Node x);
    Node pool(std::shared_ptr<const PoolKernel> kernel, Node x, std::size_t batch);
    Node dense(const DenseLayer& layer, Node x, std::span<double> grad_w,
               std::span<double> grad_b);

    /// Scalar (1 x 1) loss nodes. `target` has the shape of x.
    Node mse(Node x, RowMatrix target);
    Node cosine(Node x, RowMatrix target, std::size_t batch);

    /// Seeds d(root) = 1 and propagates.
    void backward(Node root);

private:
    struct Entry {
        RowMatrix value;
        RowMatrix grad;
        std::function<void(const RowMatrix&)> back;
    };
    Node push(RowMatrix value, std::function<void(const RowMatrix&)> back);
    void accumulate(Node id, const RowMatrix& g);

    std::vector<Entry> nodes_;
};

/// Kernels of every layer of a network at one node count; independent of the
/// weights, so one plan serves a whole training run.
struct NetworkPlan {
    NetworkPlan(const Network& net, std::size_t n, bool use_fast_ops = true);

    std::size_t n;
    std::vector<std::shared_ptr<const LayerKernel>> layers;
    std::shared_ptr<const PoolKernel> pool;
};

/// Stacks samples into a (batch * rows) x channels matrix.
RowMatrix stack_samples(std::span<const Tensor> samples);

/// Records the network forward on `batch` stacked inputs; returns the output node.
Tape::Node record_forward(Tape& tape, const Network& net, const NetworkPlan& plan,
                          const RowMatrix& inputs, std::size_t batch, Gradients* grads);

struct LossAndGrad {
    double loss = 0.0;
    Gradients grads;
};

/// Exact reverse-mode gradient of the batch loss with respect to every
/// parameter. Throws std::runtime_error if the loss is not finite.
LossAndGrad grad(const Network& net, std::span<const Tensor> inputs,
                 std::span<const Tensor> targets, const LossSpec& loss);
LossAndGrad grad(const Network& net, const NetworkPlan& plan, const RowMatrix& inputs,
                 const RowMatrix& targets, std::size_t batch, const LossSpec& loss);

/// Network outputs for `batch` stacked inputs, evaluated in chunks.
RowMatrix predict(const Network& net, const NetworkPlan& plan, const RowMatrix& inputs,
                  std::size_t batch);

/// Loss value only.
double evaluate_loss(const Network& net, const NetworkPlan& plan, const RowMatrix& inputs,
                     const RowMatrix& targets, std::size_t batch, const LossSpec& loss);
double evaluate_loss(const Network& net, std::span<const Tensor> inputs,
                     std::span<const Tensor> targets, const LossSpec& loss);

/// Batch loss of predictions against targets (same shapes).
double loss_value(const RowMatrix& pred, const RowMatrix& target, std::size_t batch,
                  LossKind kind);

}  // namespace permeq
