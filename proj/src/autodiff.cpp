#include "permeq/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace permeq {

std::string_view to_string(LossKind k)
{
    return k == LossKind::mse ? "mse" : "cosine";
}

LossKind parse_loss_kind(std::string_view s)
{
    if (s == "mse")
        return LossKind::mse;
    if (s == "cosine")
        return LossKind::cosine;
    throw std::invalid_argument("unknown loss '" + std::string(s) + "' (expected mse|cosine)");
}

Gradients Gradients::zeros_like(const Network& net)
{
    Gradients g;
    for (auto block : net.parameter_blocks())
        g.blocks.emplace_back(block.size(), 0.0);
    return g;
}

double Gradients::squared_norm() const
{
    double s = 0.0;
    for (const auto& b : blocks)
        for (double v : b)
            s += v * v;
    return s;
}

// ---------------------------------------------------------------------------

Tape::Node Tape::push(RowMatrix value, std::function<void(const RowMatrix&)> back)
{
    Entry e;
    e.grad = RowMatrix::Zero(value.rows(), value.cols());
    e.value = std::move(value);
    e.back = std::move(back);
    nodes_.push_back(std::move(e));
    return nodes_.size() - 1;
}

void Tape::accumulate(Node id, const RowMatrix& g)
{
    nodes_[id].grad += g;
}

Tape::Node Tape::input(RowMatrix value)
{
    return push(std::move(value), nullptr);
}

Tape::Node Tape::equivariant(std::shared_ptr<const LayerKernel> kernel,
                             const EquivariantLayer& layer, Node x, std::size_t batch,
                             std::span<double> grad_w, std::span<double> grad_b)
{
    RowMatrix feats = kernel->features(value(x), batch);
    const RowMatrix fw = kernel->feature_weights(layer.weights());
    RowMatrix out = feats * fw;
    const RowMatrix bias = kernel->bias_rows(layer.bias());
    const auto rows = static_cast<Eigen::Index>(kernel->out_rows());
    for (std::size_t s = 0; s < batch; ++s)
        out.middleRows(static_cast<Eigen::Index>(s) * rows, rows) += bias;

    auto back = [this, kernel, x, batch, grad_w, grad_b, feats = std::move(feats),
                 fw](const RowMatrix& g) {
        kernel->feature_weights_adjoint(feats.transpose() * g, grad_w);
        kernel->bias_adjoint(g, batch, grad_b);
        accumulate(x, kernel->features_adjoint(g * fw.transpose(), batch));
    };
    return push(std::move(out), std::move(back));
}

Tape::Node Tape::relu(Node x)
{
    RowMatrix out = value(x).cwiseMax(0.0);
    auto back = [this, x](const RowMatrix& g) {
        accumulate(x, (value(x).array() > 0.0).select(g, 0.0));
    };
    return push(std::move(out), std::move(back));
}

Tape::Node Tape::pool(std::shared_ptr<const PoolKernel> kernel, Node x, std::size_t batch)
{
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    RowMatrix out = kernel->forward(value(x), batch, argmax.get());
    auto back = [this, kernel, x, batch, argmax](const RowMatrix& g) {
        accumulate(x, kernel->adjoint(g, batch, *argmax));
    };
    return push(std::move(out), std::move(back));
}

Tape::Node Tape::dense(const DenseLayer& layer, Node x, std::span<double> grad_w,
                       std::span<double> grad_b)
{
    Eigen::Map<const RowMatrix> w(layer.weights.data(), static_cast<Eigen::Index>(layer.in),
                                  static_cast<Eigen::Index>(layer.out));
    Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data(), static_cast<Eigen::Index>(layer.out));
    if (static_cast<std::size_t>(value(x).cols()) != layer.in)
        throw std::invalid_argument("dense layer input width mismatch");
    RowMatrix out = value(x) * w;
    out.rowwise() += b;
    auto back = [this, x, w, grad_w, grad_b](const RowMatrix& g) {
        Eigen::Map<RowMatrix> gw(grad_w.data(), w.rows(), w.cols());
        Eigen::Map<Eigen::RowVectorXd> gb(grad_b.data(), w.cols());
        gw.noalias() += value(x).transpose() * g;
        gb += g.colwise().sum();
        accumulate(x, g * w.transpose());
    };
    return push(std::move(out), std::move(back));
}

Tape::Node Tape::mse(Node x, RowMatrix target)
{
    const RowMatrix& v = value(x);
    if (v.rows() != target.rows() || v.cols() != target.cols())
        throw std::invalid_argument("mse: prediction and target shapes differ");
    const double count = static_cast<double>(v.size());
    RowMatrix out(1, 1);
    out(0, 0) = (v - target).squaredNorm() / count;
    auto back = [this, x, target = std::move(target), count](const RowMatrix& g) {
        accumulate(x, (2.0 * g(0, 0) / count) * (value(x) - target));
    };
    return push(std::move(out), std::move(back));
}

namespace {

constexpr double kNormFloor = 1e-12;

}  // namespace

Tape::Node Tape::cosine(Node x, RowMatrix target, std::size_t batch)
{
    const RowMatrix& v = value(x);
    if (v.rows() != target.rows() || v.cols() != target.cols())
        throw std::invalid_argument("cosine: prediction and target shapes differ");
    RowMatrix out(1, 1);
    out(0, 0) = loss_value(v, target, batch, LossKind::cosine);
    auto back = [this, x, target = std::move(target), batch](const RowMatrix& g) {
        const RowMatrix& v = value(x);
        const Eigen::Index per = v.size() / static_cast<Eigen::Index>(batch);
        RowMatrix gx = RowMatrix::Zero(v.rows(), v.cols());
        for (std::size_t s = 0; s < batch; ++s) {
            const auto off = static_cast<Eigen::Index>(s) * per;
            Eigen::Map<const Eigen::VectorXd> xs(v.data() + off, per);
            Eigen::Map<const Eigen::VectorXd> ys(target.data() + off, per);
            Eigen::Map<Eigen::VectorXd> gs(gx.data() + off, per);
            const double nx = std::max(xs.norm(), kNormFloor);
            const double ny = std::max(ys.norm(), kNormFloor);
            const double c = xs.dot(ys) / (nx * ny);
            // d(1 - c^2)/dx = -2c (y / (|x||y|) - c x / |x|^2)
            gs = (-2.0 * c * g(0, 0) / static_cast<double>(batch)) *
                 (ys / (nx * ny) - (c / (nx * nx)) * xs);
        }
        accumulate(x, gx);
    };
    return push(std::move(out), std::move(back));
}

void Tape::backward(Node root)
{
    if (nodes_.at(root).value.size() != 1)
        throw std::invalid_argument("backward needs a scalar root");
    nodes_[root].grad(0, 0) += 1.0;
    for (Node id = root + 1; id-- > 0;) {
        auto& e = nodes_[id];
        if (e.back)
            e.back(e.grad);
    }
}

// ---------------------------------------------------------------------------

NetworkPlan::NetworkPlan(const Network& net, std::size_t n_nodes, bool use_fast_ops)
    : n(n_nodes)
{
    for (const auto& layer : net.equivariant())
        layers.push_back(std::make_shared<const LayerKernel>(layer, n, use_fast_ops));
    if (net.spec().invariant_head)
        pool = std::make_shared<const PoolKernel>(net.spec().input_order, n, net.spec().pool,
                                                  net.pool_expansion());
}

RowMatrix stack_samples(std::span<const Tensor> samples)
{
    if (samples.empty())
        return {};
    const Shape shape = samples.front().shape();
    const std::size_t rows = shape.node_count();
    RowMatrix out(static_cast<Eigen::Index>(samples.size() * rows),
                  static_cast<Eigen::Index>(shape.features));
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (!(samples[s].shape() == shape))
            throw std::invalid_argument("samples differ in shape: " + to_string(shape) + " vs " +
                                        to_string(samples[s].shape()));
        std::copy(samples[s].data().begin(), samples[s].data().end(),
                  out.data() + s * rows * shape.features);
    }
    return out;
}

Tape::Node record_forward(Tape& tape, const Network& net, const NetworkPlan& plan,
                          const RowMatrix& inputs, std::size_t batch, Gradients* grads)
{
    // Without gradient storage the closures are never run, so empty spans suffice.
    auto slot = [&](std::size_t block) -> std::span<double> {
        return grads ? std::span<double>(grads->blocks.at(block)) : std::span<double>();
    };

    const auto& spec = net.spec();
    const auto& layers = net.equivariant();
    Tape::Node h = tape.input(inputs);
    std::size_t block = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto gw = slot(block);
        auto gb = slot(block + 1);
        h = tape.equivariant(plan.layers.at(i), layers[i], h, batch, gw, gb);
        block += 2;
        if (i + 1 < layers.size() || spec.invariant_head)
            h = tape.relu(h);
    }
    if (!spec.invariant_head)
        return h;
    h = tape.pool(plan.pool, h, batch);
    const auto& dense = net.dense();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        auto gw = slot(block);
        auto gb = slot(block + 1);
        h = tape.dense(dense[i], h, gw, gb);
        block += 2;
        if (i + 1 < dense.size())
            h = tape.relu(h);
    }
    return h;
}

double loss_value(const RowMatrix& pred, const RowMatrix& target, std::size_t batch,
                  LossKind kind)
{
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("loss: prediction and target shapes differ");
    if (kind == LossKind::mse)
        return (pred - target).squaredNorm() / static_cast<double>(pred.size());
    const Eigen::Index per = pred.size() / static_cast<Eigen::Index>(batch);
    double total = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
        const auto off = static_cast<Eigen::Index>(s) * per;
        Eigen::Map<const Eigen::VectorXd> xs(pred.data() + off, per);
        Eigen::Map<const Eigen::VectorXd> ys(target.data() + off, per);
        const double c =
            xs.dot(ys) / (std::max(xs.norm(), kNormFloor) * std::max(ys.norm(), kNormFloor));
        total += 1.0 - c * c;
    }
    return total / static_cast<double>(batch);
}

LossAndGrad grad(const Network& net, const NetworkPlan& plan, const RowMatrix& inputs,
                 const RowMatrix& targets, std::size_t batch, const LossSpec& loss)
{
    LossAndGrad result;
    result.grads = Gradients::zeros_like(net);
    Tape tape;
    const auto out = record_forward(tape, net, plan, inputs, batch, &result.grads);
    const auto root = loss.kind == LossKind::mse ? tape.mse(out, targets)
                                                 : tape.cosine(out, targets, batch);
    result.loss = tape.value(root)(0, 0);
    if (!std::isfinite(result.loss)) {
        double pnorm = 0.0;
        for (auto block : net.parameter_blocks())
            for (double v : block)
                pnorm += v * v;
        std::ostringstream msg;
        msg << "non-finite " << to_string(loss.kind) << " loss " << result.loss
            << " (batch " << batch << ", output max |y| " << tape.value(out).cwiseAbs().maxCoeff()
            << ", parameter norm " << std::sqrt(pnorm) << ", input max |x| "
            << inputs.cwiseAbs().maxCoeff() << ")";
        throw std::runtime_error(msg.str());
    }
    tape.backward(root);
    return result;
}

LossAndGrad grad(const Network& net, std::span<const Tensor> inputs,
                 std::span<const Tensor> targets, const LossSpec& loss)
{
    if (inputs.empty() || inputs.size() != targets.size())
        throw std::invalid_argument("grad: need equally many (nonzero) inputs and targets");
    const NetworkPlan plan(net, inputs.front().n());
    return grad(net, plan, stack_samples(inputs), stack_samples(targets), inputs.size(), loss);
}

RowMatrix predict(const Network& net, const NetworkPlan& plan, const RowMatrix& inputs,
                  std::size_t batch)
{
    constexpr std::size_t kChunk = 64;
    if (batch == 0)
        return {};
    const Eigen::Index in_rows = inputs.rows() / static_cast<Eigen::Index>(batch);
    RowMatrix out;
    Eigen::Index out_rows = 0;
    for (std::size_t start = 0; start < batch; start += kChunk) {
        const std::size_t count = std::min(kChunk, batch - start);
        Tape tape;
        const auto node = record_forward(
            tape, net, plan,
            inputs.middleRows(static_cast<Eigen::Index>(start) * in_rows,
                              static_cast<Eigen::Index>(count) * in_rows),
            count, nullptr);
        const RowMatrix& v = tape.value(node);
        if (start == 0) {
            out_rows = v.rows() / static_cast<Eigen::Index>(count);
            out.resize(out_rows * static_cast<Eigen::Index>(batch), v.cols());
        }
        out.middleRows(static_cast<Eigen::Index>(start) * out_rows, v.rows()) = v;
    }
    return out;
}

double evaluate_loss(const Network& net, const NetworkPlan& plan, const RowMatrix& inputs,
                     const RowMatrix& targets, std::size_t batch, const LossSpec& loss)
{
    return loss_value(predict(net, plan, inputs, batch), targets, batch, loss.kind);
}

double evaluate_loss(const Network& net, std::span<const Tensor> inputs,
                     std::span<const Tensor> targets, const LossSpec& loss)
{
    if (inputs.empty() || inputs.size() != targets.size())
        throw std::invalid_argument("evaluate_loss: need equally many (nonzero) inputs and targets");
    const NetworkPlan plan(net, inputs.front().n());
    return evaluate_loss(net, plan, stack_samples(inputs), stack_samples(targets), inputs.size(),
                         loss);
}

}  // namespace permeq
