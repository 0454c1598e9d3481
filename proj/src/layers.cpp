#include "permeq/layers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace permeq {

namespace {

constexpr std::size_t kLookupCap = std::size_t{1} << 22;

std::shared_ptr<const PartitionTable> shared_table(int order)
{
    return std::make_shared<const PartitionTable>(order);
}

Matrix identity_expansion(std::size_t size)
{
    return Matrix::Identity(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
}

}  // namespace

std::string_view to_string(BasisKind b)
{
    return b == BasisKind::full ? "full" : "hartford";
}

std::string_view to_string(PoolMode m)
{
    return m == PoolMode::sum ? "sum" : "max";
}

BasisKind parse_basis_kind(std::string_view s)
{
    if (s == "full")
        return BasisKind::full;
    if (s == "hartford")
        return BasisKind::hartford;
    throw std::invalid_argument("unknown basis '" + std::string(s) + "' (expected full|hartford)");
}

PoolMode parse_pool_mode(std::string_view s)
{
    if (s == "sum")
        return PoolMode::sum;
    if (s == "max")
        return PoolMode::max;
    throw std::invalid_argument("unknown pool mode '" + std::string(s) + "' (expected sum|max)");
}

// ---------------------------------------------------------------------------

ClassSumMap::ClassSumMap(int in_order, int out_order, std::size_t n)
    : in_order_(in_order), out_order_(out_order), n_(n),
      in_size_(int_pow(n, in_order)), out_size_(int_pow(n, out_order)),
      table_(shared_table(in_order + out_order))
{
    if (n == 0)
        throw std::invalid_argument("ClassSumMap: n must be positive");
    const std::size_t pairs = in_size_ * out_size_;
    if (pairs <= kLookupCap && table_->size() <= std::numeric_limits<std::uint16_t>::max()) {
        lookup_.resize(pairs);
        std::vector<std::size_t> scratch(in_order + out_order);
        for (std::size_t a = 0; a < in_size_; ++a)
            for (std::size_t b = 0; b < out_size_; ++b) {
                unravel_index(a, n_, std::span(scratch).first(in_order));
                unravel_index(b, n_, std::span(scratch).subspan(in_order));
                lookup_[a * out_size_ + b] = static_cast<std::uint16_t>(table_->classify(scratch));
            }
    }
}

std::size_t ClassSumMap::class_of(std::size_t a, std::size_t b,
                                  std::span<std::size_t> scratch) const
{
    if (!lookup_.empty())
        return lookup_[a * out_size_ + b];
    unravel_index(a, n_, scratch.first(in_order_));
    unravel_index(b, n_, scratch.subspan(in_order_));
    return table_->classify(scratch);
}

void ClassSumMap::forward(std::span<const double> x, std::size_t d, std::span<double> s) const
{
    const std::size_t classes = num_classes();
    if (x.size() != in_size_ * d || s.size() != out_size_ * classes * d)
        throw std::invalid_argument("ClassSumMap::forward: buffer size mismatch");
    std::fill(s.begin(), s.end(), 0.0);
    std::vector<std::size_t> scratch(in_order_ + out_order_);
    for (std::size_t b = 0; b < out_size_; ++b) {
        double* row = s.data() + b * classes * d;
        for (std::size_t a = 0; a < in_size_; ++a) {
            const std::size_t mu = class_of(a, b, scratch);
            const double* xa = x.data() + a * d;
            double* target = row + mu * d;
            for (std::size_t j = 0; j < d; ++j)
                target[j] += xa[j];
        }
    }
}

void ClassSumMap::adjoint(std::span<const double> grad_s, std::size_t d,
                          std::span<double> grad_x) const
{
    const std::size_t classes = num_classes();
    if (grad_x.size() != in_size_ * d || grad_s.size() != out_size_ * classes * d)
        throw std::invalid_argument("ClassSumMap::adjoint: buffer size mismatch");
    std::vector<std::size_t> scratch(in_order_ + out_order_);
    for (std::size_t b = 0; b < out_size_; ++b) {
        const double* row = grad_s.data() + b * classes * d;
        for (std::size_t a = 0; a < in_size_; ++a) {
            const std::size_t mu = class_of(a, b, scratch);
            const double* src = row + mu * d;
            double* ga = grad_x.data() + a * d;
            for (std::size_t j = 0; j < d; ++j)
                ga[j] += src[j];
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<int> hartford_position_types(int order)
{
    switch (order) {
    case 0: return {};
    case 1: return {1};
    case 2: return {0, 1};
    default: throw std::invalid_argument("hartford basis is defined for orders <= 2 only");
    }
}

EquivariantLayer::EquivariantLayer(int in_order, int out_order, std::size_t in_features,
                                   std::size_t out_features, BasisKind basis, bool normalized)
    : in_order_(in_order), out_order_(out_order), in_features_(in_features),
      out_features_(out_features), basis_(basis), normalized_(normalized)
{
    if (in_order < 0 || out_order < 0 || in_order + out_order > 8)
        throw std::out_of_range("layer orders must satisfy 0 <= k, l and k + l <= 8");
    if (in_features == 0 || out_features == 0)
        throw std::invalid_argument("layer channel counts must be positive");

    const PartitionTable table(in_order + out_order);
    const PartitionTable bias_table(out_order);
    if (basis == BasisKind::full) {
        weight_expansion_ = identity_expansion(table.size());
        bias_expansion_ = identity_expansion(bias_table.size());
    } else {
        auto types = hartford_position_types(in_order);
        auto out_types = hartford_position_types(out_order);
        types.insert(types.end(), out_types.begin(), out_types.end());
        weight_expansion_ = type_split_subspan(types).expansion;
        bias_expansion_ = type_split_subspan(out_types).expansion;
    }
    // Normalisation counts, per position type (a single type for the full
    // basis): blocks touching an output position and blocks of inputs only.
    std::vector<int> types(static_cast<std::size_t>(in_order + out_order), 0);
    if (basis == BasisKind::hartford) {
        types = hartford_position_types(in_order);
        const auto out_types = hartford_position_types(out_order);
        types.insert(types.end(), out_types.begin(), out_types.end());
    }
    const int num_types = types.empty() ? 1 : *std::max_element(types.begin(), types.end()) + 1;
    for (const auto& p : table.partitions()) {
        std::vector<BlockCounts> counts(static_cast<std::size_t>(num_types));
        for (const auto& block : p.blocks())
            for (int tau = 0; tau < num_types; ++tau) {
                bool any = false, output = false;
                for (std::size_t pos : block)
                    if (types[pos] == tau) {
                        any = true;
                        output = output || pos >= static_cast<std::size_t>(in_order);
                    }
                if (any)
                    ++(output ? counts[tau].output : counts[tau].input_only);
            }
        block_counts_.push_back(std::move(counts));
    }
    weights_.assign(weight_expansion_.cols() * in_features * out_features, 0.0);
    bias_.assign(bias_expansion_.cols() * out_features, 0.0);
}

double EquivariantLayer::class_scale(std::size_t mu, std::size_t n) const
{
    if (!normalized_)
        return 1.0;
    // Number of input entries summed into one output entry: per type, the
    // input-only blocks take distinct values avoiding those fixed by the output.
    double count = 1.0;
    for (const BlockCounts& c : block_counts_.at(mu))
        for (std::size_t i = 0; i < c.input_only; ++i) {
            if (n <= c.output + i)
                return 1.0;  // empty class
            count *= static_cast<double>(n - c.output - i);
        }
    return 1.0 / count;
}

std::vector<double> EquivariantLayer::indicator_weights(std::size_t n) const
{
    const auto classes = static_cast<std::size_t>(weight_expansion_.rows());
    const auto coefs = static_cast<std::size_t>(weight_expansion_.cols());
    const std::size_t pair = in_features_ * out_features_;
    std::vector<double> out(classes * pair, 0.0);
    for (std::size_t mu = 0; mu < classes; ++mu) {
        const double scale = class_scale(mu, n);
        for (std::size_t c = 0; c < coefs; ++c) {
            const double e = weight_expansion_(mu, c);
            if (e == 0.0)
                continue;
            for (std::size_t q = 0; q < pair; ++q)
                out[mu * pair + q] += scale * e * weights_[c * pair + q];
        }
    }
    return out;
}

std::vector<double> EquivariantLayer::indicator_bias() const
{
    const auto classes = static_cast<std::size_t>(bias_expansion_.rows());
    const auto coefs = static_cast<std::size_t>(bias_expansion_.cols());
    std::vector<double> out(classes * out_features_, 0.0);
    for (std::size_t l = 0; l < classes; ++l)
        for (std::size_t c = 0; c < coefs; ++c)
            for (std::size_t q = 0; q < out_features_; ++q)
                out[l * out_features_ + q] += bias_expansion_(l, c) * bias_[c * out_features_ + q];
    return out;
}

// ---------------------------------------------------------------------------

LayerKernel::LayerKernel(const EquivariantLayer& layer, std::size_t n, bool use_fast_ops)
    : n_(n), d_in_(layer.in_features()), d_out_(layer.out_features()),
      in_rows_(int_pow(n, layer.in_order())), out_rows_(int_pow(n, layer.out_order())),
      fast_(use_fast_ops && layer.in_order() == 2 && layer.out_order() == 2)
{
    if (n == 0)
        throw std::invalid_argument("LayerKernel: n must be positive");
    const Matrix& expansion = layer.weight_expansion();
    Matrix scaled = expansion;
    for (Eigen::Index mu = 0; mu < expansion.rows(); ++mu)
        scaled.row(mu) *= layer.class_scale(static_cast<std::size_t>(mu), n);
    if (fast_) {
        // feature weight of op i = sum_mu X(mu, i) * indicator weight of mu
        mixing_ = order2_indicator_from_ops(n).transpose() * scaled;
    } else {
        sums_ = std::make_unique<ClassSumMap>(layer.in_order(), layer.out_order(), n);
        mixing_ = scaled;
    }
    bias_mixing_ = layer.bias_expansion();
    const PartitionTable bias_table(layer.out_order());
    bias_class_.resize(out_rows_);
    std::vector<std::size_t> idx(layer.out_order());
    for (std::size_t b = 0; b < out_rows_; ++b) {
        unravel_index(b, n, idx);
        bias_class_[b] = layer.out_order() == 0 ? 0 : bias_table.classify(idx);
    }
}

RowMatrix LayerKernel::features(const RowMatrix& x, std::size_t batch) const
{
    if (static_cast<std::size_t>(x.rows()) != batch * in_rows_ ||
        static_cast<std::size_t>(x.cols()) != d_in_)
        throw std::invalid_argument("layer input has shape " + std::to_string(x.rows()) + "x" +
                                    std::to_string(x.cols()) + ", expected " +
                                    std::to_string(batch * in_rows_) + "x" +
                                    std::to_string(d_in_));
    const std::size_t width = num_features() * d_in_;
    RowMatrix out(static_cast<Eigen::Index>(batch * out_rows_), static_cast<Eigen::Index>(width));
    for (std::size_t s = 0; s < batch; ++s) {
        std::span<const double> xs(x.data() + s * in_rows_ * d_in_, in_rows_ * d_in_);
        std::span<double> os(out.data() + s * out_rows_ * width, out_rows_ * width);
        if (fast_)
            order2_ops_forward(xs, n_, d_in_, true, os);
        else
            sums_->forward(xs, d_in_, os);
    }
    return out;
}

RowMatrix LayerKernel::features_adjoint(const RowMatrix& grad_features, std::size_t batch) const
{
    const std::size_t width = num_features() * d_in_;
    RowMatrix gx = RowMatrix::Zero(static_cast<Eigen::Index>(batch * in_rows_),
                                   static_cast<Eigen::Index>(d_in_));
    for (std::size_t s = 0; s < batch; ++s) {
        std::span<const double> gs(grad_features.data() + s * out_rows_ * width,
                                   out_rows_ * width);
        std::span<double> gxs(gx.data() + s * in_rows_ * d_in_, in_rows_ * d_in_);
        if (fast_)
            order2_ops_adjoint(gs, n_, d_in_, true, gxs);
        else
            sums_->adjoint(gs, d_in_, gxs);
    }
    return gx;
}

RowMatrix LayerKernel::feature_weights(std::span<const double> raw) const
{
    const auto feats = static_cast<std::size_t>(mixing_.rows());
    const auto coefs = static_cast<std::size_t>(mixing_.cols());
    const std::size_t pair = d_in_ * d_out_;
    if (raw.size() != coefs * pair)
        throw std::invalid_argument("feature_weights: raw weight count mismatch");
    // raw viewed as coefs x (d * d'); result feats x (d * d') reshaped to (feats*d) x d'.
    Eigen::Map<const RowMatrix> r(raw.data(), static_cast<Eigen::Index>(coefs),
                                  static_cast<Eigen::Index>(pair));
    RowMatrix mixed = mixing_ * r;
    return Eigen::Map<RowMatrix>(mixed.data(), static_cast<Eigen::Index>(feats * d_in_),
                                 static_cast<Eigen::Index>(d_out_));
}

void LayerKernel::feature_weights_adjoint(const RowMatrix& grad, std::span<double> grad_raw) const
{
    const auto feats = static_cast<std::size_t>(mixing_.rows());
    const auto coefs = static_cast<std::size_t>(mixing_.cols());
    const std::size_t pair = d_in_ * d_out_;
    Eigen::Map<const RowMatrix> g(grad.data(), static_cast<Eigen::Index>(feats),
                                  static_cast<Eigen::Index>(pair));
    Eigen::Map<RowMatrix> out(grad_raw.data(), static_cast<Eigen::Index>(coefs),
                              static_cast<Eigen::Index>(pair));
    out.noalias() += mixing_.transpose() * g;
}

RowMatrix LayerKernel::bias_rows(std::span<const double> raw) const
{
    const auto coefs = static_cast<std::size_t>(bias_mixing_.cols());
    if (raw.size() != coefs * d_out_)
        throw std::invalid_argument("bias_rows: raw bias count mismatch");
    Eigen::Map<const RowMatrix> r(raw.data(), static_cast<Eigen::Index>(coefs),
                                  static_cast<Eigen::Index>(d_out_));
    const RowMatrix per_class = bias_mixing_ * r;
    RowMatrix out(static_cast<Eigen::Index>(out_rows_), static_cast<Eigen::Index>(d_out_));
    for (std::size_t b = 0; b < out_rows_; ++b)
        out.row(static_cast<Eigen::Index>(b)) =
            per_class.row(static_cast<Eigen::Index>(bias_class_[b]));
    return out;
}

void LayerKernel::bias_adjoint(const RowMatrix& grad_out, std::size_t batch,
                               std::span<double> grad_raw) const
{
    RowMatrix per_class = RowMatrix::Zero(bias_mixing_.rows(), static_cast<Eigen::Index>(d_out_));
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t b = 0; b < out_rows_; ++b)
            per_class.row(static_cast<Eigen::Index>(bias_class_[b])) +=
                grad_out.row(static_cast<Eigen::Index>(s * out_rows_ + b));
    Eigen::Map<RowMatrix> out(grad_raw.data(), bias_mixing_.cols(),
                              static_cast<Eigen::Index>(d_out_));
    out.noalias() += bias_mixing_.transpose() * per_class;
}

RowMatrix LayerKernel::apply(const EquivariantLayer& layer, const RowMatrix& x,
                             std::size_t batch) const
{
    RowMatrix out = features(x, batch) * feature_weights(layer.weights());
    const RowMatrix bias = bias_rows(layer.bias());
    for (std::size_t s = 0; s < batch; ++s)
        out.middleRows(static_cast<Eigen::Index>(s * out_rows_),
                       static_cast<Eigen::Index>(out_rows_)) += bias;
    return out;
}

namespace {

RowMatrix as_rows(const Tensor& a)
{
    return Eigen::Map<const RowMatrix>(a.data().data(), static_cast<Eigen::Index>(a.node_count()),
                                       static_cast<Eigen::Index>(a.features()));
}

Tensor from_rows(const RowMatrix& m, int order, std::size_t n)
{
    return Tensor(Shape{order, n, static_cast<std::size_t>(m.cols())},
                  std::vector<double>(m.data(), m.data() + m.size()));
}

void check_layer_input(const EquivariantLayer& layer, const Tensor& a)
{
    if (a.order() != layer.in_order())
        throw std::invalid_argument("layer expects order-" + std::to_string(layer.in_order()) +
                                    " input, got order " + std::to_string(a.order()));
    if (a.features() != layer.in_features())
        throw std::invalid_argument("layer expects " + std::to_string(layer.in_features()) +
                                    " input channels, got " + std::to_string(a.features()));
}

}  // namespace

Tensor apply_equivariant(const EquivariantLayer& layer, const Tensor& a)
{
    check_layer_input(layer, a);
    const LayerKernel kernel(layer, a.n(), false);
    return from_rows(kernel.apply(layer, as_rows(a), 1), layer.out_order(), a.n());
}

Tensor apply_equivariant_fast(const EquivariantLayer& layer, const Tensor& a)
{
    if (layer.in_order() != 2 || layer.out_order() != 2)
        throw std::invalid_argument("fast path requires a 2 -> 2 layer");
    check_layer_input(layer, a);
    const LayerKernel kernel(layer, a.n(), true);
    return from_rows(kernel.apply(layer, as_rows(a), 1), 2, a.n());
}

std::vector<double> apply_invariant(const InvariantLayer& layer, const Tensor& a)
{
    const Tensor out = apply_equivariant(layer, a);
    return {out.data().begin(), out.data().end()};
}

// ---------------------------------------------------------------------------

PoolKernel::PoolKernel(int order, std::size_t n, PoolMode mode, const Matrix& expansion)
    : mode_(mode)
{
    const PartitionTable table(order);
    if (static_cast<std::size_t>(expansion.rows()) != table.size())
        throw std::invalid_argument("pool expansion rows must equal b(k)");
    std::vector<std::size_t> coarse(table.size());
    for (std::size_t mu = 0; mu < table.size(); ++mu) {
        Eigen::Index c = 0;
        if (expansion.row(static_cast<Eigen::Index>(mu)).maxCoeff(&c) != 1.0)
            throw std::invalid_argument("pool expansion must map each class to one coarse class");
        coarse[mu] = static_cast<std::size_t>(c);
    }
    class_sizes_.assign(static_cast<std::size_t>(expansion.cols()), 0);
    const std::size_t entries = int_pow(n, order);
    entry_class_.resize(entries);
    std::vector<std::size_t> idx(order);
    for (std::size_t e = 0; e < entries; ++e) {
        unravel_index(e, n, idx);
        const std::size_t c = order == 0 ? 0 : coarse[table.classify(idx)];
        entry_class_[e] = c;
        ++class_sizes_[c];
    }
}

RowMatrix PoolKernel::forward(const RowMatrix& x, std::size_t batch,
                              std::vector<std::size_t>* argmax) const
{
    const std::size_t rows = entry_class_.size();
    const auto d = static_cast<std::size_t>(x.cols());
    const std::size_t classes = class_sizes_.size();
    if (static_cast<std::size_t>(x.rows()) != batch * rows)
        throw std::invalid_argument("pool input row count mismatch");
    RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(batch),
                                    static_cast<Eigen::Index>(classes * d));
    if (mode_ == PoolMode::sum) {
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t e = 0; e < rows; ++e)
                for (std::size_t j = 0; j < d; ++j)
                    out(s, entry_class_[e] * d + j) += x(s * rows + e, j);
        for (std::size_t c = 0; c < classes; ++c)
            if (class_sizes_[c] > 0)
                for (std::size_t j = 0; j < d; ++j)
                    out.col(c * d + j) /= static_cast<double>(class_sizes_[c]);
        return out;
    }
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> best(batch * classes * d, none);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t e = 0; e < rows; ++e)
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t slot = (s * classes + entry_class_[e]) * d + j;
                const std::size_t r = s * rows + e;
                if (best[slot] == none || x(r, j) > x(best[slot], j))
                    best[slot] = r;
            }
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t q = 0; q < classes * d; ++q) {
            const std::size_t r = best[s * classes * d + q];
            out(s, q) = r == none ? 0.0 : x(r, q % d);
        }
    if (argmax)
        *argmax = std::move(best);
    return out;
}

RowMatrix PoolKernel::adjoint(const RowMatrix& grad, std::size_t batch,
                              const std::vector<std::size_t>& argmax) const
{
    const std::size_t rows = entry_class_.size();
    const std::size_t classes = class_sizes_.size();
    const std::size_t d = static_cast<std::size_t>(grad.cols()) / classes;
    RowMatrix gx = RowMatrix::Zero(static_cast<Eigen::Index>(batch * rows),
                                   static_cast<Eigen::Index>(d));
    if (mode_ == PoolMode::sum) {
        for (std::size_t s = 0; s < batch; ++s)
            for (std::size_t e = 0; e < rows; ++e) {
                const std::size_t c = entry_class_[e];
                const double inv = 1.0 / static_cast<double>(class_sizes_[c]);
                for (std::size_t j = 0; j < d; ++j)
                    gx(s * rows + e, j) = grad(s, c * d + j) * inv;
            }
        return gx;
    }
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t q = 0; q < classes * d; ++q) {
            const std::size_t r = argmax.at(s * classes * d + q);
            if (r != none)
                gx(r, q % d) += grad(s, q);
        }
    return gx;
}

std::vector<double> invariant_pool(const Tensor& a, PoolMode mode)
{
    const PoolKernel kernel(a.order(), a.n(), mode,
                            identity_expansion(PartitionTable(a.order()).size()));
    const RowMatrix out = kernel.forward(as_rows(a), 1);
    return {out.data(), out.data() + out.size()};
}

// ---------------------------------------------------------------------------

Network::Network(NetworkSpec spec)
    : spec_(std::move(spec))
{
    if (spec_.widths.empty() || spec_.widths.size() > 4)
        throw std::invalid_argument("network needs 1 to 4 equivariant layers");
    if (spec_.invariant_head && (spec_.dense_widths.empty() || spec_.dense_widths.size() > 3))
        throw std::invalid_argument("invariant head needs 1 to 3 dense layers");
    if (!spec_.invariant_head && !spec_.dense_widths.empty())
        throw std::invalid_argument("dense layers require an invariant head");
    std::size_t d = spec_.input_features;
    for (std::size_t i = 0; i < spec_.widths.size(); ++i) {
        const bool last = i + 1 == spec_.widths.size();
        const int out_order =
            (last && !spec_.invariant_head) ? spec_.output_order : spec_.input_order;
        equivariant_.emplace_back(spec_.input_order, out_order, d, spec_.widths[i], spec_.basis,
                                  spec_.normalized);
        d = spec_.widths[i];
    }
    if (spec_.invariant_head) {
        std::size_t in = static_cast<std::size_t>(pool_expansion().cols()) * d;
        for (std::size_t w : spec_.dense_widths) {
            if (w == 0)
                throw std::invalid_argument("dense width must be positive");
            DenseLayer layer;
            layer.in = in;
            layer.out = w;
            layer.weights.assign(in * w, 0.0);
            layer.bias.assign(w, 0.0);
            dense_.push_back(std::move(layer));
            in = w;
        }
    }
}

std::size_t Network::output_features() const
{
    return spec_.invariant_head ? dense_.back().out : equivariant_.back().out_features();
}

Matrix Network::pool_expansion() const
{
    if (spec_.basis == BasisKind::full)
        return identity_expansion(PartitionTable(spec_.input_order).size());
    const auto types = hartford_position_types(spec_.input_order);
    return type_split_subspan(types).expansion;
}

std::vector<std::span<double>> Network::parameter_blocks()
{
    std::vector<std::span<double>> blocks;
    for (auto& l : equivariant_) {
        blocks.emplace_back(l.weights());
        blocks.emplace_back(l.bias());
    }
    for (auto& l : dense_) {
        blocks.emplace_back(l.weights);
        blocks.emplace_back(l.bias);
    }
    return blocks;
}

std::vector<std::span<const double>> Network::parameter_blocks() const
{
    std::vector<std::span<const double>> blocks;
    for (const auto& l : equivariant_) {
        blocks.emplace_back(l.weights());
        blocks.emplace_back(l.bias());
    }
    for (const auto& l : dense_) {
        blocks.emplace_back(l.weights);
        blocks.emplace_back(l.bias);
    }
    return blocks;
}

std::vector<std::string> Network::parameter_names() const
{
    std::vector<std::string> names;
    for (std::size_t i = 0; i < equivariant_.size(); ++i) {
        names.push_back("equivariant" + std::to_string(i) + ".weights");
        names.push_back("equivariant" + std::to_string(i) + ".bias");
    }
    for (std::size_t i = 0; i < dense_.size(); ++i) {
        names.push_back("dense" + std::to_string(i) + ".weights");
        names.push_back("dense" + std::to_string(i) + ".bias");
    }
    return names;
}

std::size_t Network::num_parameters() const
{
    std::size_t total = 0;
    for (auto b : parameter_blocks())
        total += b.size();
    return total;
}

void init_params(Network& net, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    for (auto& l : net.equivariant()) {
        const double fan_in = static_cast<double>(l.in_features() * l.num_weight_coefficients());
        const double fan_out = static_cast<double>(l.out_features());
        std::uniform_real_distribution<double> u(-std::sqrt(6.0 / (fan_in + fan_out)),
                                                 std::sqrt(6.0 / (fan_in + fan_out)));
        for (double& w : l.weights())
            w = u(rng);
        std::fill(l.bias().begin(), l.bias().end(), 0.0);
    }
    for (auto& l : net.dense()) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (double& w : l.weights)
            w = u(rng);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

std::vector<Tensor> forward_batch(const Network& net, std::span<const Tensor> inputs,
                                  bool use_fast_ops)
{
    if (inputs.empty())
        return {};
    const Shape shape = inputs.front().shape();
    const auto& spec = net.spec();
    if (shape.order != spec.input_order || shape.features != spec.input_features)
        throw std::invalid_argument("network input shape " + to_string(shape) +
                                    " does not match architecture");
    const std::size_t batch = inputs.size();
    const std::size_t n = shape.n;
    const std::size_t rows = shape.node_count();
    RowMatrix x(static_cast<Eigen::Index>(batch * rows), static_cast<Eigen::Index>(shape.features));
    for (std::size_t s = 0; s < batch; ++s) {
        if (!(inputs[s].shape() == shape))
            throw std::invalid_argument("forward_batch: inputs differ in shape");
        std::copy(inputs[s].data().begin(), inputs[s].data().end(), x.data() + s * rows * shape.features);
    }

    const auto& layers = net.equivariant();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerKernel kernel(layers[i], n, use_fast_ops);
        x = kernel.apply(layers[i], x, batch);
        const bool last = i + 1 == layers.size();
        if (!last || spec.invariant_head)
            x = x.cwiseMax(0.0);
    }

    std::vector<Tensor> out;
    out.reserve(batch);
    if (!spec.invariant_head) {
        const std::size_t out_rows = int_pow(n, spec.output_order);
        const auto d = static_cast<std::size_t>(x.cols());
        for (std::size_t s = 0; s < batch; ++s)
            out.emplace_back(Shape{spec.output_order, n, d},
                             std::vector<double>(x.data() + s * out_rows * d,
                                                 x.data() + (s + 1) * out_rows * d));
        return out;
    }

    const PoolKernel pool(spec.input_order, n, spec.pool, net.pool_expansion());
    RowMatrix h = pool.forward(x, batch);
    const auto& dense = net.dense();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        Eigen::Map<const RowMatrix> w(dense[i].weights.data(), static_cast<Eigen::Index>(dense[i].in),
                                      static_cast<Eigen::Index>(dense[i].out));
        Eigen::Map<const Eigen::RowVectorXd> b(dense[i].bias.data(),
                                               static_cast<Eigen::Index>(dense[i].out));
        RowMatrix next = h * w;
        next.rowwise() += b;
        if (i + 1 < dense.size())
            next = next.cwiseMax(0.0);
        h = std::move(next);
    }
    for (std::size_t s = 0; s < batch; ++s)
        out.emplace_back(Shape{0, n, static_cast<std::size_t>(h.cols())},
                         std::vector<double>(h.row(static_cast<Eigen::Index>(s)).data(),
                                             h.row(static_cast<Eigen::Index>(s)).data() + h.cols()));
    return out;
}

Tensor forward(const Network& net, const Tensor& a, bool use_fast_ops)
{
    return std::move(forward_batch(net, std::span(&a, 1), use_fast_ops).front());
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'E', 'Q', 'C', 'K', 'P', 'T', '1'};

nlohmann::json spec_to_json(const NetworkSpec& s)
{
    return {{"input_order", s.input_order},
            {"input_features", s.input_features},
            {"widths", s.widths},
            {"output_order", s.output_order},
            {"invariant_head", s.invariant_head},
            {"pool", std::string(to_string(s.pool))},
            {"dense_widths", s.dense_widths},
            {"basis", std::string(to_string(s.basis))},
            {"normalized", s.normalized}};
}

NetworkSpec spec_from_json(const nlohmann::json& j)
{
    NetworkSpec s;
    s.input_order = j.at("input_order").get<int>();
    s.input_features = j.at("input_features").get<std::size_t>();
    s.widths = j.at("widths").get<std::vector<std::size_t>>();
    s.output_order = j.at("output_order").get<int>();
    s.invariant_head = j.at("invariant_head").get<bool>();
    s.pool = parse_pool_mode(j.at("pool").get<std::string>());
    s.dense_widths = j.at("dense_widths").get<std::vector<std::size_t>>();
    s.basis = parse_basis_kind(j.at("basis").get<std::string>());
    s.normalized = j.at("normalized").get<bool>();
    return s;
}

template <typename T>
void write_le(std::ostream& out, T value)
{
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_le(std::istream& in)
{
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof value))
        throw std::runtime_error("checkpoint truncated");
    return value;
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    nlohmann::json header = {{"network", spec_to_json(net.spec())},
                             {"parameter_names", net.parameter_names()},
                             {"num_parameters", net.num_parameters()}};
    const std::string text = header.dump();
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    write_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (auto block : net.parameter_blocks())
        for (double v : block)
            write_le(out, v);
    if (!out)
        throw std::runtime_error("failed writing '" + path + "'");
}

Network load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path + "'");
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error("'" + path + "' is not a checkpoint");
    const auto length = read_le<std::uint64_t>(in);
    if (length > (std::uint64_t{1} << 24))
        throw std::runtime_error("checkpoint header too large");
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length)))
        throw std::runtime_error("checkpoint truncated");
    const auto header = nlohmann::json::parse(text);
    Network net(spec_from_json(header.at("network")));
    if (header.at("num_parameters").get<std::size_t>() != net.num_parameters())
        throw std::runtime_error("checkpoint parameter count does not match architecture");
    for (auto block : net.parameter_blocks())
        for (double& v : block)
            v = read_le<double>(in);
    return net;
}

}  // namespace permeq
