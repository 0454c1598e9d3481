#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "permeq/basis.hpp"
#include "permeq/partitions.hpp"
#include "permeq/tensor.hpp"

namespace permeq {

/// Which span of linear maps a layer is restricted to. `hartford` permutes
/// rows and columns independently and keeps only the coarser classes
/// (4 of the 15 order-2 operators, a constant bias, one pooling class).
enum class BasisKind { full, hartford };

/// Aggregation used by invariant pooling: class mean (`sum`) or class max.
enum class PoolMode { sum, max };

std::string_view to_string(BasisKind b);
std::string_view to_string(PoolMode m);
BasisKind parse_basis_kind(std::string_view s);
PoolMode parse_pool_mode(std::string_view s);

// ---------------------------------------------------------------------------
// Order-2 operators

inline constexpr std::size_t kOrder2OpCount = 15;

/// Names in the fixed order: identity, transpose, diag, row sums on
/// rows/cols/diag, column sums on rows/cols/diag, total on all/diag, trace on
/// all/diag, diagonal on rows/cols.
const std::array<std::string_view, kOrder2OpCount>& order2_op_names();

/// Induced infinity-norm of each unnormalized operator at node count n.
std::array<double, kOrder2OpCount> order2_op_norms(std::size_t n);

/// The 15 operators applied to a square matrix, optionally divided by their norms.
std::vector<Matrix> order2_fast_ops(const Matrix& a, bool normalized = true);

/// Operators applied to one n x n x d sample (row-major, channels innermost).
/// `out` has n^2 rows of 15*d entries, laid out [op][channel].
void order2_ops_forward(std::span<const double> x, std::size_t n, std::size_t d,
                        bool normalized, std::span<double> out);
/// Adds the adjoint of order2_ops_forward applied to `grad_out` into `grad_x`.
void order2_ops_adjoint(std::span<const double> grad_out, std::size_t n, std::size_t d,
                        bool normalized, std::span<double> grad_x);

/// Row i gives operator i as coefficients over equivariant_basis(2, n).
Matrix order2_ops_in_indicator_basis(std::size_t n, bool normalized = true);

/// Change of basis X (15 x 15): indicator operator mu equals sum_i X(mu, i) op_i
/// for every class that is nonempty at n; rows of empty classes are zero.
Matrix order2_indicator_from_ops(std::size_t n, bool normalized = true);

// ---------------------------------------------------------------------------
// Class sums

/// S[b, mu, j] = sum over a with (a, b) in class mu of x[a, j], for maps from
/// order-k to order-l tensors. Works one sample at a time.
class ClassSumMap {
public:
    ClassSumMap(int in_order, int out_order, std::size_t n);

    int in_order() const { return in_order_; }
    int out_order() const { return out_order_; }
    std::size_t n() const { return n_; }
    std::size_t num_classes() const { return table_->size(); }
    const PartitionTable& table() const { return *table_; }

    /// x: n^k x d, s: n^l x (classes*d), overwritten.
    void forward(std::span<const double> x, std::size_t d, std::span<double> s) const;
    /// Accumulates the adjoint into grad_x.
    void adjoint(std::span<const double> grad_s, std::size_t d, std::span<double> grad_x) const;

private:
    std::size_t class_of(std::size_t a, std::size_t b, std::span<std::size_t> scratch) const;

    int in_order_;
    int out_order_;
    std::size_t n_;
    std::size_t in_size_;
    std::size_t out_size_;
    std::shared_ptr<const PartitionTable> table_;
    std::vector<std::uint16_t> lookup_;  // class per (a, b) when small enough
};

// ---------------------------------------------------------------------------
// Layers

/// Linear layer R^{n^k x d} -> R^{n^l x d'} commuting with node permutations.
///
/// Weights are indexed [coefficient][j][j'] and biases [bias coefficient][j'].
/// With the full basis a coefficient is a partition of [k+l] in canonical order
/// (first k positions input); with the Hartford basis it is a coarse class of
/// type_split_subspan. When `normalized` is set, the weight of class mu is
/// divided by the number of input entries it sums into each output entry, so
/// every class contributes a mean and activations stay O(1) in n. The Hartford
/// basis counts rows and columns separately, which keeps it inside its span.
class EquivariantLayer {
public:
    EquivariantLayer(int in_order, int out_order, std::size_t in_features,
                     std::size_t out_features, BasisKind basis = BasisKind::full,
                     bool normalized = false);

    int in_order() const { return in_order_; }
    int out_order() const { return out_order_; }
    std::size_t in_features() const { return in_features_; }
    std::size_t out_features() const { return out_features_; }
    BasisKind basis() const { return basis_; }
    bool normalized() const { return normalized_; }

    std::size_t num_weight_coefficients() const { return weight_expansion_.cols(); }
    std::size_t num_bias_coefficients() const { return bias_expansion_.cols(); }
    std::size_t num_parameters() const { return weights_.size() + bias_.size(); }

    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& bias() const { return bias_; }

    double& weight(std::size_t coef, std::size_t j, std::size_t jp)
    {
        return weights_[(coef * in_features_ + j) * out_features_ + jp];
    }
    double& bias_at(std::size_t coef, std::size_t jp) { return bias_[coef * out_features_ + jp]; }

    /// b(k+l) x coefficients; identity for the full basis.
    const Matrix& weight_expansion() const { return weight_expansion_; }
    /// b(l) x bias coefficients.
    const Matrix& bias_expansion() const { return bias_expansion_; }

    /// Factor applied to indicator class `mu` at node count n.
    double class_scale(std::size_t mu, std::size_t n) const;

    /// Effective weights over the b(k+l) indicator classes, scale included.
    std::vector<double> indicator_weights(std::size_t n) const;
    /// Effective bias over the b(l) output classes.
    std::vector<double> indicator_bias() const;

private:
    int in_order_;
    int out_order_;
    std::size_t in_features_;
    std::size_t out_features_;
    BasisKind basis_;
    bool normalized_;
    Matrix weight_expansion_;
    Matrix bias_expansion_;
    struct BlockCounts {
        std::size_t output = 0;
        std::size_t input_only = 0;
    };
    std::vector<std::vector<BlockCounts>> block_counts_;  // per class, per position type
    std::vector<double> weights_;
    std::vector<double> bias_;
};

/// Invariant layer R^{n^k x d} -> R^{d'}: an equivariant layer with output order 0.
class InvariantLayer : public EquivariantLayer {
public:
    InvariantLayer(int order, std::size_t in_features, std::size_t out_features,
                   BasisKind basis = BasisKind::full, bool normalized = false)
        : EquivariantLayer(order, 0, in_features, out_features, basis, normalized)
    {}
};

/// Position types for the Hartford split: rows 0, columns 1. Order-1 tensors
/// are column-indexed.
std::vector<int> hartford_position_types(int order);

/// Precomputed application plan of a layer at a fixed node count. Holds the
/// feature map (generic class sums or, for 2 -> 2 layers, the 15 operators),
/// the map from raw weights to feature weights and the per-entry bias classes.
class LayerKernel {
public:
    LayerKernel(const EquivariantLayer& layer, std::size_t n, bool use_fast_ops);

    std::size_t n() const { return n_; }
    std::size_t in_rows() const { return in_rows_; }
    std::size_t out_rows() const { return out_rows_; }
    std::size_t num_features() const { return static_cast<std::size_t>(mixing_.rows()); }
    bool fast() const { return fast_; }

    /// x: (batch * n^k) x d  ->  (batch * n^l) x (features * d).
    RowMatrix features(const RowMatrix& x, std::size_t batch) const;
    /// Adjoint of features(); returns (batch * n^k) x d.
    RowMatrix features_adjoint(const RowMatrix& grad_features, std::size_t batch) const;

    /// Feature weights ((features * d) x d') from raw layer weights.
    RowMatrix feature_weights(std::span<const double> raw) const;
    /// Accumulates the raw-weight gradient from a feature-weight gradient.
    void feature_weights_adjoint(const RowMatrix& grad, std::span<double> grad_raw) const;

    /// Per-entry bias (n^l x d') from raw biases.
    RowMatrix bias_rows(std::span<const double> raw) const;
    /// Accumulates raw-bias gradients from grad_out ((batch * n^l) x d').
    void bias_adjoint(const RowMatrix& grad_out, std::size_t batch,
                      std::span<double> grad_raw) const;

    /// out = features(x) * feature_weights + bias.
    RowMatrix apply(const EquivariantLayer& layer, const RowMatrix& x, std::size_t batch) const;

private:
    std::size_t n_;
    std::size_t d_in_;
    std::size_t d_out_;
    std::size_t in_rows_;
    std::size_t out_rows_;
    bool fast_;
    std::unique_ptr<ClassSumMap> sums_;
    Matrix mixing_;        // features x raw coefficients
    Matrix bias_mixing_;   // b(l) x raw bias coefficients
    std::vector<std::size_t> bias_class_;  // output entry -> b(l) class
};

/// Generic path: contracts with the indicator classes without materializing
/// the n^{k+l} coefficient tensor. Throws std::invalid_argument on shape mismatch.
Tensor apply_equivariant(const EquivariantLayer& layer, const Tensor& a);

/// 2 -> 2 layers through the 15 order-2 operators.
Tensor apply_equivariant_fast(const EquivariantLayer& layer, const Tensor& a);

/// Returns the d' outputs as a vector.
std::vector<double> apply_invariant(const InvariantLayer& layer, const Tensor& a);

// ---------------------------------------------------------------------------
// Pooling

/// Aggregation over the equality classes of an order-k tensor (or coarse
/// classes when `expansion` has fewer columns than b(k)).
class PoolKernel {
public:
    PoolKernel(int order, std::size_t n, PoolMode mode, const Matrix& expansion);

    std::size_t num_classes() const { return class_sizes_.size(); }
    std::size_t rows_per_sample() const { return entry_class_.size(); }

    /// x: (batch * n^k) x d -> batch x (classes * d). `argmax` receives the
    /// winning row for each output in max mode (unused for sum).
    RowMatrix forward(const RowMatrix& x, std::size_t batch,
                      std::vector<std::size_t>* argmax = nullptr) const;
    RowMatrix adjoint(const RowMatrix& grad, std::size_t batch,
                      const std::vector<std::size_t>& argmax) const;

private:
    PoolMode mode_;
    std::vector<std::size_t> entry_class_;
    std::vector<std::uint64_t> class_sizes_;
};

/// Mean (sum mode) or max of each channel over each class of [n]^k, ordered
/// [class][channel]; empty classes give 0.
std::vector<double> invariant_pool(const Tensor& a, PoolMode mode);

// ---------------------------------------------------------------------------
// Networks

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // [in][out]
    std::vector<double> bias;     // [out]
};

struct NetworkSpec {
    int input_order = 2;
    std::size_t input_features = 1;
    /// Output channels of each equivariant layer (1 to 4 layers).
    std::vector<std::size_t> widths{1};
    /// Order of the last equivariant layer's output when there is no invariant head.
    int output_order = 2;
    bool invariant_head = false;
    PoolMode pool = PoolMode::max;
    /// Dense layers after pooling; the last entry is the output size.
    std::vector<std::size_t> dense_widths;
    BasisKind basis = BasisKind::full;
    bool normalized = true;
};

/// Equivariant layers with ReLU between them, then either nothing (equivariant
/// output) or ReLU, invariant pooling and dense layers with ReLU between.
class Network {
public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    std::vector<EquivariantLayer>& equivariant() { return equivariant_; }
    const std::vector<EquivariantLayer>& equivariant() const { return equivariant_; }
    std::vector<DenseLayer>& dense() { return dense_; }
    const std::vector<DenseLayer>& dense() const { return dense_; }

    int output_order() const { return spec_.invariant_head ? 0 : spec_.output_order; }
    std::size_t output_features() const;

    /// Parameter blocks in a fixed order: per equivariant layer weights then
    /// bias, then per dense layer weights then bias.
    std::vector<std::span<double>> parameter_blocks();
    std::vector<std::span<const double>> parameter_blocks() const;
    std::vector<std::string> parameter_names() const;
    std::size_t num_parameters() const;

    /// Pooling expansion for the invariant head (identity for the full basis).
    Matrix pool_expansion() const;

private:
    NetworkSpec spec_;
    std::vector<EquivariantLayer> equivariant_;
    std::vector<DenseLayer> dense_;
};

/// Fills weights with uniform(+-sqrt(6 / (fan_in + fan_out))), where an
/// equivariant layer has fan_in = d * coefficients and fan_out = d'; biases 0.
void init_params(Network& net, std::uint64_t seed);

/// Order-l output tensor, or an order-0 tensor holding the dense outputs.
Tensor forward(const Network& net, const Tensor& a, bool use_fast_ops = true);

/// Batched forward on samples of equal shape.
std::vector<Tensor> forward_batch(const Network& net, std::span<const Tensor> inputs,
                                  bool use_fast_ops = true);

/// Checkpoint: magic "PEQCKPT1", u64 header length, JSON header, then all
/// parameters as little-endian float64 in parameter_blocks() order.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace permeq
