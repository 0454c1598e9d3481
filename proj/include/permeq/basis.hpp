#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "permeq/partitions.hpp"
#include "permeq/tensor.hpp"

namespace permeq {

/// Indicator tensor B^gamma over [n]^l: entry a is 1 iff the equality pattern of
/// a is `partition`. For layer bases the first `in_order` positions index the
/// input tensor and the remaining ones the output tensor.
class BasisElement {
public:
    BasisElement(SetPartition partition, std::size_t n, int in_order = 0);

    int order() const { return static_cast<int>(partition_.size()); }
    int in_order() const { return in_order_; }
    int out_order() const { return order() - in_order_; }
    std::size_t n() const { return n_; }
    const SetPartition& partition() const { return partition_; }

    bool contains(std::span<const std::size_t> index) const;
    std::uint64_t nonzeros() const { return class_size(partition_, n_); }

    /// Flat (row-major) positions of the support, ascending.
    std::vector<std::size_t> coordinates() const;

    /// Dense 0/1 single-channel tensor of order l.
    Tensor materialize() const;

    /// Operator matrix (n^out x n^in): entry (b, a) is 1 iff (a, b) is in the class.
    Matrix operator_matrix() const;

private:
    SetPartition partition_;
    std::size_t n_;
    int in_order_;
};

/// Basis of linear maps R^{n^k} -> R^{n^l}: one element per partition of [k+l].
std::vector<BasisElement> mixed_basis(int k, int l, std::size_t n);
/// b(k) elements of order k.
std::vector<BasisElement> invariant_basis(int k, std::size_t n);
/// b(2k) elements of order 2k.
std::vector<BasisElement> equivariant_basis(int k, std::size_t n);

/// Number of basis elements, b(l).
std::uint64_t nominal_dim(int l);
/// Number of basis elements that are nonzero at node count n.
std::uint64_t effective_dim(int l, std::size_t n);

/// Stacks vec(materialize()) of each element as a column.
Matrix stack_materialized(std::span<const BasisElement> basis);

/// One node set of a multi-node-set layer: input order, output order, size.
struct NodeSetSignature {
    int in_order = 0;
    int out_order = 0;
    std::size_t n = 1;
};

/// Product indicator over several node sets. Index layout is
/// (a_1, ..., a_m, b_1, ..., b_m) with a_i in [n_i]^{k_i}, b_i in [n_i]^{l_i};
/// the entry is 1 iff (a_i, b_i) has pattern partitions[i] for every i.
class MultiNodeBasisElement {
public:
    MultiNodeBasisElement(std::vector<NodeSetSignature> signature,
                          std::vector<SetPartition> partitions);

    const std::vector<NodeSetSignature>& signature() const { return signature_; }
    const std::vector<SetPartition>& partitions() const { return partitions_; }

    /// Extent of every index position in layout order.
    std::vector<std::size_t> dims() const;
    /// Node set owning each index position in layout order.
    std::vector<std::size_t> position_sets() const;

    bool contains(std::span<const std::size_t> index) const;
    std::uint64_t nonzeros() const;
    /// Dense 0/1 data, row-major over dims().
    std::vector<double> materialize() const;

private:
    std::vector<NodeSetSignature> signature_;
    std::vector<SetPartition> partitions_;
    std::vector<std::vector<std::size_t>> groups_;  // layout positions of (a_i, b_i)
};

/// All prod_i b(k_i + l_i) product elements, first node set varying slowest.
std::vector<MultiNodeBasisElement> multiset_basis(std::span<const NodeSetSignature> signature);

/// Flat row-major index over mixed-radix `dims`.
std::size_t mixed_linear_index(std::span<const std::size_t> index,
                               std::span<const std::size_t> dims);
void mixed_unravel(std::size_t flat, std::span<const std::size_t> dims,
                   std::span<std::size_t> out);

/// Sub-span of the order-l basis obtained when index positions labelled with
/// different types are permuted independently (e.g. rows and columns of a
/// matrix). `expansion` is b(l) x m with 0/1 entries: column c lists the
/// indicator classes whose union is the c-th coarse class.
struct Subspan {
    Matrix expansion;
    std::vector<std::string> labels;
};

Subspan type_split_subspan(std::span<const int> position_types);

/// The 4-operator exchangeable-matrix layer (rows and columns permuted
/// independently), each written in the 15-element order-4 indicator basis.
struct HartfordOperator {
    std::string name;
    std::vector<double> coefficients;  // over equivariant_basis(2, n), canonical order
    Matrix matrix;                     // n^2 x n^2 operator on row-major vec
};

/// {identity, row-broadcast of column sums, column-broadcast of row sums,
/// total-sum broadcast}.
std::vector<HartfordOperator> hartford_subbasis(std::size_t n);

/// Operator matrix (n^l x n^k) of sum_mu coefficients[mu] * B^mu over mixed_basis(k, l, n).
Matrix combine_operator(std::span<const double> coefficients, int k, int l, std::size_t n);

}  // namespace permeq
