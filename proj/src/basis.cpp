#include "permeq/basis.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <stdexcept>

namespace permeq {

namespace {

constexpr int kMaxBasisOrder = 12;

void check_node_count(std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("node count must be at least 1");
}

}  // namespace

BasisElement::BasisElement(SetPartition partition, std::size_t n, int in_order)
    : partition_(std::move(partition)), n_(n), in_order_(in_order)
{
    check_node_count(n);
    if (in_order < 0 || in_order > order())
        throw std::invalid_argument("basis element input order out of range");
}

bool BasisElement::contains(std::span<const std::size_t> index) const
{
    if (index.size() != partition_.size())
        return false;
    for (std::size_t v : index)
        if (v >= n_)
            return false;
    return equality_pattern_code(index) == partition_.code();
}

std::vector<std::size_t> BasisElement::coordinates() const
{
    // Enumerate injective block assignments instead of scanning [n]^l.
    const std::size_t m = partition_.num_blocks();
    std::vector<std::size_t> out;
    if (m > n_)
        return out;
    out.reserve(nonzeros());
    std::vector<std::size_t> values(m, 0);
    std::vector<bool> used(n_, false);
    std::vector<std::size_t> index(partition_.size());
    auto emit = [&] {
        for (std::size_t i = 0; i < index.size(); ++i)
            index[i] = values[partition_.block_of(i)];
        out.push_back(linear_index(index, n_));
    };
    auto assign = [&](auto&& self, std::size_t block) -> void {
        if (block == m) {
            emit();
            return;
        }
        for (std::size_t v = 0; v < n_; ++v) {
            if (used[v])
                continue;
            used[v] = true;
            values[block] = v;
            self(self, block + 1);
            used[v] = false;
        }
    };
    assign(assign, 0);
    std::sort(out.begin(), out.end());
    return out;
}

Tensor BasisElement::materialize() const
{
    Tensor t(Shape{order(), n_, 1});
    for (std::size_t flat : coordinates())
        t[flat] = 1.0;
    return t;
}

Matrix BasisElement::operator_matrix() const
{
    const std::size_t in_size = int_pow(n_, in_order_);
    const std::size_t out_size = int_pow(n_, out_order());
    Matrix m = Matrix::Zero(out_size, in_size);
    for (std::size_t flat : coordinates())
        m(flat % out_size, flat / out_size) = 1.0;
    return m;
}

std::vector<BasisElement> mixed_basis(int k, int l, std::size_t n)
{
    if (k < 0 || l < 0 || k + l > kMaxBasisOrder)
        throw std::out_of_range("basis order k+l must lie in [0, 12]");
    check_node_count(n);
    std::vector<BasisElement> out;
    if (k + l == 0) {
        out.emplace_back(SetPartition{}, n, 0);
        return out;
    }
    for (auto& p : enumerate_partitions(k + l))
        out.emplace_back(std::move(p), n, k);
    return out;
}

std::vector<BasisElement> invariant_basis(int k, std::size_t n)
{
    if (k > 6)
        throw std::out_of_range("invariant_basis: order capped at 6");
    return mixed_basis(k, 0, n);
}

std::vector<BasisElement> equivariant_basis(int k, std::size_t n)
{
    if (k > 6)
        throw std::out_of_range("equivariant_basis: order capped at 6");
    return mixed_basis(k, k, n);
}

std::uint64_t nominal_dim(int l)
{
    return bell(l);
}

std::uint64_t effective_dim(int l, std::size_t n)
{
    return effective_class_count(l, n);
}

Matrix stack_materialized(std::span<const BasisElement> basis)
{
    if (basis.empty())
        return {};
    const std::size_t rows = int_pow(basis[0].n(), basis[0].order());
    Matrix m = Matrix::Zero(rows, basis.size());
    for (std::size_t c = 0; c < basis.size(); ++c)
        for (std::size_t flat : basis[c].coordinates())
            m(flat, c) = 1.0;
    return m;
}

std::size_t mixed_linear_index(std::span<const std::size_t> index,
                               std::span<const std::size_t> dims)
{
    std::size_t flat = 0;
    for (std::size_t i = 0; i < dims.size(); ++i)
        flat = flat * dims[i] + index[i];
    return flat;
}

void mixed_unravel(std::size_t flat, std::span<const std::size_t> dims,
                   std::span<std::size_t> out)
{
    for (std::size_t i = dims.size(); i-- > 0;) {
        out[i] = flat % dims[i];
        flat /= dims[i];
    }
}

MultiNodeBasisElement::MultiNodeBasisElement(std::vector<NodeSetSignature> signature,
                                             std::vector<SetPartition> partitions)
    : signature_(std::move(signature)), partitions_(std::move(partitions))
{
    if (signature_.size() != partitions_.size())
        throw std::invalid_argument("one partition per node set required");
    std::size_t in_offset = 0;
    std::size_t total_in = 0;
    for (const auto& s : signature_) {
        check_node_count(s.n);
        total_in += static_cast<std::size_t>(s.in_order);
    }
    std::size_t out_offset = total_in;
    for (std::size_t i = 0; i < signature_.size(); ++i) {
        const auto& s = signature_[i];
        if (partitions_[i].size() != static_cast<std::size_t>(s.in_order + s.out_order))
            throw std::invalid_argument("partition size does not match k_i + l_i");
        std::vector<std::size_t> g;
        for (int j = 0; j < s.in_order; ++j)
            g.push_back(in_offset++);
        for (int j = 0; j < s.out_order; ++j)
            g.push_back(out_offset++);
        groups_.push_back(std::move(g));
    }
}

std::vector<std::size_t> MultiNodeBasisElement::dims() const
{
    std::vector<std::size_t> d;
    for (const auto& s : signature_)
        d.insert(d.end(), s.in_order, s.n);
    for (const auto& s : signature_)
        d.insert(d.end(), s.out_order, s.n);
    return d;
}

std::vector<std::size_t> MultiNodeBasisElement::position_sets() const
{
    std::vector<std::size_t> sets;
    for (std::size_t i = 0; i < signature_.size(); ++i)
        sets.insert(sets.end(), signature_[i].in_order, i);
    for (std::size_t i = 0; i < signature_.size(); ++i)
        sets.insert(sets.end(), signature_[i].out_order, i);
    return sets;
}

bool MultiNodeBasisElement::contains(std::span<const std::size_t> index) const
{
    std::vector<std::size_t> group_index;
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        group_index.clear();
        for (std::size_t pos : groups_[i]) {
            if (pos >= index.size() || index[pos] >= signature_[i].n)
                return false;
            group_index.push_back(index[pos]);
        }
        if (equality_pattern_code(group_index) != partitions_[i].code())
            return false;
    }
    return true;
}

std::uint64_t MultiNodeBasisElement::nonzeros() const
{
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < partitions_.size(); ++i)
        count *= class_size(partitions_[i], signature_[i].n);
    return count;
}

std::vector<double> MultiNodeBasisElement::materialize() const
{
    const auto d = dims();
    std::size_t total = 1;
    for (std::size_t e : d)
        total *= e;
    std::vector<double> out(total, 0.0);
    std::vector<std::size_t> index(d.size());
    for (std::size_t flat = 0; flat < total; ++flat) {
        mixed_unravel(flat, d, index);
        if (contains(index))
            out[flat] = 1.0;
    }
    return out;
}

std::vector<MultiNodeBasisElement> multiset_basis(std::span<const NodeSetSignature> signature)
{
    if (signature.empty())
        throw std::invalid_argument("multiset_basis: empty signature");
    std::vector<std::vector<SetPartition>> per_set;
    for (const auto& s : signature) {
        const int l = s.in_order + s.out_order;
        if (s.in_order < 0 || s.out_order < 0 || l > kMaxBasisOrder)
            throw std::out_of_range("multiset_basis: per-set order out of range");
        per_set.push_back(l == 0 ? std::vector<SetPartition>{SetPartition{}}
                                 : enumerate_partitions(l));
    }
    std::vector<MultiNodeBasisElement> out;
    std::vector<std::size_t> choice(signature.size(), 0);
    const std::vector<NodeSetSignature> sig(signature.begin(), signature.end());
    while (true) {
        std::vector<SetPartition> parts;
        for (std::size_t i = 0; i < choice.size(); ++i)
            parts.push_back(per_set[i][choice[i]]);
        out.emplace_back(sig, std::move(parts));
        std::size_t i = choice.size();
        while (i-- > 0) {
            if (++choice[i] < per_set[i].size())
                break;
            choice[i] = 0;
        }
        if (i == static_cast<std::size_t>(-1))
            break;
    }
    return out;
}

Subspan type_split_subspan(std::span<const int> position_types)
{
    const int l = static_cast<int>(position_types.size());
    PartitionTable table(l);
    std::vector<int> types(position_types.begin(), position_types.end());
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());

    std::vector<std::vector<std::size_t>> positions(types.size());
    for (std::size_t p = 0; p < position_types.size(); ++p) {
        auto t = std::lower_bound(types.begin(), types.end(), position_types[p]) - types.begin();
        positions[t].push_back(p);
    }
    std::vector<PartitionTable> per_type;
    for (const auto& pos : positions)
        per_type.emplace_back(static_cast<int>(pos.size()));

    std::size_t m = 1;
    for (const auto& t : per_type)
        m *= t.size();

    Subspan s;
    s.expansion = Matrix::Zero(table.size(), m);
    s.labels.resize(m);
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t rem = c;
        std::vector<std::size_t> pick(per_type.size());
        for (std::size_t t = per_type.size(); t-- > 0;) {
            pick[t] = rem % per_type[t].size();
            rem /= per_type[t].size();
        }
        std::string label;
        for (std::size_t t = 0; t < per_type.size(); ++t) {
            if (t)
                label += "|";
            label += per_type[t][pick[t]].rgs_string();
        }
        s.labels[c] = label;
        for (std::size_t mu = 0; mu < table.size(); ++mu) {
            bool match = true;
            for (std::size_t t = 0; t < per_type.size() && match; ++t)
                match = table[mu].restrict_to(positions[t]) == per_type[t][pick[t]];
            if (match)
                s.expansion(mu, c) = 1.0;
        }
    }
    return s;
}

Matrix combine_operator(std::span<const double> coefficients, int k, int l, std::size_t n)
{
    auto basis = mixed_basis(k, l, n);
    if (coefficients.size() != basis.size())
        throw std::invalid_argument("combine_operator: coefficient count mismatch");
    Matrix m = Matrix::Zero(int_pow(n, l), int_pow(n, k));
    for (std::size_t i = 0; i < basis.size(); ++i)
        if (coefficients[i] != 0.0)
            m += coefficients[i] * basis[i].operator_matrix();
    return m;
}

std::vector<HartfordOperator> hartford_subbasis(std::size_t n)
{
    // Positions (a_row, a_col, b_row, b_col); rows and columns permuted separately.
    const std::array<int, 4> types{0, 1, 0, 1};
    Subspan span = type_split_subspan(types);
    // Coarse classes are labelled (row pattern | column pattern) over the pairs
    // (a_row, b_row) and (a_col, b_col): "00" equal, "01" different. Each
    // operator is the union of the classes it sums over.
    struct Named {
        const char* name;
        std::vector<const char*> labels;
    };
    const std::array<Named, 4> order{{
        {"identity", {"00|00"}},
        {"row_broadcast_column_sums", {"00|00", "01|00"}},
        {"column_broadcast_row_sums", {"00|00", "00|01"}},
        {"total_sum_broadcast", {"00|00", "01|00", "00|01", "01|01"}},
    }};
    std::vector<HartfordOperator> out;
    for (const auto& named : order) {
        HartfordOperator op;
        op.name = named.name;
        op.coefficients.assign(static_cast<std::size_t>(span.expansion.rows()), 0.0);
        for (const char* label : named.labels) {
            auto it = std::find(span.labels.begin(), span.labels.end(), label);
            if (it == span.labels.end())
                throw std::logic_error("hartford_subbasis: missing coarse class");
            const auto c = static_cast<Eigen::Index>(it - span.labels.begin());
            for (Eigen::Index mu = 0; mu < span.expansion.rows(); ++mu)
                op.coefficients[static_cast<std::size_t>(mu)] += span.expansion(mu, c);
        }
        op.matrix = combine_operator(op.coefficients, 2, 2, n);
        out.push_back(std::move(op));
    }
    return out;
}

}  // namespace permeq
