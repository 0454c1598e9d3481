#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "permeq/basis.hpp"
#include "permeq/tensor.hpp"

namespace permeq {

/// Enumeration caps for the brute-force checks.
inline constexpr std::size_t kOracleMaxNodes = 7;
inline constexpr std::size_t kOracleMaxDim = 3000;

/// Calls f(p) for every permutation of {0..n-1} in lexicographic order.
template <typename F>
void for_each_permutation(std::size_t n, F&& f);

/// (1/n!) sum_p K(p): the orthogonal projector onto order-l tensors fixed by
/// every node permutation. Requires n <= 7 and n^l <= 3000.
Matrix averaging_projector(std::size_t n, int order);

struct ProjectorStats {
    std::size_t rank = 0;
    double trace = 0.0;
    double idempotence_error = 0.0;  // max |phi^2 - phi|
    double symmetry_error = 0.0;     // max |phi - phi^T|
    double eigenvalue_error = 0.0;   // max distance of an eigenvalue from {0, 1}
};

/// Rank counts eigenvalues above 1e-8. Throws std::runtime_error if any
/// eigenvalue is farther than 1e-6 from 0 or 1 (not a projector).
ProjectorStats projector_stats(const Matrix& phi);

/// Numerical rank of averaging_projector(n, order).
std::size_t fixed_subspace_dim(std::size_t n, int order);

struct BasisSpanCheck {
    bool passed = false;
    std::size_t fixed_dim = 0;
    std::size_t nonzero_elements = 0;
    std::size_t stacked_rank = 0;
    double max_fixed_residual = 0.0;  // max |phi vec(B) - vec(B)|
    double max_inner_product = 0.0;   // max |<B, B'>| over distinct pairs
};

/// Checks that each nonzero indicator tensor is fixed by the projector, that
/// they are pairwise orthogonal and that together they span the fixed space.
BasisSpanCheck check_basis_spans_fixed_space(std::size_t n, int order);

/// Reduced fraction with a positive denominator.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rational make(std::int64_t num, std::int64_t den);
    bool is_integer() const { return den == 1; }
    std::string to_string() const;
    friend bool operator==(const Rational&, const Rational&) = default;
};

/// (1/n!) sum over all permutations of (number of fixed points)^k, exactly.
Rational trace_moment(std::size_t n, int k);

struct DimensionCheck {
    bool passed = false;
    double linear_trace = 0.0;
    std::uint64_t linear_expected = 0;
    double bias_trace = 0.0;
    std::uint64_t bias_expected = 0;
    double max_projector_error = 0.0;  // idempotence / symmetry of all projectors built
};

/// Projector traces for a layer R^{n^k x d} -> R^{d'} (invariant) or
/// R^{n^k x d} -> R^{n^k x d'} (equivariant): the weights live in the fixed
/// space of P^{(x)k} (x) I_d (x) I_d' (resp. P^{(x)2k}), the bias in that of
/// I_d' (resp. P^{(x)k} (x) I_d'). Expected values use the number of nonempty
/// equality classes, which equals the Bell number when n >= order.
DimensionCheck check_layer_dims_with_features(std::size_t n, int k, std::size_t d,
                                              std::size_t d_out, bool equivariant);

struct MultisetCheck {
    bool passed = false;
    double trace = 0.0;
    std::uint64_t expected = 0;
    double max_projector_error = 0.0;
};

/// Projector trace for the action P1^{(x)(k1+l1)} (x) P2^{(x)(k2+l2)} of the
/// product of two symmetric groups, summed over all pairs (P1, P2).
MultisetCheck check_multiset_dims(std::size_t n1, std::size_t n2, int k1, int k2, int l1,
                                  int l2);

// ---------------------------------------------------------------------------

template <typename F>
void for_each_permutation(std::size_t n, F&& f)
{
    std::vector<std::size_t> map(n);
    for (std::size_t i = 0; i < n; ++i)
        map[i] = i;
    do {
        f(Permutation(map));
    } while (std::next_permutation(map.begin(), map.end()));
}

}  // namespace permeq
