#include "permeq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace permeq {

namespace {

void check_caps(std::size_t n, std::size_t dim)
{
    if (n == 0)
        throw std::invalid_argument("oracle needs n >= 1");
    if (n > kOracleMaxNodes)
        throw std::out_of_range("oracle enumerates all n! permutations and needs n <= " +
                                std::to_string(kOracleMaxNodes) + ", got " + std::to_string(n));
    if (dim > kOracleMaxDim)
        throw std::out_of_range("oracle projector dimension " + std::to_string(dim) +
                                " exceeds the cap of " + std::to_string(kOracleMaxDim));
}

std::size_t checked_pow(std::size_t n, int order)
{
    if (order < 0)
        throw std::invalid_argument("order must be non-negative");
    std::size_t v = 1;
    for (int i = 0; i < order; ++i) {
        v *= n;
        if (v > kOracleMaxDim)
            throw std::out_of_range("oracle projector dimension n^" + std::to_string(order) +
                                    " exceeds the cap of " + std::to_string(kOracleMaxDim));
    }
    return v;
}

Matrix kron(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Matrix dense_action(const Permutation& p, int order)
{
    return Matrix(kron_power_matrix(p, order));
}

double factorial(std::size_t n)
{
    double f = 1.0;
    for (std::size_t i = 2; i <= n; ++i)
        f *= static_cast<double>(i);
    return f;
}

double projector_error(const Matrix& phi)
{
    const double idem = (phi * phi - phi).cwiseAbs().maxCoeff();
    const double sym = (phi - phi.transpose()).cwiseAbs().maxCoeff();
    return std::max(idem, sym);
}

// Projector of (P^{(x)order}) (x) I_identity_dim built by summing the full group elements.
Matrix projector_with_identity(std::size_t n, int order, std::size_t identity_dim)
{
    const std::size_t dim = checked_pow(n, order) * identity_dim;
    check_caps(n, dim);
    const Matrix id = Matrix::Identity(static_cast<Eigen::Index>(identity_dim),
                                       static_cast<Eigen::Index>(identity_dim));
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for_each_permutation(n, [&](const Permutation& p) { sum += kron(dense_action(p, order), id); });
    return sum / factorial(n);
}

}  // namespace

Matrix averaging_projector(std::size_t n, int order)
{
    const std::size_t dim = checked_pow(n, order);
    check_caps(n, dim);
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for_each_permutation(n, [&](const Permutation& p) { sum += dense_action(p, order); });
    return sum / factorial(n);
}

ProjectorStats projector_stats(const Matrix& phi)
{
    ProjectorStats s;
    s.trace = phi.trace();
    s.idempotence_error = (phi * phi - phi).cwiseAbs().maxCoeff();
    s.symmetry_error = (phi - phi.transpose()).cwiseAbs().maxCoeff();
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (phi + phi.transpose()),
                                                    Eigen::EigenvaluesOnly);
    for (double lambda : eig.eigenvalues()) {
        s.eigenvalue_error = std::max(s.eigenvalue_error,
                                      std::min(std::abs(lambda), std::abs(lambda - 1.0)));
        if (lambda > 1e-8)
            ++s.rank;
    }
    if (s.eigenvalue_error > 1e-6)
        throw std::runtime_error("matrix is not a projector: an eigenvalue lies " +
                                 std::to_string(s.eigenvalue_error) + " away from {0, 1}");
    return s;
}

std::size_t fixed_subspace_dim(std::size_t n, int order)
{
    return projector_stats(averaging_projector(n, order)).rank;
}

BasisSpanCheck check_basis_spans_fixed_space(std::size_t n, int order)
{
    const Matrix phi = averaging_projector(n, order);
    BasisSpanCheck c;
    const ProjectorStats stats = projector_stats(phi);
    c.fixed_dim = stats.rank;
    std::vector<Vector> elements;
    for (const auto& b : invariant_basis(order, n)) {
        if (b.nonzeros() == 0)
            continue;
        const Tensor t = b.materialize();
        elements.emplace_back(Eigen::Map<const Vector>(t.data().data(),
                                                       static_cast<Eigen::Index>(t.data().size())));
    }
    c.nonzero_elements = elements.size();
    Matrix stacked(phi.rows(), static_cast<Eigen::Index>(elements.size()));
    for (std::size_t i = 0; i < elements.size(); ++i) {
        stacked.col(static_cast<Eigen::Index>(i)) = elements[i];
        c.max_fixed_residual = std::max(
            c.max_fixed_residual, (phi * elements[i] - elements[i]).cwiseAbs().maxCoeff());
        for (std::size_t j = 0; j < i; ++j)
            c.max_inner_product = std::max(c.max_inner_product, std::abs(elements[i].dot(elements[j])));
    }
    c.stacked_rank = elements.empty()
                         ? 0
                         : static_cast<std::size_t>(
                               Eigen::ColPivHouseholderQR<Matrix>(stacked).rank());
    c.passed = c.max_fixed_residual < 1e-10 && c.max_inner_product == 0.0 &&
               c.stacked_rank == c.fixed_dim &&
               stats.idempotence_error < 1e-10 && stats.symmetry_error < 1e-10;
    return c;
}

Rational Rational::make(std::int64_t num, std::int64_t den)
{
    if (den == 0)
        throw std::invalid_argument("zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const std::int64_t g = std::gcd(num, den);
    return {num / (g ? g : 1), den / (g ? g : 1)};
}

std::string Rational::to_string() const
{
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

Rational trace_moment(std::size_t n, int k)
{
    check_caps(n, 1);
    if (k < 0 || k > 16)
        throw std::out_of_range("trace_moment needs 0 <= k <= 16");
    std::int64_t total = 0;
    for_each_permutation(n, [&](const Permutation& p) {
        std::int64_t term = 1;
        const auto fixed = static_cast<std::int64_t>(p.fixed_points());
        for (int i = 0; i < k; ++i)
            term *= fixed;
        total += term;
    });
    std::int64_t count = 1;
    for (std::size_t i = 2; i <= n; ++i)
        count *= static_cast<std::int64_t>(i);
    return Rational::make(total, count);
}

DimensionCheck check_layer_dims_with_features(std::size_t n, int k, std::size_t d,
                                              std::size_t d_out, bool equivariant)
{
    if (k < 0 || d == 0 || d_out == 0)
        throw std::invalid_argument("layer dimension check needs k >= 0 and positive channels");
    const int weight_order = equivariant ? 2 * k : k;
    const int bias_order = equivariant ? k : 0;
    const Matrix weights = projector_with_identity(n, weight_order, d * d_out);
    const Matrix bias = projector_with_identity(n, bias_order, d_out);
    DimensionCheck c;
    c.linear_trace = weights.trace();
    c.bias_trace = bias.trace();
    c.linear_expected = d * d_out * effective_class_count(weight_order, n);
    c.bias_expected = d_out * effective_class_count(bias_order, n);
    c.max_projector_error = std::max(projector_error(weights), projector_error(bias));
    c.passed = std::abs(c.linear_trace - static_cast<double>(c.linear_expected)) < 1e-9 &&
               std::abs(c.bias_trace - static_cast<double>(c.bias_expected)) < 1e-9 &&
               c.max_projector_error < 1e-10;
    return c;
}

MultisetCheck check_multiset_dims(std::size_t n1, std::size_t n2, int k1, int k2, int l1, int l2)
{
    if (k1 < 0 || k2 < 0 || l1 < 0 || l2 < 0)
        throw std::invalid_argument("orders must be non-negative");
    const int o1 = k1 + l1;
    const int o2 = k2 + l2;
    const std::size_t dim = checked_pow(n1, o1) * checked_pow(n2, o2);
    check_caps(std::max(n1, n2), dim);
    check_caps(std::min(n1, n2), dim);
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for_each_permutation(n1, [&](const Permutation& p1) {
        const Matrix a = dense_action(p1, o1);
        for_each_permutation(n2, [&](const Permutation& p2) { sum += kron(a, dense_action(p2, o2)); });
    });
    const Matrix phi = sum / (factorial(n1) * factorial(n2));
    MultisetCheck c;
    c.trace = phi.trace();
    c.expected = effective_class_count(o1, n1) * effective_class_count(o2, n2);
    c.max_projector_error = projector_error(phi);
    c.passed = std::abs(c.trace - static_cast<double>(c.expected)) < 1e-9 &&
               c.max_projector_error < 1e-10;
    return c;
}

}  // namespace permeq
