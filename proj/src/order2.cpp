#include <stdexcept>

#include <Eigen/QR>

#include "permeq/layers.hpp"

namespace permeq {

namespace {

// Kernel predicate of each unnormalized operator on (a1, a2, b1, b2): the
// operator matrix has a 1 at (output b, input a) iff the predicate holds.
bool op_kernel(std::size_t op, std::span<const std::uint8_t> v)
{
    const auto a1 = v[0], a2 = v[1], b1 = v[2], b2 = v[3];
    switch (op) {
    case 0: return a1 == b1 && a2 == b2;
    case 1: return a1 == b2 && a2 == b1;
    case 2: return a1 == a2 && b1 == b2 && a1 == b1;
    case 3: return a1 == b1;
    case 4: return a1 == b2;
    case 5: return b1 == b2 && a1 == b1;
    case 6: return a2 == b1;
    case 7: return a2 == b2;
    case 8: return b1 == b2 && a2 == b1;
    case 9: return true;
    case 10: return b1 == b2;
    case 11: return a1 == a2;
    case 12: return a1 == a2 && b1 == b2;
    case 13: return a1 == a2 && a1 == b1;
    case 14: return a1 == a2 && a1 == b2;
    default: throw std::out_of_range("order-2 operator index");
    }
}

}  // namespace

const std::array<std::string_view, kOrder2OpCount>& order2_op_names()
{
    static const std::array<std::string_view, kOrder2OpCount> names{
        "identity",          "transpose",          "diag",
        "row_sum_on_rows",   "row_sum_on_cols",    "row_sum_on_diag",
        "col_sum_on_rows",   "col_sum_on_cols",    "col_sum_on_diag",
        "total_sum_on_all",  "total_sum_on_diag",  "diag_sum_on_all",
        "diag_sum_on_diag",  "diag_on_rows",       "diag_on_cols",
    };
    return names;
}

std::array<double, kOrder2OpCount> order2_op_norms(std::size_t n)
{
    const double dn = static_cast<double>(n);
    return {1, 1, 1, dn, dn, dn, dn, dn, dn, dn * dn, dn * dn, dn, dn, 1, 1};
}

void order2_ops_forward(std::span<const double> x, std::size_t n, std::size_t d,
                        bool normalized, std::span<double> out)
{
    if (x.size() != n * n * d || out.size() != n * n * kOrder2OpCount * d)
        throw std::invalid_argument("order2_ops_forward: buffer size mismatch");
    const auto norms = order2_op_norms(n);
    std::array<double, kOrder2OpCount> s{};
    for (std::size_t i = 0; i < kOrder2OpCount; ++i)
        s[i] = normalized ? 1.0 / norms[i] : 1.0;

    std::vector<double> row(n * d, 0.0), col(n * d, 0.0), dg(n * d, 0.0);
    std::vector<double> total(d, 0.0), trace(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < d; ++c) {
                const double v = x[(i * n + j) * d + c];
                row[i * d + c] += v;
                col[j * d + c] += v;
                total[c] += v;
                if (i == j) {
                    dg[i * d + c] = v;
                    trace[c] += v;
                }
            }

    const std::size_t stride = kOrder2OpCount * d;
    for (std::size_t b1 = 0; b1 < n; ++b1)
        for (std::size_t b2 = 0; b2 < n; ++b2) {
            double* o = out.data() + (b1 * n + b2) * stride;
            const bool on_diag = b1 == b2;
            for (std::size_t c = 0; c < d; ++c) {
                o[0 * d + c] = s[0] * x[(b1 * n + b2) * d + c];
                o[1 * d + c] = s[1] * x[(b2 * n + b1) * d + c];
                o[2 * d + c] = on_diag ? s[2] * dg[b1 * d + c] : 0.0;
                o[3 * d + c] = s[3] * row[b1 * d + c];
                o[4 * d + c] = s[4] * row[b2 * d + c];
                o[5 * d + c] = on_diag ? s[5] * row[b1 * d + c] : 0.0;
                o[6 * d + c] = s[6] * col[b1 * d + c];
                o[7 * d + c] = s[7] * col[b2 * d + c];
                o[8 * d + c] = on_diag ? s[8] * col[b1 * d + c] : 0.0;
                o[9 * d + c] = s[9] * total[c];
                o[10 * d + c] = on_diag ? s[10] * total[c] : 0.0;
                o[11 * d + c] = s[11] * trace[c];
                o[12 * d + c] = on_diag ? s[12] * trace[c] : 0.0;
                o[13 * d + c] = s[13] * dg[b1 * d + c];
                o[14 * d + c] = s[14] * dg[b2 * d + c];
            }
        }
}

void order2_ops_adjoint(std::span<const double> grad_out, std::size_t n, std::size_t d,
                        bool normalized, std::span<double> grad_x)
{
    if (grad_x.size() != n * n * d || grad_out.size() != n * n * kOrder2OpCount * d)
        throw std::invalid_argument("order2_ops_adjoint: buffer size mismatch");
    const auto norms = order2_op_norms(n);
    std::array<double, kOrder2OpCount> s{};
    for (std::size_t i = 0; i < kOrder2OpCount; ++i)
        s[i] = normalized ? 1.0 / norms[i] : 1.0;

    const std::size_t stride = kOrder2OpCount * d;
    auto g = [&](std::size_t op, std::size_t b1, std::size_t b2, std::size_t c) {
        return grad_out[(b1 * n + b2) * stride + op * d + c];
    };
    // Row sums, column sums, totals and diagonal reads of the gradient planes.
    std::vector<double> rs3(n * d, 0.0), cs4(n * d, 0.0), rs6(n * d, 0.0), cs7(n * d, 0.0);
    std::vector<double> rs13(n * d, 0.0), cs14(n * d, 0.0);
    std::vector<double> tot9(d, 0.0), tr10(d, 0.0), tot11(d, 0.0), tr12(d, 0.0);
    for (std::size_t b1 = 0; b1 < n; ++b1)
        for (std::size_t b2 = 0; b2 < n; ++b2)
            for (std::size_t c = 0; c < d; ++c) {
                rs3[b1 * d + c] += g(3, b1, b2, c);
                cs4[b2 * d + c] += g(4, b1, b2, c);
                rs6[b1 * d + c] += g(6, b1, b2, c);
                cs7[b2 * d + c] += g(7, b1, b2, c);
                rs13[b1 * d + c] += g(13, b1, b2, c);
                cs14[b2 * d + c] += g(14, b1, b2, c);
                tot9[c] += g(9, b1, b2, c);
                tot11[c] += g(11, b1, b2, c);
                if (b1 == b2) {
                    tr10[c] += g(10, b1, b2, c);
                    tr12[c] += g(12, b1, b2, c);
                }
            }

    for (std::size_t a1 = 0; a1 < n; ++a1)
        for (std::size_t a2 = 0; a2 < n; ++a2)
            for (std::size_t c = 0; c < d; ++c) {
                double v = s[0] * g(0, a1, a2, c) + s[1] * g(1, a2, a1, c);
                v += s[3] * rs3[a1 * d + c] + s[4] * cs4[a1 * d + c] + s[5] * g(5, a1, a1, c);
                v += s[6] * rs6[a2 * d + c] + s[7] * cs7[a2 * d + c] + s[8] * g(8, a2, a2, c);
                v += s[9] * tot9[c] + s[10] * tr10[c];
                if (a1 == a2) {
                    v += s[2] * g(2, a1, a1, c);
                    v += s[11] * tot11[c] + s[12] * tr12[c];
                    v += s[13] * rs13[a1 * d + c] + s[14] * cs14[a1 * d + c];
                }
                grad_x[(a1 * n + a2) * d + c] += v;
            }
}

std::vector<Matrix> order2_fast_ops(const Matrix& a, bool normalized)
{
    if (a.rows() != a.cols())
        throw std::invalid_argument("order2_fast_ops: input matrix is not square");
    const auto n = static_cast<std::size_t>(a.rows());
    const Tensor t = Tensor::from_matrix(a);
    std::vector<double> out(n * n * kOrder2OpCount);
    order2_ops_forward(t.data(), n, 1, normalized, out);
    std::vector<Matrix> ops(kOrder2OpCount, Matrix(n, n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t op = 0; op < kOrder2OpCount; ++op)
                ops[op](i, j) = out[(i * n + j) * kOrder2OpCount + op];
    return ops;
}

Matrix order2_ops_in_indicator_basis(std::size_t n, bool normalized)
{
    const PartitionTable table(4);
    const auto norms = order2_op_norms(n);
    Matrix c = Matrix::Zero(kOrder2OpCount, table.size());
    for (std::size_t op = 0; op < kOrder2OpCount; ++op)
        for (std::size_t mu = 0; mu < table.size(); ++mu)
            if (op_kernel(op, table[mu].rgs()))
                c(op, mu) = normalized ? 1.0 / norms[op] : 1.0;
    return c;
}

Matrix order2_indicator_from_ops(std::size_t n, bool normalized)
{
    const PartitionTable table(4);
    const Matrix c = order2_ops_in_indicator_basis(n, normalized);
    std::vector<Eigen::Index> live;
    for (std::size_t mu = 0; mu < table.size(); ++mu)
        if (table[mu].num_blocks() <= n)
            live.push_back(static_cast<Eigen::Index>(mu));
    Matrix c_live(c.rows(), static_cast<Eigen::Index>(live.size()));
    for (std::size_t i = 0; i < live.size(); ++i)
        c_live.col(static_cast<Eigen::Index>(i)) = c.col(live[i]);
    // The operators span every nonempty class, so c_live has full column rank
    // and its pseudo-inverse is an exact left inverse.
    const Matrix pinv = c_live.completeOrthogonalDecomposition().pseudoInverse();
    Matrix x = Matrix::Zero(table.size(), kOrder2OpCount);
    for (std::size_t i = 0; i < live.size(); ++i)
        x.row(live[i]) = pinv.row(static_cast<Eigen::Index>(i));
    return x;
}

}  // namespace permeq
