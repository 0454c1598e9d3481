#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace permeq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n^power with overflow detection.
std::size_t int_pow(std::size_t n, int power);

/// Shape of an order-k tensor over n nodes with `features` channels.
struct Shape {
    int order = 0;
    std::size_t n = 1;
    std::size_t features = 1;

    std::size_t node_count() const { return int_pow(n, order); }
    std::size_t size() const { return node_count() * features; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense tensor in R^{n^k x d}, row-major with node indices outermost and the
/// feature channel innermost. Shape is fixed at construction.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    /// Single-channel n x n tensor from a dense matrix.
    static Tensor from_matrix(const Matrix& m);

    const Shape& shape() const { return shape_; }
    int order() const { return shape_.order; }
    std::size_t n() const { return shape_.n; }
    std::size_t features() const { return shape_.features; }
    std::size_t node_count() const { return data_.size() / shape_.features; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    /// Entry at node multi-index `index` (0-based) and channel `c`.
    double& at(std::span<const std::size_t> index, std::size_t c = 0);
    double at(std::span<const std::size_t> index, std::size_t c = 0) const;

    /// Single-channel order-2 tensor as an n x n matrix (channel `c`).
    Matrix to_matrix(std::size_t c = 0) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t flat_index(std::span<const std::size_t> index, std::size_t c) const;

    Shape shape_;
    std::vector<double> data_;
};

/// Row-major position of node multi-index `index` in [n]^k.
std::size_t linear_index(std::span<const std::size_t> index, std::size_t n);

/// Inverse of linear_index; writes k digits into `out`.
void unravel_index(std::size_t flat, std::size_t n, std::span<std::size_t> out);

/// A bijection of {0, ..., n-1}.
class Permutation {
public:
    Permutation() = default;

    /// Throws std::invalid_argument unless `map` is a bijection of {0..n-1}.
    explicit Permutation(std::vector<std::size_t> map);

    /// Builds from 1-based images, e.g. {2, 1} for the transposition of two nodes.
    static Permutation from_one_based(std::span<const std::size_t> images);
    static Permutation identity(std::size_t n);
    static Permutation random(std::size_t n, std::mt19937_64& rng);

    std::size_t size() const { return map_.size(); }
    std::size_t operator()(std::size_t i) const { return map_[i]; }
    std::span<const std::size_t> map() const { return map_; }

    Permutation inverse() const;
    /// (p * q)(i) = p(q(i)).
    Permutation operator*(const Permutation& q) const;
    std::size_t fixed_points() const;

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::vector<std::size_t> map_;
};

/// The reordering action P*A: entry (p(i1), ..., p(ik), c) of the result equals
/// entry (i1, ..., ik, c) of `a`. Feature channels are untouched.
Tensor apply_perm(const Permutation& p, const Tensor& a);

/// Flattens in storage order.
std::vector<double> vec(const Tensor& a);

/// Inverse of vec; throws std::invalid_argument on length mismatch.
Tensor mat(std::span<const double> v, const Shape& shape);

/// Matrix K(p) of the reordering action on order-l single-channel tensors:
/// vec(apply_perm(p, A)) == K(p) * vec(A). K[r, c] = 1 iff r is the image of
/// multi-index c under p. Requires n^l <= 1e5.
Eigen::SparseMatrix<double> kron_power_matrix(const Permutation& p, int order);

/// Binary tensor format: 8-byte magic "PEQTNSR1", u32 order, u64 n, u64 features,
/// u32 element width (8), then little-endian float64 data in storage order.
void write_tensor(std::ostream& out, const Tensor& a);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& a);
Tensor load_tensor(const std::string& path);

/// Reads an n x n single-channel tensor from comma-separated rows.
Tensor read_csv_matrix(std::istream& in);

}  // namespace permeq
