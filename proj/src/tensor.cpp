#include "permeq/tensor.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace permeq {

namespace {

constexpr std::array<char, 8> kTensorMagic{'P', 'E', 'Q', 'T', 'N', 'S', 'R', '1'};

template <typename T>
void put_le(std::ostream& out, T v)
{
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bytes[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in)
{
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in)
        throw std::runtime_error("tensor stream truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return static_cast<T>(v);
}

void put_f64(std::ostream& out, double d)
{
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_le(out, bits);
}

double get_f64(std::istream& in)
{
    auto bits = get_le<std::uint64_t>(in);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
}

}  // namespace

std::size_t int_pow(std::size_t n, int power)
{
    if (power < 0)
        throw std::invalid_argument("int_pow: negative exponent");
    std::size_t r = 1;
    for (int i = 0; i < power; ++i)
        if (__builtin_mul_overflow(r, n, &r))
            throw std::overflow_error("int_pow overflow");
    return r;
}

std::string to_string(const Shape& s)
{
    std::ostringstream os;
    os << "(order=" << s.order << ", n=" << s.n << ", features=" << s.features << ")";
    return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(shape)
{
    if (shape_.features == 0)
        throw std::invalid_argument("tensor needs at least one feature channel");
    if (shape_.order < 0)
        throw std::invalid_argument("tensor order must be non-negative");
    data_.assign(shape_.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : Tensor(shape)
{
    if (data.size() != data_.size())
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + to_string(shape));
    data_ = std::move(data);
}

Tensor Tensor::from_matrix(const Matrix& m)
{
    if (m.rows() != m.cols())
        throw std::invalid_argument("from_matrix: matrix is not square");
    const auto n = static_cast<std::size_t>(m.rows());
    Tensor t(Shape{2, n, 1});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            t.data_[i * n + j] = m(i, j);
    return t;
}

std::size_t Tensor::flat_index(std::span<const std::size_t> index, std::size_t c) const
{
    if (index.size() != static_cast<std::size_t>(shape_.order) || c >= shape_.features)
        throw std::out_of_range("tensor index rank or channel mismatch");
    for (std::size_t v : index)
        if (v >= shape_.n)
            throw std::out_of_range("tensor node index out of range");
    return linear_index(index, shape_.n) * shape_.features + c;
}

double& Tensor::at(std::span<const std::size_t> index, std::size_t c)
{
    return data_[flat_index(index, c)];
}

double Tensor::at(std::span<const std::size_t> index, std::size_t c) const
{
    return data_[flat_index(index, c)];
}

Matrix Tensor::to_matrix(std::size_t c) const
{
    if (shape_.order != 2)
        throw std::invalid_argument("to_matrix: tensor is not order 2");
    const std::size_t n = shape_.n;
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m(i, j) = data_[(i * n + j) * shape_.features + c];
    return m;
}

std::size_t linear_index(std::span<const std::size_t> index, std::size_t n)
{
    std::size_t flat = 0;
    for (std::size_t v : index)
        flat = flat * n + v;
    return flat;
}

void unravel_index(std::size_t flat, std::size_t n, std::span<std::size_t> out)
{
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = flat % n;
        flat /= n;
    }
}

Permutation::Permutation(std::vector<std::size_t> map)
    : map_(std::move(map))
{
    std::vector<bool> hit(map_.size(), false);
    for (std::size_t v : map_) {
        if (v >= map_.size() || hit[v])
            throw std::invalid_argument("permutation map is not a bijection");
        hit[v] = true;
    }
}

Permutation Permutation::from_one_based(std::span<const std::size_t> images)
{
    std::vector<std::size_t> m;
    m.reserve(images.size());
    for (std::size_t v : images) {
        if (v == 0)
            throw std::invalid_argument("1-based permutation contains 0");
        m.push_back(v - 1);
    }
    return Permutation(std::move(m));
}

Permutation Permutation::identity(std::size_t n)
{
    std::vector<std::size_t> m(n);
    std::iota(m.begin(), m.end(), std::size_t{0});
    return Permutation(std::move(m));
}

Permutation Permutation::random(std::size_t n, std::mt19937_64& rng)
{
    std::vector<std::size_t> m(n);
    std::iota(m.begin(), m.end(), std::size_t{0});
    // Fisher-Yates with an explicit draw so results do not depend on std::shuffle.
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(m[i - 1], m[pick(rng)]);
    }
    return Permutation(std::move(m));
}

Permutation Permutation::inverse() const
{
    std::vector<std::size_t> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i)
        inv[map_[i]] = i;
    return Permutation(std::move(inv));
}

Permutation Permutation::operator*(const Permutation& q) const
{
    if (q.size() != size())
        throw std::invalid_argument("composing permutations of different sizes");
    std::vector<std::size_t> m(size());
    for (std::size_t i = 0; i < size(); ++i)
        m[i] = map_[q.map_[i]];
    return Permutation(std::move(m));
}

std::size_t Permutation::fixed_points() const
{
    std::size_t count = 0;
    for (std::size_t i = 0; i < map_.size(); ++i)
        count += map_[i] == i;
    return count;
}

Tensor apply_perm(const Permutation& p, const Tensor& a)
{
    if (p.size() != a.n())
        throw std::invalid_argument("apply_perm: permutation over " + std::to_string(p.size()) +
                                    " nodes applied to tensor with n=" + std::to_string(a.n()));
    Tensor out(a.shape());
    const std::size_t n = a.n();
    const std::size_t d = a.features();
    const std::size_t count = a.node_count();
    std::vector<std::size_t> idx(a.order());
    for (std::size_t flat = 0; flat < count; ++flat) {
        unravel_index(flat, n, idx);
        std::size_t target = 0;
        for (std::size_t v : idx)
            target = target * n + p(v);
        std::copy_n(a.data().begin() + flat * d, d, out.data().begin() + target * d);
    }
    return out;
}

std::vector<double> vec(const Tensor& a)
{
    return {a.data().begin(), a.data().end()};
}

Tensor mat(std::span<const double> v, const Shape& shape)
{
    if (v.size() != shape.size())
        throw std::invalid_argument("mat: vector length " + std::to_string(v.size()) +
                                    " does not match shape " + to_string(shape));
    return Tensor(shape, std::vector<double>(v.begin(), v.end()));
}

Eigen::SparseMatrix<double> kron_power_matrix(const Permutation& p, int order)
{
    const std::size_t n = p.size();
    const std::size_t dim = int_pow(n, order);
    if (dim > 100000)
        throw std::length_error("kron_power_matrix: n^l = " + std::to_string(dim) +
                                " exceeds the 1e5 cap");
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(dim);
    std::vector<std::size_t> idx(order);
    for (std::size_t col = 0; col < dim; ++col) {
        unravel_index(col, n, idx);
        std::size_t row = 0;
        for (std::size_t v : idx)
            row = row * n + p(v);
        entries.emplace_back(static_cast<int>(row), static_cast<int>(col), 1.0);
    }
    Eigen::SparseMatrix<double> k(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    k.setFromTriplets(entries.begin(), entries.end());
    return k;
}

void write_tensor(std::ostream& out, const Tensor& a)
{
    out.write(kTensorMagic.data(), kTensorMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.order()));
    put_le<std::uint64_t>(out, a.n());
    put_le<std::uint64_t>(out, a.features());
    put_le<std::uint32_t>(out, 8);
    for (double v : a.data())
        put_f64(out, v);
    if (!out)
        throw std::runtime_error("failed writing tensor");
}

Tensor read_tensor(std::istream& in)
{
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kTensorMagic)
        throw std::runtime_error("not a tensor file (bad magic)");
    Shape s;
    s.order = static_cast<int>(get_le<std::uint32_t>(in));
    s.n = get_le<std::uint64_t>(in);
    s.features = get_le<std::uint64_t>(in);
    const auto width = get_le<std::uint32_t>(in);
    if (width != 8)
        throw std::runtime_error("unsupported element width " + std::to_string(width));
    Tensor t(s);
    for (double& v : t.data())
        v = get_f64(in);
    return t;
}

void save_tensor(const std::string& path, const Tensor& a)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    write_tensor(out, a);
}

Tensor load_tensor(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    return read_tensor(in);
}

Tensor read_csv_matrix(std::istream& in)
{
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw std::runtime_error("csv: cannot parse '" + cell + "' on row " +
                                         std::to_string(rows.size() + 1));
            }
            if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
                throw std::runtime_error("csv: trailing text in '" + cell + "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    const std::size_t n = rows.size();
    if (n == 0)
        throw std::runtime_error("csv: empty matrix");
    Tensor t(Shape{2, n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n)
            throw std::runtime_error("csv: row " + std::to_string(i + 1) + " has " +
                                     std::to_string(rows[i].size()) + " entries, expected " +
                                     std::to_string(n));
        std::copy(rows[i].begin(), rows[i].end(), t.data().begin() + i * n);
    }
    return t;
}

}  // namespace permeq
