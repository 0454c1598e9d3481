#include <array>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "permeq/tensor.hpp"

using namespace permeq;
using permeq::testing::random_tensor;

TEST_CASE("permutations")
{
    const std::array<std::size_t, 3> images{2, 3, 1};
    const Permutation p = Permutation::from_one_based(images);
    CHECK(p(0) == 1);
    CHECK(p(2) == 0);
    CHECK(p * p.inverse() == Permutation::identity(3));
    CHECK(p.fixed_points() == 0);
    CHECK_THROWS_AS(Permutation({0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(Permutation({0, 3}), std::invalid_argument);
    std::mt19937_64 a(5), b(5);
    CHECK(Permutation::random(10, a) == Permutation::random(10, b));
}

TEST_CASE("reordering a matrix conjugates it by the permutation matrix")
{
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({2, 4, 1}, rng);
    const Permutation p = Permutation::random(4, rng);
    Matrix pm = Matrix::Zero(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
        pm(static_cast<Eigen::Index>(p(i)), static_cast<Eigen::Index>(i)) = 1.0;
    const Matrix expected = pm * a.to_matrix() * pm.transpose();
    CHECK((apply_perm(p, a).to_matrix() - expected).norm() == doctest::Approx(0.0));
}

TEST_CASE("action composes and leaves channels alone")
{
    std::mt19937_64 rng(2);
    const Tensor a = random_tensor({3, 4, 2}, rng);
    const Permutation p = Permutation::random(4, rng);
    const Permutation q = Permutation::random(4, rng);
    CHECK(apply_perm(p, apply_perm(q, a)) == apply_perm(p * q, a));
    CHECK(apply_perm(Permutation::identity(4), a) == a);
    const std::array<std::size_t, 3> idx{0, 1, 3};
    const std::array<std::size_t, 3> moved{p(0), p(1), p(3)};
    CHECK(apply_perm(p, a).at(moved, 1) == a.at(idx, 1));
}

TEST_CASE("Kronecker power matrix implements the action on vec")
{
    std::mt19937_64 rng(3);
    for (int order : {0, 1, 2, 3}) {
        const Tensor a = random_tensor({order, 3, 1}, rng);
        const Permutation p = Permutation::random(3, rng);
        const auto k = kron_power_matrix(p, order);
        const auto v = vec(a);
        const Vector lhs = k * Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        const auto expected = vec(apply_perm(p, a));
        for (std::size_t i = 0; i < expected.size(); ++i)
            CHECK(lhs[static_cast<Eigen::Index>(i)] == expected[i]);
    }
    CHECK_THROWS_AS(kron_power_matrix(Permutation::identity(20), 4), std::length_error);
}

TEST_CASE("vec and mat round trip")
{
    std::mt19937_64 rng(4);
    const Tensor a = random_tensor({2, 3, 2}, rng);
    CHECK(mat(vec(a), a.shape()) == a);
    const std::vector<double> short_data(5, 0.0);
    CHECK_THROWS_AS(mat(short_data, a.shape()), std::invalid_argument);
}

TEST_CASE("binary tensor format round trip")
{
    std::mt19937_64 rng(5);
    const Tensor a = random_tensor({2, 5, 3}, rng);
    std::stringstream buf;
    write_tensor(buf, a);
    CHECK(buf.str().size() == 8 + 4 + 8 + 8 + 4 + a.data().size() * 8);
    CHECK(read_tensor(buf) == a);
    std::stringstream bad("NOTATENSOR");
    CHECK_THROWS(read_tensor(bad));
}

TEST_CASE("csv matrices")
{
    std::stringstream in("1,2\n3,4\n");
    const Tensor a = read_csv_matrix(in);
    CHECK(a.n() == 2);
    CHECK(a.to_matrix()(1, 0) == 3.0);
    std::stringstream ragged("1,2\n3\n");
    CHECK_THROWS(read_csv_matrix(ragged));
}
