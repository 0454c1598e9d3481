#include "doctest.h"
#include "permeq/oracle.hpp"
#include "permeq/partitions.hpp"

using namespace permeq;

TEST_CASE("projector on a single node is the identity")
{
    for (int l : {0, 1, 3}) {
        const Matrix phi = averaging_projector(1, l);
        CHECK(phi.rows() == 1);
        CHECK(phi(0, 0) == doctest::Approx(1.0));
    }
}

TEST_CASE("projector at n=3, order 2 has rank and trace 2")
{
    const ProjectorStats s = projector_stats(averaging_projector(3, 2));
    CHECK(s.rank == 2);
    CHECK(s.trace == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.idempotence_error < 1e-12);
    CHECK(s.symmetry_error < 1e-12);
}

TEST_CASE("fixed subspace dimensions")
{
    CHECK(fixed_subspace_dim(5, 4) == 15);
    CHECK(fixed_subspace_dim(4, 3) == 5);
    CHECK(fixed_subspace_dim(2, 3) == 4);  // partitions of three positions into at most two blocks
    for (std::size_t n = 1; n <= 4; ++n)
        for (int l = 0; l <= 4; ++l) {
            if (int_pow(n, l) > 300)
                continue;
            const ProjectorStats s = projector_stats(averaging_projector(n, l));
            CHECK(s.rank == effective_class_count(l, n));
            CHECK(std::abs(s.trace - static_cast<double>(s.rank)) < 1e-6);
        }
}

TEST_CASE("indicator tensors span the fixed space")
{
    const std::pair<std::size_t, int> grid[] = {{3, 2}, {4, 2}, {3, 3}, {2, 4}};
    for (auto [n, l] : grid) {
        const auto c = check_basis_spans_fixed_space(n, l);
        CAPTURE(n);
        CAPTURE(l);
        CHECK(c.passed);
        CHECK(c.max_inner_product == 0.0);
        CHECK(c.stacked_rank == c.fixed_dim);
    }
}

TEST_CASE("trace moments are Bell numbers once n >= k")
{
    CHECK(trace_moment(5, 2) == Rational{2, 1});
    CHECK(trace_moment(6, 4) == Rational{15, 1});
    CHECK(trace_moment(2, 3) == Rational{4, 1});
    for (std::size_t n = 1; n <= 7; ++n)
        for (int k = 0; k <= static_cast<int>(std::min<std::size_t>(n, 5)); ++k)
            CHECK(trace_moment(n, k) == Rational{static_cast<std::int64_t>(bell(k)), 1});
    CHECK(trace_moment(1, 0).to_string() == "1");
    CHECK(Rational::make(6, -4).to_string() == "-3/2");
}

TEST_CASE("layer dimensions with feature channels")
{
    const auto a = check_layer_dims_with_features(3, 1, 2, 2, false);
    CHECK(a.passed);
    CHECK(a.linear_trace == doctest::Approx(4.0));
    const auto b = check_layer_dims_with_features(3, 2, 1, 1, false);
    CHECK(b.passed);
    CHECK(b.linear_expected == 2);
    const auto c = check_layer_dims_with_features(3, 1, 1, 1, true);
    CHECK(c.passed);
    CHECK(c.linear_trace == doctest::Approx(2.0));
    CHECK(c.bias_expected == 1);
    const auto d = check_layer_dims_with_features(4, 2, 2, 1, true);
    CHECK(d.passed);
    CHECK(d.linear_expected == 30);
    CHECK(d.bias_expected == 2);
}

TEST_CASE("multiset dimensions")
{
    const auto a = check_multiset_dims(3, 3, 1, 1, 1, 1);
    CHECK(a.passed);
    CHECK(a.expected == 4);
    CHECK(check_multiset_dims(3, 3, 2, 0, 0, 0).expected == 2);
    CHECK(check_multiset_dims(2, 3, 1, 1, 0, 0).expected == 1);
    CHECK(check_multiset_dims(2, 3, 1, 1, 0, 0).passed);
    CHECK(check_multiset_dims(3, 3, 2, 0, 0, 0).passed);
}

TEST_CASE("oracle size caps")
{
    CHECK_THROWS_AS(averaging_projector(8, 1), std::out_of_range);
    CHECK_THROWS_AS(averaging_projector(6, 5), std::out_of_range);
    CHECK_THROWS_AS(trace_moment(0, 2), std::invalid_argument);
}
