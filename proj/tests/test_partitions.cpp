#include <array>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "permeq/partitions.hpp"

using namespace permeq;

TEST_CASE("Bell numbers")
{
    // Reference values computed independently with the Stirling recurrence.
    constexpr std::array<std::uint64_t, 13> expected{
        1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975, 678570, 4213597};
    for (int l = 0; l < 13; ++l)
        CHECK(bell(l) == expected[static_cast<std::size_t>(l)]);
    CHECK(bell(25) == 4638590332229999353ULL);
    CHECK_THROWS_AS(bell(26), std::overflow_error);
    CHECK_THROWS_AS(bell(-1), std::invalid_argument);
}

TEST_CASE("enumeration is lexicographic and complete")
{
    const auto parts = enumerate_partitions(4);
    REQUIRE(parts.size() == 15);
    const char* expected[] = {"0000", "0001", "0010", "0011", "0012", "0100", "0101", "0102",
                              "0110", "0111", "0112", "0120", "0121", "0122", "0123"};
    for (std::size_t i = 0; i < parts.size(); ++i)
        CHECK(parts[i].rgs_string() == expected[i]);
    for (int l = 1; l <= 8; ++l) {
        const auto all = enumerate_partitions(l);
        CHECK(all.size() == bell(l));
        for (std::size_t i = 1; i < all.size(); ++i) {
            CHECK(all[i - 1] < all[i]);
            CHECK(all[i - 1].code() < all[i].code());
        }
    }
    CHECK_THROWS_AS(enumerate_partitions(0), std::out_of_range);
    CHECK_THROWS_AS(enumerate_partitions(13), std::out_of_range);
}

TEST_CASE("restricted growth strings are validated")
{
    CHECK_NOTHROW(SetPartition({0, 1, 0, 2}));
    CHECK_THROWS_AS(SetPartition({1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(SetPartition({0, 2}), std::invalid_argument);
}

TEST_CASE("block notation")
{
    const SetPartition p({0, 0, 1});
    CHECK(p.block_string() == "{{1,2},{3}}");
    CHECK(p.num_blocks() == 2);
    const SetPartition q({0, 1, 0, 1});
    CHECK(q.blocks() == std::vector<std::vector<std::size_t>>{{0, 2}, {1, 3}});
    const std::array<std::size_t, 2> pos{1, 3};
    CHECK(q.restrict_to(pos).rgs_string() == "00");
}

TEST_CASE("equality patterns")
{
    const std::array<std::size_t, 4> idx{7, 3, 7, 1};
    const SetPartition p = equality_pattern(idx);
    CHECK(p.rgs_string() == "0102");
    CHECK(equality_pattern_code(idx) == p.code());
    const std::array<std::size_t, 0> empty{};
    CHECK(equality_pattern(empty).size() == 0);
}

TEST_CASE("class sizes partition [n]^l")
{
    CHECK(class_size(SetPartition({0, 1, 2, 3}), 3) == 0);
    CHECK(class_size(SetPartition({0, 1, 2, 3}), 5) == 120);
    CHECK(class_size(SetPartition({0, 0}), 4) == 4);
    for (std::uint64_t n = 1; n <= 5; ++n)
        for (int l = 1; l <= 5; ++l) {
            std::uint64_t total = 0, nonempty = 0;
            for (const auto& p : enumerate_partitions(l)) {
                total += class_size(p, n);
                nonempty += class_size(p, n) > 0;
            }
            std::uint64_t power = 1;
            for (int i = 0; i < l; ++i)
                power *= n;
            CHECK(total == power);
            CHECK(nonempty == effective_class_count(l, n));
        }
    CHECK(effective_class_count(3, 2) == 4);
    CHECK(effective_class_count(4, 3) == 14);
    CHECK(effective_class_count(4, 2) == 8);
    CHECK(effective_class_count(0, 5) == 1);
}

TEST_CASE("table classification agrees with direct patterns")
{
    const PartitionTable table(5);
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> u(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<std::size_t, 5> idx{};
        for (auto& v : idx)
            v = u(rng);
        const std::size_t k = table.classify(idx);
        CHECK(table[k] == equality_pattern(idx));
    }
    const PartitionTable zero(0);
    CHECK(zero.size() == 1);
}
