#include "permeq/partitions.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace permeq {

namespace {

void check_order(int l, int lo)
{
    if (l < lo || l > kMaxPartitionOrder)
        throw std::out_of_range("partition order " + std::to_string(l) + " outside [" +
                                std::to_string(lo) + ", " +
                                std::to_string(kMaxPartitionOrder) + "]");
}

char digit36(unsigned v)
{
    return static_cast<char>(v < 10 ? '0' + v : 'a' + (v - 10));
}

}  // namespace

SetPartition::SetPartition(std::vector<std::uint8_t> rgs)
    : rgs_(std::move(rgs))
{
    if (rgs_.size() > kMaxPartitionOrder + 4)
        throw std::invalid_argument("set partition longer than 16 positions");
    int max_seen = -1;
    for (std::size_t i = 0; i < rgs_.size(); ++i) {
        if (rgs_[i] > max_seen + 1)
            throw std::invalid_argument("not a restricted growth string at position " +
                                        std::to_string(i));
        max_seen = std::max<int>(max_seen, rgs_[i]);
    }
    num_blocks_ = static_cast<std::size_t>(max_seen + 1);
}

std::vector<std::vector<std::size_t>> SetPartition::blocks() const
{
    std::vector<std::vector<std::size_t>> out(num_blocks_);
    for (std::size_t i = 0; i < rgs_.size(); ++i)
        out[rgs_[i]].push_back(i);
    return out;
}

SetPartition SetPartition::restrict_to(std::span<const std::size_t> positions) const
{
    std::vector<std::uint8_t> labels;
    labels.reserve(positions.size());
    for (std::size_t p : positions) {
        if (p >= rgs_.size())
            throw std::out_of_range("restrict_to: position out of range");
        labels.push_back(rgs_[p]);
    }
    return from_labels(std::span<const std::uint8_t>(labels));
}

std::uint64_t SetPartition::code() const
{
    std::uint64_t c = 0;
    for (std::uint8_t v : rgs_)
        c = (c << 4) | v;
    return c;
}

std::string SetPartition::rgs_string() const
{
    std::string s;
    s.reserve(rgs_.size());
    for (std::uint8_t v : rgs_)
        s.push_back(digit36(v));
    return s;
}

std::string SetPartition::block_string() const
{
    std::string s = "{";
    auto bl = blocks();
    for (std::size_t b = 0; b < bl.size(); ++b) {
        if (b)
            s += ",";
        s += "{";
        for (std::size_t i = 0; i < bl[b].size(); ++i) {
            if (i)
                s += ",";
            s += std::to_string(bl[b][i] + 1);
        }
        s += "}";
    }
    return s + "}";
}

std::uint64_t bell(int l)
{
    if (l < 0)
        throw std::invalid_argument("bell: negative order");
    if (l == 0)
        return 1;
    // Bell triangle: each row starts with the last entry of the previous row.
    std::vector<std::uint64_t> row{1};
    for (int i = 1; i < l; ++i) {
        std::vector<std::uint64_t> next{row.back()};
        next.reserve(row.size() + 1);
        for (std::uint64_t v : row) {
            std::uint64_t sum = 0;
            if (__builtin_add_overflow(next.back(), v, &sum))
                throw std::overflow_error("bell(" + std::to_string(l) +
                                          ") exceeds 64-bit range");
            next.push_back(sum);
        }
        row = std::move(next);
    }
    return row.back();
}

std::vector<SetPartition> enumerate_partitions(int l)
{
    check_order(l, 1);
    std::vector<SetPartition> out;
    out.reserve(bell(l));

    // Iterative successor on restricted growth strings; prefix_max[i] is the
    // maximum of rgs[0..i].
    std::vector<std::uint8_t> rgs(l, 0);
    std::vector<std::uint8_t> prefix_max(l, 0);
    while (true) {
        out.emplace_back(rgs);
        int i = l - 1;
        while (i > 0 && rgs[i] > prefix_max[i - 1])
            --i;
        if (i == 0)
            break;
        ++rgs[i];
        prefix_max[i] = std::max(prefix_max[i - 1], rgs[i]);
        for (int j = i + 1; j < l; ++j) {
            rgs[j] = 0;
            prefix_max[j] = prefix_max[i];
        }
    }
    return out;
}

std::uint64_t equality_pattern_code(std::span<const std::size_t> index)
{
    if (index.size() > 16)
        throw std::invalid_argument("equality_pattern_code: more than 16 positions");
    std::array<std::size_t, 16> seen{};
    std::size_t num_seen = 0;
    std::uint64_t c = 0;
    for (std::size_t v : index) {
        std::size_t b = 0;
        while (b < num_seen && seen[b] != v)
            ++b;
        if (b == num_seen)
            seen[num_seen++] = v;
        c = (c << 4) | b;
    }
    return c;
}

SetPartition equality_pattern(std::span<const std::size_t> index)
{
    return SetPartition::from_labels(index);
}

std::uint64_t class_size(const SetPartition& partition, std::uint64_t n)
{
    const std::uint64_t m = partition.num_blocks();
    if (m > n)
        return 0;
    std::uint64_t count = 1;
    for (std::uint64_t i = 0; i < m; ++i) {
        if (__builtin_mul_overflow(count, n - i, &count))
            throw std::overflow_error("class_size exceeds 64-bit range");
    }
    return count;
}

std::uint64_t effective_class_count(int l, std::uint64_t n)
{
    if (l == 0)
        return 1;
    check_order(l, 1);
    // Stirling numbers of the second kind S(l, m), summed over m <= n.
    std::vector<std::uint64_t> s(l + 1, 0);
    s[0] = 1;
    for (int i = 1; i <= l; ++i) {
        for (int m = i; m >= 1; --m)
            s[m] = m * s[m] + s[m - 1];
        s[0] = 0;
    }
    std::uint64_t total = 0;
    for (int m = 1; m <= l; ++m)
        if (static_cast<std::uint64_t>(m) <= n)
            total += s[m];
    return total;
}

PartitionTable::PartitionTable(int l)
    : order_(l)
{
    if (l == 0) {
        partitions_.emplace_back();
    } else {
        partitions_ = enumerate_partitions(l);
    }
    codes_.reserve(partitions_.size());
    for (const auto& p : partitions_)
        codes_.push_back(p.code());
}

std::size_t PartitionTable::index_of_code(std::uint64_t code) const
{
    auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
    if (it == codes_.end() || *it != code)
        throw std::out_of_range("partition code not in table");
    return static_cast<std::size_t>(it - codes_.begin());
}

}  // namespace permeq
