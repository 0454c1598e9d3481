#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace permeq {

/// Largest set size the library will enumerate partitions for; b(12) = 4,213,597.
inline constexpr int kMaxPartitionOrder = 12;

/// A set partition of {0, ..., l-1} stored as a restricted growth string.
///
/// rgs[0] == 0 and rgs[i] <= 1 + max(rgs[0..i-1]). Two partitions are equal
/// iff their strings are equal, and ordering is lexicographic on the string.
class SetPartition {
public:
    SetPartition() = default;

    /// Throws std::invalid_argument if `rgs` is not a restricted growth string.
    explicit SetPartition(std::vector<std::uint8_t> rgs);

    /// Partition induced by equal labels, i.e. the equality pattern of `labels`.
    template <typename T>
    static SetPartition from_labels(std::span<const T> labels);

    std::size_t size() const { return rgs_.size(); }
    std::size_t num_blocks() const { return num_blocks_; }
    std::span<const std::uint8_t> rgs() const { return rgs_; }
    std::uint8_t block_of(std::size_t position) const { return rgs_[position]; }

    /// Blocks as 0-based position lists, ordered by first element.
    std::vector<std::vector<std::size_t>> blocks() const;

    /// Partition of the sub-sequence of positions (renumbered 0..m-1).
    SetPartition restrict_to(std::span<const std::size_t> positions) const;

    /// Packs the string into 4-bit digits, first entry most significant. Numeric
    /// order of codes of equal length matches lexicographic order of partitions.
    std::uint64_t code() const;

    /// Compact rgs text, one base-36 digit per position ("0010").
    std::string rgs_string() const;

    /// Block notation with 1-based positions, e.g. "{{1,2},{3}}".
    std::string block_string() const;

    friend bool operator==(const SetPartition&, const SetPartition&) = default;
    friend std::strong_ordering operator<=>(const SetPartition& a, const SetPartition& b)
    {
        return a.rgs_ <=> b.rgs_;
    }

private:
    std::vector<std::uint8_t> rgs_;
    std::size_t num_blocks_ = 0;
};

/// Bell number b(l) via the Bell triangle. b(0) = 1. Throws std::overflow_error
/// when the result does not fit in 64 bits (l > 25).
std::uint64_t bell(int l);

/// All partitions of an l-set, sorted by rgs. 1 <= l <= kMaxPartitionOrder.
std::vector<SetPartition> enumerate_partitions(int l);

/// Equality pattern of a multi-index: positions holding equal values share a block.
SetPartition equality_pattern(std::span<const std::size_t> index);

/// Packed rgs code of the equality pattern of `index`, without allocating.
std::uint64_t equality_pattern_code(std::span<const std::size_t> index);

/// Number of multi-indices in [n]^l whose equality pattern is `partition`:
/// the falling factorial n (n-1) ... (n-m+1) with m blocks, zero when m > n.
std::uint64_t class_size(const SetPartition& partition, std::uint64_t n);

/// Number of partitions of an l-set with at most n blocks, i.e. the number of
/// equality classes in [n]^l that are nonempty.
std::uint64_t effective_class_count(int l, std::uint64_t n);

/// Canonical enumeration of partitions of an l-set with code -> position lookup.
class PartitionTable {
public:
    explicit PartitionTable(int l);

    int order() const { return order_; }
    std::size_t size() const { return partitions_.size(); }
    const SetPartition& operator[](std::size_t i) const { return partitions_[i]; }
    const std::vector<SetPartition>& partitions() const { return partitions_; }

    /// Position of the partition with packed code `code`; throws if absent.
    std::size_t index_of_code(std::uint64_t code) const;
    std::size_t index_of(const SetPartition& p) const { return index_of_code(p.code()); }

    /// Position of the equality pattern of a multi-index of length order().
    std::size_t classify(std::span<const std::size_t> index) const
    {
        return index_of_code(equality_pattern_code(index));
    }

private:
    int order_;
    std::vector<SetPartition> partitions_;
    std::vector<std::uint64_t> codes_;
};

template <typename T>
SetPartition SetPartition::from_labels(std::span<const T> labels)
{
    std::vector<std::uint8_t> rgs(labels.size());
    std::vector<T> seen;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t b = 0;
        while (b < seen.size() && !(seen[b] == labels[i]))
            ++b;
        if (b == seen.size())
            seen.push_back(labels[i]);
        rgs[i] = static_cast<std::uint8_t>(b);
    }
    return SetPartition(std::move(rgs));
}

}  // namespace permeq
