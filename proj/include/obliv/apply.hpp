#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obliv/binarize.hpp"
#include "obliv/capabilities.hpp"
#include "obliv/model.hpp"

namespace obliv {

// How leaf answers are fetched once per-tree indices exist.
enum class ApplyKind : std::uint8_t {
    naive,     // per document, per tree, bit by bit
    batch4,    // grouped; indices for four trees, then one pass over the accumulators
    per_tree,  // grouped; one accumulator pass per tree
    gather,    // grouped; vector gather of 32-bit leaves
    permute,   // grouped; whole leaf array in 512-bit registers, lanes picked by permute
};

std::string ToString(ApplyKind kind);
ApplyKind parse_apply_kind(std::string_view id);

inline constexpr unsigned kDefaultPermuteHeightCap = 6;

// 512-bit registers needed to hold the 2^height 32-bit leaves of one tree.
std::size_t permute_block_count(unsigned height);

// Leaf indices of one tree for the logical documents of one block, document order.
struct TreeIndexBlock {
    std::size_t tree = 0;
    std::size_t block = 0;
    std::vector<std::uint8_t> indices;
};

// Documents covered by one grouped block: W for interleaved-W bits (width must be
// W), width/8 for ordered bits.
std::size_t apply_block_docs(BitLayout layout, unsigned width);

// Reference evaluation over ordered bits; returns the 64-bit sums of the first `docs` documents.
std::vector<std::uint64_t> apply_naive(const BitMatrix& bits, const ObliviousForest& forest, std::size_t docs);

TreeIndexBlock build_indices(const BitMatrix& bits, const ObliviousForest& forest, std::size_t tree,
                             std::size_t block, unsigned width, const ExecPolicy& policy = {});

// acc[i] += leaves[indices[i]] for every i; the strategies differ only in how.
void accumulate_per_tree(std::span<const std::uint8_t> indices, std::span<const std::uint32_t> leaves,
                         std::span<std::uint64_t> acc, unsigned width, const ExecPolicy& policy = {});
// Up to four trees at once.
void accumulate_batch4(std::span<const std::span<const std::uint8_t>> indices,
                       std::span<const std::span<const std::uint32_t>> leaves, std::span<std::uint64_t> acc,
                       unsigned width, const ExecPolicy& policy = {});
void accumulate_gather(std::span<const std::uint8_t> indices, std::span<const std::uint32_t> leaves,
                       std::span<std::uint64_t> acc, unsigned width, const ExecPolicy& policy = {});
// `leaves` is one tree's 2^height answers. Returns the number of 512-bit blocks used.
// Heights above `height_cap` are refused; callers route those trees to gather.
std::size_t accumulate_permute(std::span<const std::uint8_t> indices, std::span<const std::uint32_t> leaves,
                               unsigned height, std::span<std::uint64_t> acc, const ExecPolicy& policy = {},
                               unsigned height_cap = kDefaultPermuteHeightCap);

struct ApplyStats {
    std::size_t permute_trees = 0;
    std::size_t gather_fallback_trees = 0;
    // Register blocks the permute path used for a tree of each height (0 when unused).
    std::array<std::size_t, kHeightSlots> permute_blocks_by_height{};
};

// Grouped evaluation: index building then the chosen accumulation, block by block.
std::vector<std::uint64_t> apply_grouped(const BitMatrix& bits, const ObliviousForest& forest, ApplyKind kind,
                                         unsigned width, const ExecPolicy& policy = {},
                                         unsigned permute_height_cap = kDefaultPermuteHeightCap,
                                         ApplyStats* stats = nullptr);

// score = (R - 2^31) * scale + bias, in double.
std::vector<double> finalize_scores(std::span<const std::uint64_t> sums, const ObliviousForest& forest);

}  // namespace obliv
