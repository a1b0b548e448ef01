#include "obliv/apply.hpp"

#include <algorithm>
#include <cstring>

#include "kernels.hpp"
#include "obliv/error.hpp"

namespace obliv {

namespace {

using BuildFn = void (*)(const std::uint8_t* const*, unsigned, std::uint8_t*);
using AccumulateFn = void (*)(const std::uint8_t*, const std::uint32_t*, std::uint64_t*, std::size_t);
using Batch4Fn = void (*)(const std::uint8_t* const*, const std::uint32_t* const*, unsigned, std::uint64_t*,
                          std::size_t);

template <std::size_t W>
void BuildSlotsInterleavedRef(const std::uint8_t* const* cond, unsigned height, std::uint8_t* slots) {
    constexpr std::size_t kBytes = W / 8;
    for (unsigned s = 0; s < 8; ++s) {
        for (std::size_t p = 0; p < kBytes; ++p) {
            unsigned index = 0;
            for (unsigned j = 0; j < height; ++j) index |= ((cond[j][p] >> s) & 1u) << j;
            slots[s * kBytes + p] = static_cast<std::uint8_t>(index);
        }
    }
}

template <std::size_t Docs>
void BuildSlotsOrderedRef(const std::uint8_t* const* cond, unsigned height, std::uint8_t* slots) {
    for (std::size_t p = 0; p < Docs; ++p) {
        unsigned index = 0;
        for (unsigned j = 0; j < height; ++j) index |= ((cond[j][p / 8] >> (p % 8)) & 1u) << j;
        slots[p] = static_cast<std::uint8_t>(index);
    }
}

void AccumulateRef(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += leaves[idx[i]];
}

void Batch4Ref(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
               std::uint64_t* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t sum = acc[i];
        for (unsigned t = 0; t < count; ++t) sum += leaves[t][idx[t][i]];
        acc[i] = sum;
    }
}

// Same selection rule as the vector permute: register idx>>4, lane idx&15.
void PermuteRef(const std::uint8_t* idx, const std::uint32_t* leaves, unsigned height, std::uint64_t* acc,
                std::size_t n) {
    const std::size_t leaf_count = std::size_t{1} << height;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pos = (idx[i] >> 4) * 16 + (idx[i] & 15);
        acc[i] += pos < leaf_count ? leaves[pos] : 0;
    }
}

void CheckWidth(unsigned width) {
    if (width != 128 && width != 256 && width != 512) {
        throw ConfigError("unsupported vector width " + std::to_string(width));
    }
}

Tier TierForWidth(unsigned width) {
    switch (width) {
        case 128: return Tier::v128;
        case 256: return Tier::v256;
        default: return Tier::v512;
    }
}

Tier GatherTier(unsigned width) { return width == 512 ? Tier::v512 : Tier::gather; }

BuildFn SelectBuild(BitLayout layout, unsigned width, const ExecPolicy& policy) {
    const bool vec = select_vector_path(policy, TierForWidth(width), "index building");
    switch (layout) {
        case BitLayout::interleaved128:
            return vec ? detail::build_slots_interleaved_sse : BuildSlotsInterleavedRef<128>;
        case BitLayout::interleaved256:
            return vec ? detail::build_slots_interleaved_avx2 : BuildSlotsInterleavedRef<256>;
        case BitLayout::interleaved512:
            return vec ? detail::build_slots_interleaved_avx512 : BuildSlotsInterleavedRef<512>;
        case BitLayout::ordered:
            switch (width) {
                case 128: return vec ? detail::build_slots_ordered_sse : BuildSlotsOrderedRef<16>;
                case 256: return vec ? detail::build_slots_ordered_avx2 : BuildSlotsOrderedRef<32>;
                default: return vec ? detail::build_slots_ordered_avx512 : BuildSlotsOrderedRef<64>;
            }
    }
    throw DimensionError("unknown bit layout");
}

AccumulateFn SelectPerTree(unsigned width, const ExecPolicy& policy) {
    if (!select_vector_path(policy, TierForWidth(width), "grouped-pertree")) return AccumulateRef;
    switch (width) {
        case 128: return detail::accumulate_per_tree_sse;
        case 256: return detail::accumulate_per_tree_avx2;
        default: return detail::accumulate_per_tree_avx512;
    }
}

Batch4Fn SelectBatch4(unsigned width, const ExecPolicy& policy) {
    if (!select_vector_path(policy, TierForWidth(width), "grouped-batch4")) return Batch4Ref;
    switch (width) {
        case 128: return detail::accumulate_batch4_sse;
        case 256: return detail::accumulate_batch4_avx2;
        default: return detail::accumulate_batch4_avx512;
    }
}

AccumulateFn SelectGather(unsigned width, const ExecPolicy& policy) {
    if (!select_vector_path(policy, GatherTier(width), "grouped-gather")) return AccumulateRef;
    switch (width) {
        case 128: return detail::accumulate_gather_128;
        case 256: return detail::accumulate_gather_256;
        default: return detail::accumulate_gather_512;
    }
}

// Slot -> document-within-block for the layout's index order.
std::vector<std::uint16_t> SlotOrder(BitLayout layout, std::size_t slots) {
    std::vector<std::uint16_t> order(slots);
    if (layout == BitLayout::ordered) {
        for (std::size_t i = 0; i < slots; ++i) order[i] = static_cast<std::uint16_t>(i);
        return order;
    }
    const std::size_t bytes = slots / 8;
    for (std::size_t s = 0; s < 8; ++s) {
        for (std::size_t p = 0; p < bytes; ++p) {
            order[s * bytes + p] = static_cast<std::uint16_t>(doc_of_offset(layout, p * 8 + s));
        }
    }
    return order;
}

// Points each condition of a tree at its bytes for one block; ordered rows whose
// last block is short are copied into zero-extended scratch.
class ConditionBytes {
public:
    ConditionBytes(const BitMatrix& bits, std::size_t block_bytes) : bits_(bits), block_bytes_(block_bytes) {}

    const std::uint8_t* const* fetch(const std::uint32_t* conditions, unsigned height, std::size_t block) {
        const std::size_t begin = block * block_bytes_;
        const bool short_block = begin + block_bytes_ > bits_.row_bytes();
        for (unsigned j = 0; j < height; ++j) {
            const std::uint8_t* row = bits_.row(conditions[j]).data();
            if (short_block) {
                std::memset(scratch_[j], 0, sizeof(scratch_[j]));
                std::memcpy(scratch_[j], row + begin, bits_.row_bytes() - begin);
                pointers_[j] = scratch_[j];
            } else {
                pointers_[j] = row + begin;
            }
        }
        return pointers_;
    }

private:
    const BitMatrix& bits_;
    std::size_t block_bytes_;
    const std::uint8_t* pointers_[kMaxTreeHeight] = {};
    alignas(64) std::uint8_t scratch_[kMaxTreeHeight][64] = {};
};

template <typename T>
void CheckIndices(std::span<const std::uint8_t> indices, std::span<const T> leaves, std::size_t acc_size) {
    if (indices.size() != acc_size) {
        throw DimensionError("index block of " + std::to_string(indices.size()) + " for " +
                             std::to_string(acc_size) + " accumulators");
    }
    for (std::uint8_t i : indices) {
        if (i >= leaves.size()) {
            throw DimensionError("leaf index " + std::to_string(i) + " outside " + std::to_string(leaves.size()) +
                                 " leaves");
        }
    }
}

constexpr std::size_t kVectorChunk = 16;

}  // namespace

std::string ToString(ApplyKind kind) {
    switch (kind) {
        case ApplyKind::naive: return "naive";
        case ApplyKind::batch4: return "grouped-batch4";
        case ApplyKind::per_tree: return "grouped-pertree";
        case ApplyKind::gather: return "grouped-gather";
        case ApplyKind::permute: return "grouped-permute";
    }
    return "unknown";
}

ApplyKind parse_apply_kind(std::string_view id) {
    for (auto kind : {ApplyKind::naive, ApplyKind::batch4, ApplyKind::per_tree, ApplyKind::gather,
                      ApplyKind::permute}) {
        if (id == ToString(kind)) return kind;
    }
    throw ConfigError("unknown apply strategy '" + std::string(id) + "'");
}

std::size_t permute_block_count(unsigned height) {
    if (height > kMaxTreeHeight) throw DimensionError("tree height " + std::to_string(height));
    const std::size_t bits = (std::size_t{1} << height) * 32;
    return (bits + 511) / 512;
}

std::size_t apply_block_docs(BitLayout layout, unsigned width) {
    CheckWidth(width);
    if (layout == BitLayout::ordered) return width / 8;
    const std::size_t w = layout_block_docs(layout);
    if (w != width) {
        throw ConfigError(std::string(ToString(layout)) + " bits need vector width " + std::to_string(w) +
                          ", got " + std::to_string(width));
    }
    return w;
}

std::vector<std::uint64_t> apply_naive(const BitMatrix& bits, const ObliviousForest& forest, std::size_t docs) {
    if (bits.layout() != BitLayout::ordered) {
        throw DimensionError(std::string("layout mismatch: naive apply needs ordered bits, got ") +
                             ToString(bits.layout()));
    }
    if (docs > bits.logical_docs() || bits.num_features() != forest.num_binary_features()) {
        throw DimensionError("bit matrix does not cover the requested documents/features");
    }
    const auto layout = tree_layout(forest);
    std::vector<std::uint64_t> sums(docs, 0);
    for (std::size_t d = 0; d < docs; ++d) {
        const std::size_t byte = d / 8;
        const unsigned shift = d % 8;
        std::uint64_t sum = 0;
        for (const auto& tree : layout) {
            unsigned index = 0;
            for (unsigned j = 0; j < tree.height; ++j) {
                const std::uint32_t condition = forest.condition_indices[tree.condition_base + j];
                index |= ((bits.row(condition)[byte] >> shift) & 1u) << j;
            }
            sum += forest.leaf_answers[tree.leaf_base + index];
        }
        sums[d] = sum;
    }
    return sums;
}

TreeIndexBlock build_indices(const BitMatrix& bits, const ObliviousForest& forest, std::size_t tree,
                             std::size_t block, unsigned width, const ExecPolicy& policy) {
    const std::size_t block_docs = apply_block_docs(bits.layout(), width);
    const auto layout = tree_layout(forest);
    if (tree >= layout.size()) throw DimensionError("tree " + std::to_string(tree) + " out of range");
    const std::size_t blocks = (bits.logical_docs() + block_docs - 1) / block_docs;
    if (block >= blocks) throw DimensionError("block " + std::to_string(block) + " out of range");

    const BuildFn build = SelectBuild(bits.layout(), width, policy);
    const std::size_t slots = bits.layout() == BitLayout::ordered ? block_docs : block_docs;
    const std::size_t block_bytes = bits.layout() == BitLayout::ordered ? block_docs / 8 : block_docs / 8;
    ConditionBytes conditions(bits, block_bytes);
    AlignedVector<std::uint8_t> slot_indices(slots);
    const TreeSpan& span = layout[tree];
    build(conditions.fetch(forest.condition_indices.data() + span.condition_base, span.height, block), span.height,
          slot_indices.data());

    const auto order = SlotOrder(bits.layout(), slots);
    TreeIndexBlock out{tree, block, {}};
    const std::size_t first = block * block_docs;
    out.indices.resize(std::min(block_docs, bits.logical_docs() - first));
    for (std::size_t s = 0; s < slots; ++s) {
        if (order[s] < out.indices.size()) out.indices[order[s]] = slot_indices[s];
    }
    return out;
}

void accumulate_per_tree(std::span<const std::uint8_t> indices, std::span<const std::uint32_t> leaves,
                         std::span<std::uint64_t> acc, unsigned width, const ExecPolicy& policy) {
    CheckWidth(width);
    CheckIndices(indices, leaves, acc.size());
    const std::size_t bulk = acc.size() / kVectorChunk * kVectorChunk;
    SelectPerTree(width, policy)(indices.data(), leaves.data(), acc.data(), bulk);
    AccumulateRef(indices.data() + bulk, leaves.data(), acc.data() + bulk, acc.size() - bulk);
}

void accumulate_batch4(std::span<const std::span<const std::uint8_t>> indices,
                       std::span<const std::span<const std::uint32_t>> leaves, std::span<std::uint64_t> acc,
                       unsigned width, const ExecPolicy& policy) {
    CheckWidth(width);
    if (indices.empty() || indices.size() > 4 || indices.size() != leaves.size()) {
        throw DimensionError("batch of " + std::to_string(indices.size()) + " index blocks and " +
                             std::to_string(leaves.size()) + " leaf arrays");
    }
    const std::uint8_t* idx[4] = {};
    const std::uint32_t* lv[4] = {};
    for (std::size_t t = 0; t < indices.size(); ++t) {
        CheckIndices(indices[t], leaves[t], acc.size());
        idx[t] = indices[t].data();
        lv[t] = leaves[t].data();
    }
    const auto count = static_cast<unsigned>(indices.size());
    const std::size_t bulk = acc.size() / kVectorChunk * kVectorChunk;
    SelectBatch4(width, policy)(idx, lv, count, acc.data(), bulk);
    const std::uint8_t* tail_idx[4] = {};
    for (unsigned t = 0; t < count; ++t) tail_idx[t] = idx[t] + bulk;
    Batch4Ref(tail_idx, lv, count, acc.data() + bulk, acc.size() - bulk);
}

void accumulate_gather(std::span<const std::uint8_t> indices, std::span<const std::uint32_t> leaves,
                       std::span<std::uint64_t> acc, unsigned width, const ExecPolicy& policy) {
    CheckWidth(width);
    CheckIndices(indices, leaves, acc.size());
    const std::size_t bulk = acc.size() / kVectorChunk * kVectorChunk;
    SelectGather(width, policy)(indices.data(), leaves.data(), acc.data(), bulk);
    AccumulateRef(indices.data() + bulk, leaves.data(), acc.data() + bulk, acc.size() - bulk);
}

std::size_t accumulate_permute(std::span<const std::uint8_t> indices, std::span<const std::uint32_t> leaves,
                               unsigned height, std::span<std::uint64_t> acc, const ExecPolicy& policy,
                               unsigned height_cap) {
    if (height > height_cap || height > kMaxTreeHeight) {
        throw ConfigError("tree height " + std::to_string(height) + " above permute cap " +
                          std::to_string(height_cap) + "; route it to gather");
    }
    if (leaves.size() != (std::size_t{1} << height)) {
        throw DimensionError("permute needs exactly 2^height leaves");
    }
    CheckIndices(indices, leaves, acc.size());
    const std::size_t bulk = acc.size() / kVectorChunk * kVectorChunk;
    if (select_vector_path(policy, Tier::v512, "grouped-permute")) {
        detail::accumulate_permute_512(indices.data(), leaves.data(), height, acc.data(), bulk);
    } else {
        PermuteRef(indices.data(), leaves.data(), height, acc.data(), bulk);
    }
    PermuteRef(indices.data() + bulk, leaves.data(), height, acc.data() + bulk, acc.size() - bulk);
    return permute_block_count(height);
}

std::vector<std::uint64_t> apply_grouped(const BitMatrix& bits, const ObliviousForest& forest, ApplyKind kind,
                                         unsigned width, const ExecPolicy& policy, unsigned permute_height_cap,
                                         ApplyStats* stats) {
    if (kind == ApplyKind::naive) throw ConfigError("apply_grouped does not run the naive strategy");
    if (bits.num_features() != forest.num_binary_features()) {
        throw DimensionError("bit matrix has " + std::to_string(bits.num_features()) + " binary features, forest " +
                             std::to_string(forest.num_binary_features()));
    }
    const std::size_t block_docs = apply_block_docs(bits.layout(), width);
    const std::size_t docs = bits.logical_docs();
    std::vector<std::uint64_t> sums(docs, 0);
    if (stats != nullptr) *stats = {};
    if (docs == 0) return sums;

    const std::size_t slots = block_docs;
    const std::size_t blocks = (docs + block_docs - 1) / block_docs;
    const auto order = SlotOrder(bits.layout(), slots);
    const auto layout = tree_layout(forest);

    const BuildFn build = SelectBuild(bits.layout(), width, policy);
    AccumulateFn per_tree = nullptr;
    Batch4Fn batch4 = nullptr;
    AccumulateFn gather = nullptr;
    bool permute_vector = false;
    switch (kind) {
        case ApplyKind::per_tree: per_tree = SelectPerTree(width, policy); break;
        case ApplyKind::batch4: batch4 = SelectBatch4(width, policy); break;
        case ApplyKind::gather: gather = SelectGather(width, policy); break;
        case ApplyKind::permute:
            gather = SelectGather(width, policy);
            permute_vector = select_vector_path(policy, Tier::v512, "grouped-permute");
            break;
        case ApplyKind::naive: break;
    }

    AlignedVector<std::uint64_t> acc(slots);
    AlignedVector<std::uint8_t> index_buffer(4 * slots);
    ConditionBytes conditions(bits, block_docs / 8);
    const std::uint32_t* leaves = forest.leaf_answers.data();
    const std::uint32_t* condition_indices = forest.condition_indices.data();

    auto build_tree = [&](const TreeSpan& tree, std::size_t block, std::uint8_t* out) {
        build(conditions.fetch(condition_indices + tree.condition_base, tree.height, block), tree.height, out);
    };

    for (std::size_t block = 0; block < blocks; ++block) {
        std::fill(acc.begin(), acc.end(), 0);
        if (kind == ApplyKind::batch4) {
            for (std::size_t t0 = 0; t0 < layout.size(); t0 += 4) {
                const auto count = static_cast<unsigned>(std::min<std::size_t>(4, layout.size() - t0));
                const std::uint8_t* idx[4] = {};
                const std::uint32_t* lv[4] = {};
                for (unsigned t = 0; t < count; ++t) {
                    std::uint8_t* out = index_buffer.data() + t * slots;
                    build_tree(layout[t0 + t], block, out);
                    idx[t] = out;
                    lv[t] = leaves + layout[t0 + t].leaf_base;
                }
                batch4(idx, lv, count, acc.data(), slots);
            }
        } else {
            std::uint8_t* idx = index_buffer.data();
            for (const auto& tree : layout) {
                build_tree(tree, block, idx);
                const std::uint32_t* lv = leaves + tree.leaf_base;
                if (kind == ApplyKind::per_tree) {
                    per_tree(idx, lv, acc.data(), slots);
                } else if (kind == ApplyKind::permute && tree.height <= permute_height_cap) {
                    if (permute_vector) {
                        detail::accumulate_permute_512(idx, lv, tree.height, acc.data(), slots);
                    } else {
                        PermuteRef(idx, lv, tree.height, acc.data(), slots);
                    }
                } else {
                    gather(idx, lv, acc.data(), slots);
                }
            }
        }
        const std::size_t first = block * block_docs;
        for (std::size_t s = 0; s < slots; ++s) {
            const std::size_t doc = first + order[s];
            if (doc < docs) sums[doc] = acc[s];
        }
    }

    if (stats != nullptr && kind == ApplyKind::permute) {
        for (const auto& tree : layout) {
            if (tree.height <= permute_height_cap) {
                ++stats->permute_trees;
                stats->permute_blocks_by_height[tree.height] = permute_block_count(tree.height);
            } else {
                ++stats->gather_fallback_trees;
            }
        }
    }
    return sums;
}

std::vector<double> finalize_scores(std::span<const std::uint64_t> sums, const ObliviousForest& forest) {
    std::vector<double> scores(sums.size());
    for (std::size_t d = 0; d < sums.size(); ++d) {
        scores[d] = (static_cast<double>(sums[d]) - 2147483648.0) * forest.scale + forest.bias;
    }
    return scores;
}

}  // namespace obliv
