// Raw-pointer kernel entry points. Each ISA lives in its own translation unit
// compiled with matching -m flags; nothing here instantiates std templates so no
// vector-ISA code leaks into shared inline functions.
#pragma once

#include <cstddef>
#include <cstdint>

#include "obliv/model.hpp"

namespace obliv::detail {

struct ArenaView {
    const float* data = nullptr;
    std::size_t stride = 0;  // floats between consecutive rows
    std::size_t logical_docs = 0;
    std::size_t padded_docs = 0;
    std::size_t num_features = 0;
    bool feature_major = false;
};

struct ThresholdPlan {
    const FeatureGroup* groups = nullptr;
    std::size_t group_count = 0;
    const float* thresholds = nullptr;
};

struct BitSink {
    std::uint8_t* data = nullptr;
    std::size_t row_bytes = 0;
};

// Copies `col_count` (<= 4) columns of `doc_count` (<= 128) documents into
// out[c * out_stride + d]. Document-major views only.
void transpose_columns(const ArenaView& arena, std::size_t doc_begin, std::size_t doc_count,
                       const std::uint32_t* cols, std::size_t col_count, float* out, std::size_t out_stride);

// Binarization. Arena padded_docs is a multiple of the block (W or lane_docs).
void binarize_interleaved_sse(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink);
void binarize_interleaved_avx2(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink);
void binarize_interleaved_avx512(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink);
void binarize_ordered_avx512(const ArenaView& arena, const ThresholdPlan& plan, unsigned lane_docs, BitSink sink);

// Index building for one tree over one block; cond_bytes[j] points at the block's
// bits for the tree's j-th condition.
// Interleaved-W: W/8 bytes per condition, W slots out; slot s*(W/8)+p is the
// document at bit offset p*8+s.
// Ordered at vector width W: W/64 bytes per condition, W/8 slots out; slot p is
// document p of the block.
void build_slots_interleaved_sse(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots);
void build_slots_interleaved_avx2(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots);
void build_slots_interleaved_avx512(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots);
void build_slots_ordered_sse(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots);
void build_slots_ordered_avx2(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots);
void build_slots_ordered_avx512(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots);

// Leaf accumulation, acc[i] += leaves[idx[i]]. n is a multiple of 16.
void accumulate_per_tree_sse(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc, std::size_t n);
void accumulate_per_tree_avx2(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc, std::size_t n);
void accumulate_per_tree_avx512(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                                std::size_t n);
void accumulate_batch4_sse(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
                           std::uint64_t* acc, std::size_t n);
void accumulate_batch4_avx2(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
                            std::uint64_t* acc, std::size_t n);
void accumulate_batch4_avx512(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
                              std::uint64_t* acc, std::size_t n);
void accumulate_gather_128(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc, std::size_t n);
void accumulate_gather_256(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc, std::size_t n);
void accumulate_gather_512(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc, std::size_t n);
// Leaves of one tree held in ceil(2^height / 16) registers; height <= 8.
void accumulate_permute_512(const std::uint8_t* idx, const std::uint32_t* leaves, unsigned height,
                            std::uint64_t* acc, std::size_t n);

}  // namespace obliv::detail
