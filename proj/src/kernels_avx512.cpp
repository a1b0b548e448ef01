// 512-bit kernels and mask-compare kernels (AVX-512 F/BW/DQ/VL).
#include <immintrin.h>

#include <cstring>

#include "kernels.hpp"

namespace obliv::detail {

namespace {

constexpr std::size_t kWidth = 512;
constexpr std::size_t kSubgroupDocs = kWidth / 8;

// Compares lane_docs consecutive floats against the threshold; bit d of the
// result is (col[d] < threshold).
template <unsigned LaneDocs>
inline std::uint64_t CompareLane(const float* col, float threshold) {
    if constexpr (LaneDocs == 16) {
        const __m128 t = _mm_set1_ps(threshold);
        const unsigned m0 = _mm_cmp_ps_mask(_mm_loadu_ps(col + 0), t, _CMP_LT_OQ);
        const unsigned m1 = _mm_cmp_ps_mask(_mm_loadu_ps(col + 4), t, _CMP_LT_OQ);
        const unsigned m2 = _mm_cmp_ps_mask(_mm_loadu_ps(col + 8), t, _CMP_LT_OQ);
        const unsigned m3 = _mm_cmp_ps_mask(_mm_loadu_ps(col + 12), t, _CMP_LT_OQ);
        return m0 | (m1 << 4) | (m2 << 8) | (m3 << 12);
    } else if constexpr (LaneDocs == 32) {
        const __m256 t = _mm256_set1_ps(threshold);
        const std::uint32_t m0 = _mm256_cmp_ps_mask(_mm256_loadu_ps(col + 0), t, _CMP_LT_OQ);
        const std::uint32_t m1 = _mm256_cmp_ps_mask(_mm256_loadu_ps(col + 8), t, _CMP_LT_OQ);
        const std::uint32_t m2 = _mm256_cmp_ps_mask(_mm256_loadu_ps(col + 16), t, _CMP_LT_OQ);
        const std::uint32_t m3 = _mm256_cmp_ps_mask(_mm256_loadu_ps(col + 24), t, _CMP_LT_OQ);
        return m0 | (m1 << 8) | (m2 << 16) | (m3 << 24);
    } else {
        const __m512 t = _mm512_set1_ps(threshold);
        const std::uint64_t m0 = _mm512_cmp_ps_mask(_mm512_loadu_ps(col + 0), t, _CMP_LT_OQ);
        const std::uint64_t m1 = _mm512_cmp_ps_mask(_mm512_loadu_ps(col + 16), t, _CMP_LT_OQ);
        const std::uint64_t m2 = _mm512_cmp_ps_mask(_mm512_loadu_ps(col + 32), t, _CMP_LT_OQ);
        const std::uint64_t m3 = _mm512_cmp_ps_mask(_mm512_loadu_ps(col + 48), t, _CMP_LT_OQ);
        return m0 | (m1 << 16) | (m2 << 32) | (m3 << 48);
    }
}

template <unsigned LaneDocs>
void BinarizeOrdered(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink) {
    constexpr std::size_t kChunk = 128;
    constexpr std::size_t kLaneBytes = LaneDocs / 8;
    alignas(64) float tile[4][kChunk];
    for (std::size_t chunk = 0; chunk < arena.padded_docs; chunk += kChunk) {
        const std::size_t docs = arena.padded_docs - chunk < kChunk ? arena.padded_docs - chunk : kChunk;
        std::size_t k = 0;
        for (std::size_t g0 = 0; g0 < plan.group_count; g0 += 4) {
            const std::size_t n = plan.group_count - g0 < 4 ? plan.group_count - g0 : 4;
            const float* cols[4] = {};
            if (arena.feature_major) {
                for (std::size_t c = 0; c < n; ++c) {
                    cols[c] = arena.data + plan.groups[g0 + c].float_feature_index * arena.stride + chunk;
                }
            } else {
                std::uint32_t src[4] = {};
                for (std::size_t c = 0; c < n; ++c) src[c] = plan.groups[g0 + c].float_feature_index;
                transpose_columns(arena, chunk, docs, src, n, &tile[0][0], kChunk);
                for (std::size_t c = 0; c < n; ++c) cols[c] = tile[c];
            }
            for (std::size_t c = 0; c < n; ++c) {
                const std::uint32_t count = plan.groups[g0 + c].threshold_count;
                for (std::uint32_t t = 0; t < count; ++t, ++k) {
                    std::uint8_t* row = sink.data + k * sink.row_bytes + chunk / 8;
                    for (std::size_t d = 0; d < docs; d += LaneDocs) {
                        const std::uint64_t bits = CompareLane<LaneDocs>(cols[c] + d, plan.thresholds[k]);
                        std::memcpy(row + d / 8, &bits, kLaneBytes);
                    }
                }
            }
        }
    }
}

}  // namespace

// The 512-bit compare lands in a mask register and is widened back to lanes
// before packing; packs run per 128-bit lane, giving subgroup byte j document
// j%4 + (j/4%4)*16 + (j/16)*4.
void binarize_interleaved_avx512(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink) {
    alignas(64) float tile[4][kWidth];
    const std::size_t blocks = arena.padded_docs / kWidth;
    for (std::size_t block = 0; block < blocks; ++block) {
        const std::size_t doc_begin = block * kWidth;
        std::size_t k = 0;
        for (std::size_t g0 = 0; g0 < plan.group_count; g0 += 4) {
            const std::size_t n = plan.group_count - g0 < 4 ? plan.group_count - g0 : 4;
            const float* cols[4] = {};
            if (arena.feature_major) {
                for (std::size_t c = 0; c < n; ++c) {
                    cols[c] = arena.data + plan.groups[g0 + c].float_feature_index * arena.stride + doc_begin;
                }
            } else {
                std::uint32_t src[4] = {};
                for (std::size_t c = 0; c < n; ++c) src[c] = plan.groups[g0 + c].float_feature_index;
                for (std::size_t part = 0; part < kWidth; part += 128) {
                    transpose_columns(arena, doc_begin + part, 128, src, n, &tile[0][part], kWidth);
                }
                for (std::size_t c = 0; c < n; ++c) cols[c] = tile[c];
            }
            for (std::size_t c = 0; c < n; ++c) {
                const float* col = cols[c];
                const std::uint32_t count = plan.groups[g0 + c].threshold_count;
                for (std::uint32_t t = 0; t < count; ++t, ++k) {
                    const __m512 threshold = _mm512_set1_ps(plan.thresholds[k]);
                    __m512i bits = _mm512_setzero_si512();
                    for (int s = 0; s < 8; ++s) {
                        const float* p = col + s * kSubgroupDocs;
                        const __m512i m0 = _mm512_movm_epi32(_mm512_cmp_ps_mask(_mm512_loadu_ps(p + 0), threshold, _CMP_LT_OQ));
                        const __m512i m1 = _mm512_movm_epi32(_mm512_cmp_ps_mask(_mm512_loadu_ps(p + 16), threshold, _CMP_LT_OQ));
                        const __m512i m2 = _mm512_movm_epi32(_mm512_cmp_ps_mask(_mm512_loadu_ps(p + 32), threshold, _CMP_LT_OQ));
                        const __m512i m3 = _mm512_movm_epi32(_mm512_cmp_ps_mask(_mm512_loadu_ps(p + 48), threshold, _CMP_LT_OQ));
                        const __m512i bytes =
                            _mm512_packs_epi16(_mm512_packs_epi32(m0, m1), _mm512_packs_epi32(m2, m3));
                        bits = _mm512_or_si512(bits,
                                               _mm512_and_si512(bytes, _mm512_set1_epi8(static_cast<char>(1 << s))));
                    }
                    _mm512_storeu_si512(sink.data + k * sink.row_bytes + block * 64, bits);
                }
            }
        }
    }
}

void binarize_ordered_avx512(const ArenaView& arena, const ThresholdPlan& plan, unsigned lane_docs, BitSink sink) {
    switch (lane_docs) {
        case 16: BinarizeOrdered<16>(arena, plan, sink); return;
        case 32: BinarizeOrdered<32>(arena, plan, sink); return;
        default: BinarizeOrdered<64>(arena, plan, sink); return;
    }
}

void build_slots_interleaved_avx512(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots) {
    __m512i v[8];
    for (unsigned j = 0; j < height; ++j) v[j] = _mm512_loadu_si512(cond_bytes[j]);
    for (unsigned s = 0; s < 8; ++s) {
        __m512i index = _mm512_setzero_si512();
        for (unsigned j = 0; j < height; ++j) {
            const __m512i moved = j >= s ? _mm512_sll_epi16(v[j], _mm_cvtsi32_si128(static_cast<int>(j - s)))
                                         : _mm512_srl_epi16(v[j], _mm_cvtsi32_si128(static_cast<int>(s - j)));
            index = _mm512_or_si512(index, _mm512_and_si512(moved, _mm512_set1_epi8(static_cast<char>(1 << j))));
        }
        _mm512_storeu_si512(slots + s * kSubgroupDocs, index);
    }
}

void build_slots_ordered_avx512(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots) {
    __m512i index = _mm512_setzero_si512();
    for (unsigned j = 0; j < height; ++j) {
        std::uint64_t packed;
        std::memcpy(&packed, cond_bytes[j], sizeof(packed));
        index = _mm512_or_si512(index, _mm512_maskz_set1_epi8(packed, static_cast<char>(1 << j)));
    }
    _mm512_storeu_si512(slots, index);
}

void accumulate_per_tree_avx512(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                                std::size_t n) {
    for (std::size_t i = 0; i < n; i += 8) {
        const __m512i add = _mm512_set_epi64(leaves[idx[i + 7]], leaves[idx[i + 6]], leaves[idx[i + 5]],
                                             leaves[idx[i + 4]], leaves[idx[i + 3]], leaves[idx[i + 2]],
                                             leaves[idx[i + 1]], leaves[idx[i + 0]]);
        _mm512_storeu_si512(acc + i, _mm512_add_epi64(_mm512_loadu_si512(acc + i), add));
    }
}

void accumulate_batch4_avx512(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
                              std::uint64_t* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; i += 8) {
        __m512i sum = _mm512_loadu_si512(acc + i);
        for (unsigned t = 0; t < count; ++t) {
            const std::uint8_t* ix = idx[t];
            const std::uint32_t* lv = leaves[t];
            sum = _mm512_add_epi64(sum, _mm512_set_epi64(lv[ix[i + 7]], lv[ix[i + 6]], lv[ix[i + 5]], lv[ix[i + 4]],
                                                         lv[ix[i + 3]], lv[ix[i + 2]], lv[ix[i + 1]], lv[ix[i]]));
        }
        _mm512_storeu_si512(acc + i, sum);
    }
}

namespace {

inline void AddWidened(std::uint64_t* acc, __m512i values) {
    const __m512i lo = _mm512_cvtepu32_epi64(_mm512_castsi512_si256(values));
    const __m512i hi = _mm512_cvtepu32_epi64(_mm512_extracti64x4_epi64(values, 1));
    _mm512_storeu_si512(acc + 0, _mm512_add_epi64(_mm512_loadu_si512(acc + 0), lo));
    _mm512_storeu_si512(acc + 8, _mm512_add_epi64(_mm512_loadu_si512(acc + 8), hi));
}

}  // namespace

void accumulate_gather_512(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                           std::size_t n) {
    for (std::size_t i = 0; i < n; i += 16) {
        const __m512i wide = _mm512_cvtepu8_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i)));
        AddWidened(acc + i, _mm512_i32gather_epi32(wide, leaves, 4));
    }
}

// Index bits 4..7 pick the register, bits 0..3 the lane; one masked permute per
// register, combined with OR.
void accumulate_permute_512(const std::uint8_t* idx, const std::uint32_t* leaves, unsigned height,
                            std::uint64_t* acc, std::size_t n) {
    const unsigned leaf_count = 1u << height;
    const unsigned registers = leaf_count < 16 ? 1 : leaf_count / 16;
    __m512i table[16];
    if (leaf_count < 16) {
        table[0] = _mm512_maskz_loadu_epi32(static_cast<__mmask16>((1u << leaf_count) - 1), leaves);
    } else {
        for (unsigned r = 0; r < registers; ++r) table[r] = _mm512_loadu_si512(leaves + 16 * r);
    }
    const __m512i low_mask = _mm512_set1_epi32(15);
    for (std::size_t i = 0; i < n; i += 16) {
        const __m512i wide = _mm512_cvtepu8_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i)));
        const __m512i lane = _mm512_and_si512(wide, low_mask);
        const __m512i reg = _mm512_srli_epi32(wide, 4);
        __m512i values = _mm512_setzero_si512();
        for (unsigned r = 0; r < registers; ++r) {
            const __mmask16 hit = _mm512_cmpeq_epi32_mask(reg, _mm512_set1_epi32(static_cast<int>(r)));
            values = _mm512_or_si512(values, _mm512_maskz_permutexvar_epi32(hit, lane, table[r]));
        }
        AddWidened(acc + i, values);
    }
}

}  // namespace obliv::detail
