// 256-bit kernels (AVX2), plus the 128-bit gather which also needs AVX2.
#include <immintrin.h>

#include <cstring>

#include "kernels.hpp"

namespace obliv::detail {

namespace {

constexpr std::size_t kWidth = 256;
constexpr std::size_t kSubgroupDocs = kWidth / 8;

}  // namespace

// Packs work per 128-bit lane, so subgroup byte j holds document
// j%4 + (j/4%4)*8 + (j/16)*4 rather than document j.
void binarize_interleaved_avx2(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink) {
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
                // Two adjacent 128-document tiles.
                transpose_columns(arena, doc_begin, 128, src, n, &tile[0][0], kWidth);
                transpose_columns(arena, doc_begin + 128, 128, src, n, &tile[0][128], kWidth);
                for (std::size_t c = 0; c < n; ++c) cols[c] = tile[c];
            }
            for (std::size_t c = 0; c < n; ++c) {
                const float* col = cols[c];
                const std::uint32_t count = plan.groups[g0 + c].threshold_count;
                for (std::uint32_t t = 0; t < count; ++t, ++k) {
                    const __m256 threshold = _mm256_set1_ps(plan.thresholds[k]);
                    __m256i bits = _mm256_setzero_si256();
                    for (int s = 0; s < 8; ++s) {
                        const float* p = col + s * kSubgroupDocs;
                        const __m256i m0 = _mm256_castps_si256(_mm256_cmp_ps(_mm256_loadu_ps(p + 0), threshold, _CMP_LT_OQ));
                        const __m256i m1 = _mm256_castps_si256(_mm256_cmp_ps(_mm256_loadu_ps(p + 8), threshold, _CMP_LT_OQ));
                        const __m256i m2 = _mm256_castps_si256(_mm256_cmp_ps(_mm256_loadu_ps(p + 16), threshold, _CMP_LT_OQ));
                        const __m256i m3 = _mm256_castps_si256(_mm256_cmp_ps(_mm256_loadu_ps(p + 24), threshold, _CMP_LT_OQ));
                        const __m256i bytes =
                            _mm256_packs_epi16(_mm256_packs_epi32(m0, m1), _mm256_packs_epi32(m2, m3));
                        bits = _mm256_or_si256(bits,
                                               _mm256_and_si256(bytes, _mm256_set1_epi8(static_cast<char>(1 << s))));
                    }
                    _mm256_storeu_si256(reinterpret_cast<__m256i*>(sink.data + k * sink.row_bytes + block * 32), bits);
                }
            }
        }
    }
}

void build_slots_interleaved_avx2(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots) {
    __m256i v[8];
    for (unsigned j = 0; j < height; ++j) {
        v[j] = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(cond_bytes[j]));
    }
    for (unsigned s = 0; s < 8; ++s) {
        __m256i index = _mm256_setzero_si256();
        for (unsigned j = 0; j < height; ++j) {
            const __m256i moved = j >= s ? _mm256_sll_epi16(v[j], _mm_cvtsi32_si128(static_cast<int>(j - s)))
                                         : _mm256_srl_epi16(v[j], _mm_cvtsi32_si128(static_cast<int>(s - j)));
            index = _mm256_or_si256(index, _mm256_and_si256(moved, _mm256_set1_epi8(static_cast<char>(1 << j))));
        }
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(slots + s * kSubgroupDocs), index);
    }
}

void build_slots_ordered_avx2(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots) {
    const __m256i spread = _mm256_setr_epi8(0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1,  //
                                            2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3);
    const __m256i select = _mm256_set1_epi64x(static_cast<long long>(0x8040201008040201ULL));
    __m256i index = _mm256_setzero_si256();
    for (unsigned j = 0; j < height; ++j) {
        std::uint32_t packed;
        std::memcpy(&packed, cond_bytes[j], sizeof(packed));
        const __m256i bytes = _mm256_shuffle_epi8(_mm256_set1_epi32(static_cast<int>(packed)), spread);
        const __m256i set = _mm256_cmpeq_epi8(_mm256_and_si256(bytes, select), select);
        index = _mm256_or_si256(index, _mm256_and_si256(set, _mm256_set1_epi8(static_cast<char>(1 << j))));
    }
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(slots), index);
}

void accumulate_per_tree_avx2(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                              std::size_t n) {
    for (std::size_t i = 0; i < n; i += 8) {
        auto* out = reinterpret_cast<__m256i*>(acc + i);
        const __m256i a0 = _mm256_set_epi64x(leaves[idx[i + 3]], leaves[idx[i + 2]], leaves[idx[i + 1]],
                                             leaves[idx[i + 0]]);
        const __m256i a1 = _mm256_set_epi64x(leaves[idx[i + 7]], leaves[idx[i + 6]], leaves[idx[i + 5]],
                                             leaves[idx[i + 4]]);
        _mm256_storeu_si256(out + 0, _mm256_add_epi64(_mm256_loadu_si256(out + 0), a0));
        _mm256_storeu_si256(out + 1, _mm256_add_epi64(_mm256_loadu_si256(out + 1), a1));
    }
}

void accumulate_batch4_avx2(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
                            std::uint64_t* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; i += 4) {
        auto* out = reinterpret_cast<__m256i*>(acc + i);
        __m256i sum = _mm256_loadu_si256(out);
        for (unsigned t = 0; t < count; ++t) {
            const std::uint8_t* ix = idx[t];
            const std::uint32_t* lv = leaves[t];
            sum = _mm256_add_epi64(sum, _mm256_set_epi64x(lv[ix[i + 3]], lv[ix[i + 2]], lv[ix[i + 1]], lv[ix[i]]));
        }
        _mm256_storeu_si256(out, sum);
    }
}

void accumulate_gather_128(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                           std::size_t n) {
    const auto* base = reinterpret_cast<const int*>(leaves);
    for (std::size_t i = 0; i < n; i += 4) {
        std::int32_t packed;
        std::memcpy(&packed, idx + i, sizeof(packed));
        const __m128i wide = _mm_cvtepu8_epi32(_mm_cvtsi32_si128(packed));
        const __m128i values = _mm_i32gather_epi32(base, wide, 4);
        auto* out = reinterpret_cast<__m128i*>(acc + i);
        _mm_storeu_si128(out + 0, _mm_add_epi64(_mm_loadu_si128(out + 0), _mm_cvtepu32_epi64(values)));
        _mm_storeu_si128(out + 1,
                         _mm_add_epi64(_mm_loadu_si128(out + 1), _mm_cvtepu32_epi64(_mm_srli_si128(values, 8))));
    }
}

void accumulate_gather_256(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                           std::size_t n) {
    const auto* base = reinterpret_cast<const int*>(leaves);
    for (std::size_t i = 0; i < n; i += 8) {
        const __m256i wide = _mm256_cvtepu8_epi32(_mm_loadl_epi64(reinterpret_cast<const __m128i*>(idx + i)));
        const __m256i values = _mm256_i32gather_epi32(base, wide, 4);
        auto* out = reinterpret_cast<__m256i*>(acc + i);
        const __m256i lo = _mm256_cvtepu32_epi64(_mm256_castsi256_si128(values));
        const __m256i hi = _mm256_cvtepu32_epi64(_mm256_extracti128_si256(values, 1));
        _mm256_storeu_si256(out + 0, _mm256_add_epi64(_mm256_loadu_si256(out + 0), lo));
        _mm256_storeu_si256(out + 1, _mm256_add_epi64(_mm256_loadu_si256(out + 1), hi));
    }
}

}  // namespace obliv::detail
