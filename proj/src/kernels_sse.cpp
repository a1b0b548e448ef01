// 128-bit kernels (SSE4.1 + SSSE3).
#include <immintrin.h>

#include <cstring>

#include "kernels.hpp"

namespace obliv::detail {

namespace {

constexpr std::size_t kWidth = 128;
constexpr std::size_t kSubgroupDocs = kWidth / 8;

}  // namespace

void binarize_interleaved_sse(const ArenaView& arena, const ThresholdPlan& plan, BitSink sink) {
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
                transpose_columns(arena, doc_begin, kWidth, src, n, &tile[0][0], kWidth);
                for (std::size_t c = 0; c < n; ++c) cols[c] = tile[c];
            }
            for (std::size_t c = 0; c < n; ++c) {
                const float* col = cols[c];
                const std::uint32_t count = plan.groups[g0 + c].threshold_count;
                for (std::uint32_t t = 0; t < count; ++t, ++k) {
                    const __m128 threshold = _mm_set1_ps(plan.thresholds[k]);
                    __m128i bits = _mm_setzero_si128();
                    for (int s = 0; s < 8; ++s) {
                        const float* p = col + s * kSubgroupDocs;
                        const __m128i m0 = _mm_castps_si128(_mm_cmplt_ps(_mm_loadu_ps(p + 0), threshold));
                        const __m128i m1 = _mm_castps_si128(_mm_cmplt_ps(_mm_loadu_ps(p + 4), threshold));
                        const __m128i m2 = _mm_castps_si128(_mm_cmplt_ps(_mm_loadu_ps(p + 8), threshold));
                        const __m128i m3 = _mm_castps_si128(_mm_cmplt_ps(_mm_loadu_ps(p + 12), threshold));
                        const __m128i bytes = _mm_packs_epi16(_mm_packs_epi32(m0, m1), _mm_packs_epi32(m2, m3));
                        bits = _mm_or_si128(bits, _mm_and_si128(bytes, _mm_set1_epi8(static_cast<char>(1 << s))));
                    }
                    _mm_storeu_si128(reinterpret_cast<__m128i*>(sink.data + k * sink.row_bytes + block * 16), bits);
                }
            }
        }
    }
}

void build_slots_interleaved_sse(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots) {
    __m128i v[8];
    for (unsigned j = 0; j < height; ++j) v[j] = _mm_loadu_si128(reinterpret_cast<const __m128i*>(cond_bytes[j]));
    for (unsigned s = 0; s < 8; ++s) {
        __m128i index = _mm_setzero_si128();
        for (unsigned j = 0; j < height; ++j) {
            // Bit s of each byte moves to bit j; the mask drops what crossed a byte edge.
            const __m128i moved = j >= s ? _mm_sll_epi16(v[j], _mm_cvtsi32_si128(static_cast<int>(j - s)))
                                         : _mm_srl_epi16(v[j], _mm_cvtsi32_si128(static_cast<int>(s - j)));
            index = _mm_or_si128(index, _mm_and_si128(moved, _mm_set1_epi8(static_cast<char>(1 << j))));
        }
        _mm_storeu_si128(reinterpret_cast<__m128i*>(slots + s * kSubgroupDocs), index);
    }
}

void build_slots_ordered_sse(const std::uint8_t* const* cond_bytes, unsigned height, std::uint8_t* slots) {
    const __m128i spread = _mm_setr_epi8(0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1);
    const __m128i select = _mm_setr_epi8(1, 2, 4, 8, 16, 32, 64, -128, 1, 2, 4, 8, 16, 32, 64, -128);
    __m128i index = _mm_setzero_si128();
    for (unsigned j = 0; j < height; ++j) {
        std::uint16_t packed;
        std::memcpy(&packed, cond_bytes[j], sizeof(packed));
        const __m128i bytes = _mm_shuffle_epi8(_mm_set1_epi16(static_cast<short>(packed)), spread);
        const __m128i set = _mm_cmpeq_epi8(_mm_and_si128(bytes, select), select);
        index = _mm_or_si128(index, _mm_and_si128(set, _mm_set1_epi8(static_cast<char>(1 << j))));
    }
    _mm_storeu_si128(reinterpret_cast<__m128i*>(slots), index);
}

void accumulate_per_tree_sse(const std::uint8_t* idx, const std::uint32_t* leaves, std::uint64_t* acc,
                             std::size_t n) {
    for (std::size_t i = 0; i < n; i += 4) {
        auto* out = reinterpret_cast<__m128i*>(acc + i);
        const __m128i a0 = _mm_set_epi64x(leaves[idx[i + 1]], leaves[idx[i + 0]]);
        const __m128i a1 = _mm_set_epi64x(leaves[idx[i + 3]], leaves[idx[i + 2]]);
        _mm_storeu_si128(out + 0, _mm_add_epi64(_mm_loadu_si128(out + 0), a0));
        _mm_storeu_si128(out + 1, _mm_add_epi64(_mm_loadu_si128(out + 1), a1));
    }
}

void accumulate_batch4_sse(const std::uint8_t* const* idx, const std::uint32_t* const* leaves, unsigned count,
                           std::uint64_t* acc, std::size_t n) {
    for (std::size_t i = 0; i < n; i += 2) {
        auto* out = reinterpret_cast<__m128i*>(acc + i);
        __m128i sum = _mm_loadu_si128(out);
        for (unsigned t = 0; t < count; ++t) {
            sum = _mm_add_epi64(sum, _mm_set_epi64x(leaves[t][idx[t][i + 1]], leaves[t][idx[t][i]]));
        }
        _mm_storeu_si128(out, sum);
    }
}

}  // namespace obliv::detail
