#include "obliv/arena.hpp"

#include <algorithm>
#include <string>

#include "obliv/error.hpp"

namespace obliv {

PaddedArena::PaddedArena(Orientation orientation, std::size_t logical_docs, std::size_t padded_docs,
                         std::size_t num_features)
    : orientation_(orientation),
      logical_docs_(logical_docs),
      padded_docs_(padded_docs),
      num_features_(num_features),
      stride_(orientation == Orientation::doc_major ? RoundUp(num_features, kCacheLine / sizeof(float))
                                                    : padded_docs),
      data_(orientation == Orientation::doc_major ? padded_docs * stride_ : num_features * stride_, 0.0f) {}

PaddedArena pad_arena(const FeatureMatrix& features, std::size_t block_docs, Orientation target) {
    switch (block_docs) {
        case 16: case 32: case 64: case 128: case 256: case 512: break;
        default: throw DimensionError("pad_arena: block of " + std::to_string(block_docs) + " documents");
    }
    const std::size_t docs = features.num_docs();
    const std::size_t feats = features.num_features();
    PaddedArena arena(target, docs, RoundUp(docs, block_docs), feats);
    float* out = arena.data();
    const std::size_t stride = arena.stride();
    const auto values = features.values();
    if (features.orientation() == target) {
        // Same orientation: row-by-row copy into the wider stride.
        const std::size_t rows = target == Orientation::doc_major ? docs : feats;
        const std::size_t row_len = target == Orientation::doc_major ? feats : docs;
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(values.data() + r * row_len, row_len, out + r * stride);
        }
    } else {
        for (std::size_t d = 0; d < docs; ++d) {
            for (std::size_t f = 0; f < feats; ++f) {
                const float v = features.at(d, f);
                if (target == Orientation::doc_major) {
                    out[d * stride + f] = v;
                } else {
                    out[f * stride + d] = v;
                }
            }
        }
    }
    return arena;
}

PaddedArena pad_arena(const FeatureMatrix& features, std::size_t block_docs) {
    return pad_arena(features, block_docs, features.orientation());
}

}  // namespace obliv
