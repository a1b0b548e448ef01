#include "obliv/binarize.hpp"

#include <algorithm>
#include <cstring>

#include "kernels.hpp"
#include "obliv/error.hpp"

namespace obliv {

namespace {

std::size_t Width(BitLayout layout) {
    switch (layout) {
        case BitLayout::ordered: return 64;
        case BitLayout::interleaved128: return 128;
        case BitLayout::interleaved256: return 256;
        case BitLayout::interleaved512: return 512;
    }
    throw DimensionError("unknown bit layout tag " + std::to_string(static_cast<int>(layout)));
}

// offset -> doc and doc -> offset for one block of each interleaved layout.
struct LayoutTables {
    std::array<std::vector<std::uint16_t>, 4> doc_of;
    std::array<std::vector<std::uint16_t>, 4> offset_of;

    LayoutTables() {
        for (int l = 1; l < 4; ++l) {
            const auto layout = static_cast<BitLayout>(l);
            const std::size_t w = Width(layout);
            doc_of[l].resize(w);
            offset_of[l].resize(w);
            for (std::size_t i = 0; i < w; ++i) {
                const auto doc = static_cast<std::uint16_t>(doc_of_offset(layout, i));
                doc_of[l][i] = doc;
                offset_of[l][doc] = static_cast<std::uint16_t>(i);
            }
        }
    }
};

const LayoutTables& Tables() {
    static const LayoutTables tables;
    return tables;
}

detail::ThresholdPlan PlanOf(const ObliviousForest& forest) {
    return {forest.feature_groups.data(), forest.feature_groups.size(), forest.thresholds.data()};
}

detail::ArenaView ViewOf(const PaddedArena& arena, std::size_t padded_docs) {
    return {arena.data(), arena.stride(), arena.logical_docs(), padded_docs, arena.num_features(),
            arena.orientation() == Orientation::feature_major};
}

inline float ValueAt(const detail::ArenaView& v, std::size_t doc, std::size_t feature) {
    return v.feature_major ? v.data[feature * v.stride + doc] : v.data[doc * v.stride + feature];
}

// Documents [0, doc_end) one at a time; bit positions from `place`.
template <typename Place>
void BinarizeScalar(const detail::ArenaView& view, const ObliviousForest& forest, std::size_t doc_end,
                    BitMatrix& out, Place place) {
    for (std::size_t d = 0; d < doc_end; ++d) {
        const std::size_t pos = place(d);
        const auto byte = pos / 8;
        const auto mask = static_cast<std::uint8_t>(1u << (pos % 8));
        std::size_t k = 0;
        for (const auto& group : forest.feature_groups) {
            const float x = ValueAt(view, d, group.float_feature_index);
            for (std::uint32_t t = 0; t < group.threshold_count; ++t, ++k) {
                if (x < forest.thresholds[k]) out.row(k)[byte] |= mask;
            }
        }
    }
}

void CheckShapes(std::size_t features, Orientation orientation, const ObliviousForest& forest,
                 BinarizeKernel kernel) {
    if (features != forest.num_float_features) {
        throw DimensionError("features have " + std::to_string(features) + " columns, forest expects " +
                             std::to_string(forest.num_float_features));
    }
    if (orientation != kernel.input_orientation()) {
        throw DimensionError("orientation mismatch: kernel " + kernel.id() + " expects " +
                             (kernel.pretransposed ? "feature-major" : "document-major") + " input");
    }
}

}  // namespace

const char* ToString(BitLayout layout) {
    switch (layout) {
        case BitLayout::ordered: return "ordered";
        case BitLayout::interleaved128: return "interleaved-128";
        case BitLayout::interleaved256: return "interleaved-256";
        case BitLayout::interleaved512: return "interleaved-512";
    }
    return "unknown";
}

BitLayout interleaved_layout(unsigned width) {
    switch (width) {
        case 128: return BitLayout::interleaved128;
        case 256: return BitLayout::interleaved256;
        case 512: return BitLayout::interleaved512;
        default: throw ConfigError("unsupported interleaved width " + std::to_string(width));
    }
}

std::size_t layout_block_docs(BitLayout layout) { return Width(layout); }

std::size_t doc_of_offset(BitLayout layout, std::size_t i) {
    const std::size_t w = Width(layout);
    if (i >= w) {
        throw DimensionError("offset " + std::to_string(i) + " outside a " + std::to_string(w) + "-document block");
    }
    switch (layout) {
        case BitLayout::ordered: return i;
        case BitLayout::interleaved128: return i % 8 * 16 + i / 8;
        case BitLayout::interleaved256: return i / 8 % 4 + i / 8 / 4 * 8 % 32 + i / 8 / 4 * 8 / 32 * 4 + i % 8 * 32;
        case BitLayout::interleaved512: return i / 8 % 4 + i / 8 / 4 * 16 % 64 + i / 8 / 4 * 16 / 64 * 4 + i % 8 * 64;
    }
    return i;
}

std::size_t offset_of_doc(BitLayout layout, std::size_t doc) {
    const std::size_t w = Width(layout);
    if (doc >= w) {
        throw DimensionError("document " + std::to_string(doc) + " outside a " + std::to_string(w) + "-document block");
    }
    if (layout == BitLayout::ordered) return doc;
    return Tables().offset_of[static_cast<int>(layout)][doc];
}

BitMatrix::BitMatrix(BitLayout layout, std::size_t num_features, std::size_t logical_docs, std::size_t padded_docs)
    : layout_(layout),
      num_features_(num_features),
      logical_docs_(logical_docs),
      padded_docs_(padded_docs),
      data_(num_features * (padded_docs / 8), 0) {
    if (padded_docs % 8 != 0 || padded_docs < logical_docs) {
        throw DimensionError("bit matrix padding " + std::to_string(padded_docs) + " for " +
                             std::to_string(logical_docs) + " documents");
    }
    if (layout != BitLayout::ordered && padded_docs % Width(layout) != 0) {
        throw DimensionError(std::string(ToString(layout)) + " needs whole blocks");
    }
}

std::string BinarizeKernel::id() const {
    std::string name;
    switch (kind) {
        case BinarizeKind::naive: name = "naive"; break;
        case BinarizeKind::mx128: name = "mx128"; break;
        case BinarizeKind::mx256: name = "mx256"; break;
        case BinarizeKind::mx512: name = "mx512"; break;
        case BinarizeKind::ord16: name = "ord16"; break;
        case BinarizeKind::ord32: name = "ord32"; break;
        case BinarizeKind::ord64: name = "ord64"; break;
    }
    return pretransposed ? name + "-t" : name;
}

BinarizeKernel BinarizeKernel::parse(std::string_view id) {
    BinarizeKernel kernel;
    if (id.ends_with("-t")) {
        kernel.pretransposed = true;
        id.remove_suffix(2);
    }
    static constexpr std::pair<std::string_view, BinarizeKind> kNames[] = {
        {"naive", BinarizeKind::naive}, {"mx128", BinarizeKind::mx128}, {"mx256", BinarizeKind::mx256},
        {"mx512", BinarizeKind::mx512}, {"ord16", BinarizeKind::ord16}, {"ord32", BinarizeKind::ord32},
        {"ord64", BinarizeKind::ord64},
    };
    for (const auto& [name, kind] : kNames) {
        if (id == name) {
            kernel.kind = kind;
            return kernel;
        }
    }
    throw ConfigError("unknown binarization kernel '" + std::string(id) + "'");
}

BitLayout BinarizeKernel::output_layout() const noexcept {
    switch (kind) {
        case BinarizeKind::mx128: return BitLayout::interleaved128;
        case BinarizeKind::mx256: return BitLayout::interleaved256;
        case BinarizeKind::mx512: return BitLayout::interleaved512;
        default: return BitLayout::ordered;
    }
}

std::size_t BinarizeKernel::block_docs() const noexcept {
    switch (kind) {
        case BinarizeKind::naive: return 8;
        case BinarizeKind::mx128: return 128;
        case BinarizeKind::mx256: return 256;
        case BinarizeKind::mx512: return 512;
        case BinarizeKind::ord16: return 16;
        case BinarizeKind::ord32: return 32;
        case BinarizeKind::ord64: return 64;
    }
    return 8;
}

std::size_t BinarizeKernel::arena_block_docs() const noexcept { return std::max<std::size_t>(16, block_docs()); }

Tier BinarizeKernel::required_tier() const noexcept {
    switch (kind) {
        case BinarizeKind::naive: return Tier::scalar;
        case BinarizeKind::mx128: return Tier::v128;
        case BinarizeKind::mx256: return Tier::v256;
        case BinarizeKind::mx512: return Tier::v512;
        default: return Tier::mask_compare;
    }
}

std::vector<BinarizeKernel> all_binarize_kernels() {
    std::vector<BinarizeKernel> kernels;
    for (bool transposed : {false, true}) {
        for (auto kind : {BinarizeKind::naive, BinarizeKind::mx128, BinarizeKind::mx256, BinarizeKind::mx512,
                          BinarizeKind::ord16, BinarizeKind::ord32, BinarizeKind::ord64}) {
            kernels.push_back({kind, transposed});
        }
    }
    return kernels;
}

namespace detail {

void transpose_columns(const ArenaView& arena, std::size_t doc_begin, std::size_t doc_count,
                       const std::uint32_t* cols, std::size_t col_count, float* out, std::size_t out_stride) {
    const float* rows = arena.data + doc_begin * arena.stride;
    for (std::size_t d = 0; d < doc_count; ++d) {
        const float* row = rows + d * arena.stride;
        for (std::size_t c = 0; c < col_count; ++c) out[c * out_stride + d] = row[cols[c]];
    }
}

}  // namespace detail

FeatureTile transpose_tile(const FeatureMatrix& features, std::size_t doc_begin, std::size_t feature_begin) {
    const std::size_t padded_docs = RoundUp(features.num_docs(), kTileDocs);
    const std::size_t padded_features = RoundUp(features.num_features(), kTileFeatures);
    if (doc_begin + kTileDocs > padded_docs || feature_begin + kTileFeatures > padded_features) {
        throw DimensionError("tile at (" + std::to_string(doc_begin) + ", " + std::to_string(feature_begin) +
                             ") outside padded bounds " + std::to_string(padded_docs) + "x" +
                             std::to_string(padded_features));
    }
    FeatureTile tile{};
    for (std::size_t d = 0; d < kTileDocs; ++d) {
        const std::size_t doc = doc_begin + d;
        if (doc >= features.num_docs()) break;
        for (std::size_t f = 0; f < kTileFeatures; ++f) {
            const std::size_t feature = feature_begin + f;
            if (feature < features.num_features()) tile[f][d] = features.at(doc, feature);
        }
    }
    return tile;
}

BitMatrix binarize(const PaddedArena& arena, const ObliviousForest& forest, BinarizeKernel kernel,
                   const ExecPolicy& policy) {
    CheckShapes(arena.num_features(), arena.orientation(), forest, kernel);
    const std::size_t docs = arena.logical_docs();
    const std::size_t padded = RoundUp(docs, kernel.block_docs());
    if (kernel.kind != BinarizeKind::naive && arena.padded_docs() < RoundUp(docs, kernel.arena_block_docs())) {
        throw DimensionError("arena padded to " + std::to_string(arena.padded_docs()) + " documents, kernel " +
                             kernel.id() + " needs " + std::to_string(RoundUp(docs, kernel.arena_block_docs())));
    }
    BitMatrix out(kernel.output_layout(), forest.num_binary_features(), docs, padded);
    if (docs == 0 || out.num_features() == 0) return out;

    const detail::ArenaView view = ViewOf(arena, padded);
    const detail::ThresholdPlan plan = PlanOf(forest);
    const detail::BitSink sink{out.data(), out.row_bytes()};
    const bool vector = select_vector_path(policy, kernel.required_tier(), kernel.id());

    switch (kernel.kind) {
        case BinarizeKind::naive:
            BinarizeScalar(view, forest, docs, out, [](std::size_t d) { return d; });
            break;
        case BinarizeKind::mx128:
        case BinarizeKind::mx256:
        case BinarizeKind::mx512: {
            if (vector) {
                if (kernel.kind == BinarizeKind::mx128) detail::binarize_interleaved_sse(view, plan, sink);
                if (kernel.kind == BinarizeKind::mx256) detail::binarize_interleaved_avx2(view, plan, sink);
                if (kernel.kind == BinarizeKind::mx512) detail::binarize_interleaved_avx512(view, plan, sink);
            } else {
                const std::size_t w = kernel.block_docs();
                const auto& offset_of = Tables().offset_of[static_cast<int>(kernel.output_layout())];
                BinarizeScalar(view, forest, padded, out,
                               [w, &offset_of](std::size_t d) { return d / w * w + offset_of[d % w]; });
            }
            break;
        }
        case BinarizeKind::ord16:
        case BinarizeKind::ord32:
        case BinarizeKind::ord64:
            if (vector) {
                detail::binarize_ordered_avx512(view, plan, static_cast<unsigned>(kernel.block_docs()), sink);
            } else {
                BinarizeScalar(view, forest, padded, out, [](std::size_t d) { return d; });
            }
            break;
    }
    return out;
}

BitMatrix binarize(const FeatureMatrix& features, const ObliviousForest& forest, BinarizeKernel kernel,
                   const ExecPolicy& policy) {
    CheckShapes(features.num_features(), features.orientation(), forest, kernel);
    if (kernel.kind == BinarizeKind::naive) {
        // Reads logical documents only, so the matrix itself serves as the arena.
        const std::size_t docs = features.num_docs();
        BitMatrix out(BitLayout::ordered, forest.num_binary_features(), docs, RoundUp(docs, 8));
        const bool fm = features.orientation() == Orientation::feature_major;
        const detail::ArenaView view{features.values().data(), fm ? docs : features.num_features(), docs, docs,
                                     features.num_features(), fm};
        BinarizeScalar(view, forest, docs, out, [](std::size_t d) { return d; });
        return out;
    }
    return binarize(pad_arena(features, kernel.arena_block_docs()), forest, kernel, policy);
}

BitMatrix binarize_naive(const FeatureMatrix& features, const ObliviousForest& forest) {
    return binarize(features, forest, {BinarizeKind::naive, false});
}

BitMatrix binarize_interleaved(const FeatureMatrix& features, const ObliviousForest& forest, unsigned width,
                               const ExecPolicy& policy) {
    BinarizeKernel kernel;
    switch (width) {
        case 128: kernel.kind = BinarizeKind::mx128; break;
        case 256: kernel.kind = BinarizeKind::mx256; break;
        case 512: kernel.kind = BinarizeKind::mx512; break;
        default: throw ConfigError("unsupported interleaved width " + std::to_string(width));
    }
    return binarize(features, forest, kernel, policy);
}

BitMatrix binarize_ordered(const FeatureMatrix& features, const ObliviousForest& forest, unsigned lane_docs,
                           const ExecPolicy& policy) {
    BinarizeKernel kernel;
    switch (lane_docs) {
        case 16: kernel.kind = BinarizeKind::ord16; break;
        case 32: kernel.kind = BinarizeKind::ord32; break;
        case 64: kernel.kind = BinarizeKind::ord64; break;
        default: throw ConfigError("unsupported lane width " + std::to_string(lane_docs));
    }
    return binarize(features, forest, kernel, policy);
}

BitMatrix binarize_pretransposed(const FeatureMatrix& features, const ObliviousForest& forest, BinarizeKind kind,
                                 const ExecPolicy& policy) {
    return binarize(features, forest, {kind, true}, policy);
}

BitMatrix canonicalize(const BitMatrix& bits) {
    const std::size_t w = Width(bits.layout());
    if (bits.layout() == BitLayout::ordered) return bits;
    BitMatrix out(BitLayout::ordered, bits.num_features(), bits.logical_docs(), bits.padded_docs());
    const auto& doc_of = Tables().doc_of[static_cast<int>(bits.layout())];
    const std::size_t block_bytes = w / 8;
    for (std::size_t k = 0; k < bits.num_features(); ++k) {
        const auto in = bits.row(k);
        auto dst = out.row(k);
        for (std::size_t byte = 0; byte < in.size(); ++byte) {
            std::uint8_t v = in[byte];
            if (v == 0) continue;
            const std::size_t block_doc = byte / block_bytes * w;
            const std::size_t base = byte % block_bytes * 8;
            for (; v != 0; v &= static_cast<std::uint8_t>(v - 1)) {
                const std::size_t doc = block_doc + doc_of[base + static_cast<unsigned>(__builtin_ctz(v))];
                dst[doc / 8] |= static_cast<std::uint8_t>(1u << (doc % 8));
            }
        }
    }
    return out;
}

int bit_at(const BitMatrix& bits, std::size_t feature, std::size_t doc) {
    if (feature >= bits.num_features() || doc >= bits.logical_docs()) {
        throw DimensionError("bit (" + std::to_string(feature) + ", " + std::to_string(doc) + ") outside " +
                             std::to_string(bits.num_features()) + "x" + std::to_string(bits.logical_docs()));
    }
    std::size_t pos = doc;
    if (bits.layout() != BitLayout::ordered) {
        const std::size_t w = Width(bits.layout());
        pos = doc / w * w + Tables().offset_of[static_cast<int>(bits.layout())][doc % w];
    }
    return (bits.row(feature)[pos / 8] >> (pos % 8)) & 1;
}

std::string dump_bits(const BitMatrix& bits) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (std::size_t k = 0; k < bits.num_features(); ++k) {
        out += "feature " + std::to_string(k) + ":";
        for (std::uint8_t b : bits.row(k)) {
            out += ' ';
            out += kHex[b >> 4];
            out += kHex[b & 15];
        }
        out += '\n';
    }
    return out;
}

std::optional<BitDivergence> first_bit_divergence(const BitMatrix& expected, const BitMatrix& actual) {
    if (expected.num_features() != actual.num_features() || expected.logical_docs() != actual.logical_docs()) {
        throw DimensionError("cannot compare " + std::to_string(expected.num_features()) + "x" +
                             std::to_string(expected.logical_docs()) + " bits with " +
                             std::to_string(actual.num_features()) + "x" + std::to_string(actual.logical_docs()));
    }
    const BitMatrix a = canonicalize(expected);
    const BitMatrix b = canonicalize(actual);
    const std::size_t docs = a.logical_docs();
    const std::size_t full_bytes = docs / 8;
    const auto tail_mask = static_cast<std::uint8_t>((1u << (docs % 8)) - 1);
    for (std::size_t k = 0; k < a.num_features(); ++k) {
        const auto ra = a.row(k);
        const auto rb = b.row(k);
        std::size_t byte = 0;
        if (std::memcmp(ra.data(), rb.data(), full_bytes) != 0) {
            while (ra[byte] == rb[byte]) ++byte;
        } else {
            byte = full_bytes;
            if (tail_mask == 0 || ((ra[byte] ^ rb[byte]) & tail_mask) == 0) continue;
        }
        const unsigned diff = static_cast<unsigned>(ra[byte] ^ rb[byte]);
        const std::size_t doc = byte * 8 + static_cast<unsigned>(__builtin_ctz(diff));
        return BitDivergence{k, doc, (ra[byte] >> (doc % 8)) & 1, (rb[byte] >> (doc % 8)) & 1};
    }
    return std::nullopt;
}

}  // namespace obliv
