#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obliv/aligned.hpp"
#include "obliv/arena.hpp"
#include "obliv/capabilities.hpp"
#include "obliv/model.hpp"

namespace obliv {

// Bit placement of binary-feature results inside a document block.
//
// ordered: bit i of the row (LSB first inside each byte) is document i.
// interleaved-W: blocks of W documents in 8 subgroups of W/8; bit offset i of a
// block holds document doc_of_offset(layout, i), the order the pack-based kernels
// produce. Bit s of byte j belongs to subgroup s.
enum class BitLayout : std::uint8_t {
    ordered = 0,
    interleaved128 = 1,
    interleaved256 = 2,
    interleaved512 = 3,
};

const char* ToString(BitLayout layout);
BitLayout interleaved_layout(unsigned width);
// Documents per block: 128/256/512 for interleaved layouts, 64 for ordered.
std::size_t layout_block_docs(BitLayout layout);

// Document (0-based, within its block) whose bit sits at offset `offset`.
std::size_t doc_of_offset(BitLayout layout, std::size_t offset);
// Inverse of doc_of_offset.
std::size_t offset_of_doc(BitLayout layout, std::size_t doc);

// Binarization result: for each binary feature a row of padded_docs bits, cut into
// blocks according to the layout. Bits of documents >= logical_docs are
// deterministic but carry no meaning.
class BitMatrix {
public:
    BitMatrix() = default;
    BitMatrix(BitLayout layout, std::size_t num_features, std::size_t logical_docs, std::size_t padded_docs);

    BitLayout layout() const noexcept { return layout_; }
    std::size_t num_features() const noexcept { return num_features_; }
    std::size_t logical_docs() const noexcept { return logical_docs_; }
    std::size_t padded_docs() const noexcept { return padded_docs_; }
    std::size_t row_bytes() const noexcept { return padded_docs_ / 8; }

    std::span<std::uint8_t> row(std::size_t feature) noexcept {
        return {data_.data() + feature * row_bytes(), row_bytes()};
    }
    std::span<const std::uint8_t> row(std::size_t feature) const noexcept {
        return {data_.data() + feature * row_bytes(), row_bytes()};
    }
    std::span<const std::uint8_t> bytes() const noexcept { return data_; }
    std::uint8_t* data() noexcept { return data_.data(); }
    const std::uint8_t* data() const noexcept { return data_.data(); }

    bool operator==(const BitMatrix&) const = default;

private:
    BitLayout layout_ = BitLayout::ordered;
    std::size_t num_features_ = 0;
    std::size_t logical_docs_ = 0;
    std::size_t padded_docs_ = 0;
    AlignedVector<std::uint8_t> data_;
};

enum class BinarizeKind : std::uint8_t { naive, mx128, mx256, mx512, ord16, ord32, ord64 };

// Kernel identity as used on the command line: naive, mx128, mx256, mx512, ord16,
// ord32, ord64, each optionally suffixed "-t" for feature-major input.
struct BinarizeKernel {
    BinarizeKind kind = BinarizeKind::naive;
    bool pretransposed = false;

    std::string id() const;
    static BinarizeKernel parse(std::string_view id);

    BitLayout output_layout() const noexcept;
    // Granularity the output rows are padded to.
    std::size_t block_docs() const noexcept;
    // Granularity the input arena has to be padded to.
    std::size_t arena_block_docs() const noexcept;
    Tier required_tier() const noexcept;
    Orientation input_orientation() const noexcept {
        return pretransposed ? Orientation::feature_major : Orientation::doc_major;
    }

    bool operator==(const BinarizeKernel&) const = default;
};

std::vector<BinarizeKernel> all_binarize_kernels();

inline constexpr std::size_t kTileDocs = 128;
inline constexpr std::size_t kTileFeatures = 4;
using FeatureTile = std::array<std::array<float, kTileDocs>, kTileFeatures>;

// tile[f][d] = features[doc_begin + d][feature_begin + f]. Positions past the
// logical matrix but inside the 128x4 padded bounds read as zero.
FeatureTile transpose_tile(const FeatureMatrix& features, std::size_t doc_begin, std::size_t feature_begin);

// One document at a time, one comparison at a time.
BitMatrix binarize_naive(const FeatureMatrix& features, const ObliviousForest& forest);
// Pack-based kernels over 128/256/512-document blocks.
BitMatrix binarize_interleaved(const FeatureMatrix& features, const ObliviousForest& forest, unsigned width,
                               const ExecPolicy& policy = {});
// Mask-compare kernels over 16/32/64-document lanes, ordered output.
BitMatrix binarize_ordered(const FeatureMatrix& features, const ObliviousForest& forest, unsigned lane_docs,
                           const ExecPolicy& policy = {});
// Same kernels fed with a feature-major matrix; output equals the document-major variant.
BitMatrix binarize_pretransposed(const FeatureMatrix& features, const ObliviousForest& forest, BinarizeKind kind,
                                 const ExecPolicy& policy = {});

BitMatrix binarize(const FeatureMatrix& features, const ObliviousForest& forest, BinarizeKernel kernel,
                   const ExecPolicy& policy = {});
// Arena must be padded to kernel.arena_block_docs() in kernel.input_orientation().
BitMatrix binarize(const PaddedArena& arena, const ObliviousForest& forest, BinarizeKernel kernel,
                   const ExecPolicy& policy = {});

// Same logical bits in ordered layout; padded_docs is kept.
BitMatrix canonicalize(const BitMatrix& bits);

int bit_at(const BitMatrix& bits, std::size_t feature, std::size_t doc);

// "feature k: <hex bytes>" per row.
std::string dump_bits(const BitMatrix& bits);

struct BitDivergence {
    std::size_t feature = 0;
    std::size_t doc = 0;
    int expected = 0;
    int actual = 0;
};

// First logical (feature, doc) whose bit differs; layouts may differ.
std::optional<BitDivergence> first_bit_divergence(const BitMatrix& expected, const BitMatrix& actual);

}  // namespace obliv
