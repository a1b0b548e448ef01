#pragma once

#include <cstddef>

#include "obliv/aligned.hpp"
#include "obliv/model.hpp"

namespace obliv {

// Zero-padded, 64-byte aligned copy of a feature matrix.
//
// Document-major: padded_docs() rows of stride() floats, stride >= F rounded up to
// 16 floats. Feature-major: F rows of padded_docs() floats. Padding is always 0.0f,
// so kernels that run past the logical document count read defined values.
class PaddedArena {
public:
    PaddedArena() = default;
    PaddedArena(Orientation orientation, std::size_t logical_docs, std::size_t padded_docs, std::size_t num_features);

    Orientation orientation() const noexcept { return orientation_; }
    std::size_t logical_docs() const noexcept { return logical_docs_; }
    std::size_t padded_docs() const noexcept { return padded_docs_; }
    std::size_t num_features() const noexcept { return num_features_; }
    std::size_t stride() const noexcept { return stride_; }

    const float* data() const noexcept { return data_.data(); }
    float* data() noexcept { return data_.data(); }
    std::size_t size_bytes() const noexcept { return data_.size() * sizeof(float); }

    float at(std::size_t doc, std::size_t feature) const noexcept {
        return orientation_ == Orientation::doc_major ? data_[doc * stride_ + feature]
                                                      : data_[feature * stride_ + doc];
    }

private:
    Orientation orientation_ = Orientation::doc_major;
    std::size_t logical_docs_ = 0;
    std::size_t padded_docs_ = 0;
    std::size_t num_features_ = 0;
    std::size_t stride_ = 0;
    AlignedVector<float> data_;
};

// Rounds the document count up to a multiple of `block_docs` (16, 32, 64, 128, 256
// or 512) and copies `features` into a zero-filled arena in `target` orientation.
PaddedArena pad_arena(const FeatureMatrix& features, std::size_t block_docs, Orientation target);
// Keeps the input orientation.
PaddedArena pad_arena(const FeatureMatrix& features, std::size_t block_docs);

}  // namespace obliv
