#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace obliv {

inline constexpr unsigned kMaxTreeHeight = 8;
inline constexpr std::size_t kHeightSlots = kMaxTreeHeight + 1;

// One float feature contributes `threshold_count` consecutive binary features.
struct FeatureGroup {
    std::uint32_t float_feature_index = 0;
    std::uint32_t threshold_count = 0;

    bool operator==(const FeatureGroup&) const = default;
};

// Oblivious decision forest.
//
// Binary feature k is (factor[source(k)] < thresholds[k]). Trees are stored in
// descending height order: first trees_per_height[8] trees of height 8, then
// height 7, down to the constant trees of height 0. A tree of height h owns h
// consecutive entries of condition_indices and 2^h consecutive leaf answers.
// Bit j of a leaf index is the value of the tree's j-th condition.
struct ObliviousForest {
    std::uint32_t num_float_features = 0;
    std::vector<FeatureGroup> feature_groups;
    std::vector<float> thresholds;
    std::array<std::uint32_t, kHeightSlots> trees_per_height{};
    std::vector<std::uint32_t> condition_indices;
    std::vector<std::uint32_t> leaf_answers;
    double scale = 1.0;
    double bias = 0.0;

    std::size_t num_binary_features() const noexcept { return thresholds.size(); }
    std::size_t num_trees() const noexcept;
    // Float feature index feeding each binary feature.
    std::vector<std::uint32_t> binary_feature_sources() const;

    bool operator==(const ObliviousForest&) const = default;
};

struct TreeSpan {
    unsigned height = 0;
    std::size_t condition_base = 0;
    std::size_t leaf_base = 0;

    std::size_t leaf_count() const noexcept { return std::size_t{1} << height; }
    bool operator==(const TreeSpan&) const = default;
};

// Per-tree offsets into condition_indices / leaf_answers, in storage order.
std::vector<TreeSpan> tree_layout(const ObliviousForest& forest);

std::size_t expected_condition_count(const std::array<std::uint32_t, kHeightSlots>& stc);
std::size_t expected_leaf_count(const std::array<std::uint32_t, kHeightSlots>& stc);

// Returns every violated invariant; empty means the forest is valid.
std::vector<std::string> validate_forest(const ObliviousForest& forest);
// Throws ValidationError when validate_forest reports anything.
void require_valid(const ObliviousForest& forest);

enum class Orientation : std::uint8_t {
    doc_major = 0,
    feature_major = 1,
};

// D x F matrix of finite 32-bit floats. Document-major stores row d at
// values[d*F .. d*F+F); feature-major stores column f at values[f*D .. f*D+D).
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t num_docs, std::size_t num_features, std::vector<float> values,
                  Orientation orientation = Orientation::doc_major);

    std::size_t num_docs() const noexcept { return num_docs_; }
    std::size_t num_features() const noexcept { return num_features_; }
    Orientation orientation() const noexcept { return orientation_; }
    std::span<const float> values() const noexcept { return values_; }

    float at(std::size_t doc, std::size_t feature) const noexcept {
        return orientation_ == Orientation::doc_major ? values_[doc * num_features_ + feature]
                                                      : values_[feature * num_docs_ + doc];
    }

    FeatureMatrix transposed() const;
    // First `docs` documents, same orientation.
    FeatureMatrix prefix(std::size_t docs) const;

    bool operator==(const FeatureMatrix&) const = default;

private:
    std::size_t num_docs_ = 0;
    std::size_t num_features_ = 0;
    Orientation orientation_ = Orientation::doc_major;
    std::vector<float> values_;
};

struct SyntheticSpec {
    std::uint32_t num_float_features = 1;
    std::uint32_t num_binary_features = 1;
    std::array<std::uint32_t, kHeightSlots> trees_per_height{};
    std::uint64_t seed = 0;
    std::size_t doc_count = 0;
};

// Deterministic streams keyed by (seed, purpose) so new consumers never perturb old ones.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}
    SplitMix64(std::uint64_t seed, std::uint64_t purpose) noexcept;

    std::uint64_t next() noexcept;
    // Uniform in [0, 1) with 24 bits of mantissa.
    float next_unit_float() noexcept;
    // Uniform in [0, bound); bound must be nonzero.
    std::uint32_t next_below(std::uint32_t bound) noexcept;

private:
    std::uint64_t state_;
};

namespace stream_tag {
inline constexpr std::uint64_t thresholds = 1;
inline constexpr std::uint64_t conditions = 2;
inline constexpr std::uint64_t leaves = 3;
inline constexpr std::uint64_t features = 4;
}  // namespace stream_tag

ObliviousForest generate_forest(const SyntheticSpec& spec);
FeatureMatrix generate_features(std::size_t doc_count, std::size_t num_features, std::uint64_t seed);

// Binary formats (little-endian). Forest: "OBFV" v1. Features: "OBFX" v1.
std::vector<std::uint8_t> serialize_forest(const ObliviousForest& forest);
ObliviousForest deserialize_forest(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_features(const FeatureMatrix& features);
FeatureMatrix deserialize_features(std::span<const std::uint8_t> bytes);

void save_forest(const std::string& path, const ObliviousForest& forest);
ObliviousForest load_forest(const std::string& path);
void save_features(const std::string& path, const FeatureMatrix& features);
FeatureMatrix load_features(const std::string& path);

}  // namespace obliv
