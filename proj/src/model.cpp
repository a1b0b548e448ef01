#include "obliv/model.hpp"

#include <cmath>
#include <numeric>

#include "obliv/error.hpp"

namespace obliv {

namespace {

constexpr std::uint64_t Mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

SplitMix64::SplitMix64(std::uint64_t seed, std::uint64_t purpose) noexcept
    : state_(Mix64(seed ^ Mix64(purpose + 0x9E3779B97F4A7C15ULL))) {}

std::uint64_t SplitMix64::next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return Mix64(state_);
}

float SplitMix64::next_unit_float() noexcept {
    return static_cast<float>(next() >> 40) * 0x1.0p-24f;
}

std::uint32_t SplitMix64::next_below(std::uint32_t bound) noexcept {
    return static_cast<std::uint32_t>(((next() >> 32) * bound) >> 32);
}

std::size_t ObliviousForest::num_trees() const noexcept {
    return std::accumulate(trees_per_height.begin(), trees_per_height.end(), std::size_t{0});
}

std::vector<std::uint32_t> ObliviousForest::binary_feature_sources() const {
    std::vector<std::uint32_t> sources;
    sources.reserve(thresholds.size());
    for (const auto& group : feature_groups) {
        sources.insert(sources.end(), group.threshold_count, group.float_feature_index);
    }
    return sources;
}

std::size_t expected_condition_count(const std::array<std::uint32_t, kHeightSlots>& stc) {
    std::size_t total = 0;
    for (std::size_t h = 0; h < kHeightSlots; ++h) total += h * stc[h];
    return total;
}

std::size_t expected_leaf_count(const std::array<std::uint32_t, kHeightSlots>& stc) {
    std::size_t total = 0;
    for (std::size_t h = 0; h < kHeightSlots; ++h) total += (std::size_t{1} << h) * stc[h];
    return total;
}

std::vector<TreeSpan> tree_layout(const ObliviousForest& forest) {
    std::vector<TreeSpan> layout;
    layout.reserve(forest.num_trees());
    std::size_t condition_base = 0;
    std::size_t leaf_base = 0;
    for (std::size_t h = kHeightSlots; h-- > 0;) {
        for (std::uint32_t t = 0; t < forest.trees_per_height[h]; ++t) {
            layout.push_back({static_cast<unsigned>(h), condition_base, leaf_base});
            condition_base += h;
            leaf_base += std::size_t{1} << h;
        }
    }
    return layout;
}

std::vector<std::string> validate_forest(const ObliviousForest& forest) {
    std::vector<std::string> violations;
    const std::size_t k = forest.thresholds.size();

    std::size_t declared = 0;
    for (std::size_t g = 0; g < forest.feature_groups.size(); ++g) {
        const auto& group = forest.feature_groups[g];
        if (group.float_feature_index >= forest.num_float_features) {
            violations.push_back("feature group " + std::to_string(g) + ": float feature index " +
                                 std::to_string(group.float_feature_index) + " out of range (F=" +
                                 std::to_string(forest.num_float_features) + ")");
        }
        if (group.threshold_count == 0) {
            violations.push_back("feature group " + std::to_string(g) + ": zero threshold count");
        }
        declared += group.threshold_count;
    }
    if (declared != k) {
        violations.push_back("threshold array length " + std::to_string(k) +
                             " differs from feature group total " + std::to_string(declared));
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(forest.thresholds[i])) {
            violations.push_back("threshold " + std::to_string(i) + " not finite");
            break;
        }
    }

    const std::size_t want_conditions = expected_condition_count(forest.trees_per_height);
    if (forest.condition_indices.size() != want_conditions) {
        violations.push_back("condition array length " + std::to_string(forest.condition_indices.size()) +
                             " != " + std::to_string(want_conditions));
    }
    const std::size_t want_leaves = expected_leaf_count(forest.trees_per_height);
    if (forest.leaf_answers.size() != want_leaves) {
        violations.push_back("leaf array length " + std::to_string(forest.leaf_answers.size()) + " != " +
                             std::to_string(want_leaves));
    }
    for (std::size_t i = 0; i < forest.condition_indices.size(); ++i) {
        if (forest.condition_indices[i] >= k) {
            violations.push_back("condition index out of range at " + std::to_string(i) + ": " +
                                 std::to_string(forest.condition_indices[i]) + " >= K=" + std::to_string(k));
            break;
        }
    }
    if (!std::isfinite(forest.scale) || !std::isfinite(forest.bias)) {
        violations.push_back("scale/bias not finite");
    }
    return violations;
}

void require_valid(const ObliviousForest& forest) {
    auto violations = validate_forest(forest);
    if (!violations.empty()) throw ValidationError(std::move(violations));
}

FeatureMatrix::FeatureMatrix(std::size_t num_docs, std::size_t num_features, std::vector<float> values,
                             Orientation orientation)
    : num_docs_(num_docs), num_features_(num_features), orientation_(orientation), values_(std::move(values)) {
    if (values_.size() != num_docs_ * num_features_) {
        throw DimensionError("feature matrix holds " + std::to_string(values_.size()) + " values, expected " +
                             std::to_string(num_docs_ * num_features_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw ValidationError({"feature value " + std::to_string(i) + " not finite"});
        }
    }
}

FeatureMatrix FeatureMatrix::transposed() const {
    std::vector<float> out(values_.size());
    const Orientation target =
        orientation_ == Orientation::doc_major ? Orientation::feature_major : Orientation::doc_major;
    for (std::size_t d = 0; d < num_docs_; ++d) {
        for (std::size_t f = 0; f < num_features_; ++f) {
            const float v = at(d, f);
            if (target == Orientation::doc_major) {
                out[d * num_features_ + f] = v;
            } else {
                out[f * num_docs_ + d] = v;
            }
        }
    }
    FeatureMatrix result;
    result.num_docs_ = num_docs_;
    result.num_features_ = num_features_;
    result.orientation_ = target;
    result.values_ = std::move(out);
    return result;
}

FeatureMatrix FeatureMatrix::prefix(std::size_t docs) const {
    if (docs > num_docs_) throw DimensionError("prefix longer than matrix");
    FeatureMatrix result;
    result.num_docs_ = docs;
    result.num_features_ = num_features_;
    result.orientation_ = orientation_;
    if (orientation_ == Orientation::doc_major) {
        result.values_.assign(values_.begin(), values_.begin() + static_cast<std::ptrdiff_t>(docs * num_features_));
    } else {
        result.values_.reserve(docs * num_features_);
        for (std::size_t f = 0; f < num_features_; ++f) {
            const auto row = values_.begin() + static_cast<std::ptrdiff_t>(f * num_docs_);
            result.values_.insert(result.values_.end(), row, row + static_cast<std::ptrdiff_t>(docs));
        }
    }
    return result;
}

ObliviousForest generate_forest(const SyntheticSpec& spec) {
    std::vector<std::string> violations;
    if (spec.num_float_features < 1) violations.emplace_back("F must be >= 1");
    bool deep_tree = false;
    for (std::size_t h = 1; h < kHeightSlots; ++h) deep_tree = deep_tree || spec.trees_per_height[h] > 0;
    if (deep_tree && spec.num_binary_features < 1) {
        violations.emplace_back("K must be >= 1 when any tree has height > 0");
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));

    ObliviousForest forest;
    forest.num_float_features = spec.num_float_features;
    forest.trees_per_height = spec.trees_per_height;

    const std::uint32_t f_count = spec.num_float_features;
    const std::uint32_t k_count = spec.num_binary_features;
    const std::uint32_t base = k_count / f_count;
    const std::uint32_t remainder = k_count % f_count;
    for (std::uint32_t f = 0; f < f_count; ++f) {
        const std::uint32_t count = base + (f < remainder ? 1 : 0);
        if (count > 0) forest.feature_groups.push_back({f, count});
    }

    SplitMix64 threshold_rng(spec.seed, stream_tag::thresholds);
    forest.thresholds.resize(k_count);
    for (auto& t : forest.thresholds) t = threshold_rng.next_unit_float();

    SplitMix64 condition_rng(spec.seed, stream_tag::conditions);
    forest.condition_indices.resize(expected_condition_count(spec.trees_per_height));
    for (auto& c : forest.condition_indices) c = condition_rng.next_below(k_count);

    SplitMix64 leaf_rng(spec.seed, stream_tag::leaves);
    forest.leaf_answers.resize(expected_leaf_count(spec.trees_per_height));
    for (auto& v : forest.leaf_answers) v = static_cast<std::uint32_t>(leaf_rng.next() >> 32);

    return forest;
}

FeatureMatrix generate_features(std::size_t doc_count, std::size_t num_features, std::uint64_t seed) {
    SplitMix64 rng(seed, stream_tag::features);
    std::vector<float> values(doc_count * num_features);
    for (auto& v : values) v = rng.next_unit_float();
    return FeatureMatrix(doc_count, num_features, std::move(values));
}

}  // namespace obliv
