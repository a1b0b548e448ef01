#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "obliv/error.hpp"
#include "obliv/model.hpp"

namespace obliv {

namespace {

constexpr std::array<std::uint8_t, 4> kForestMagic{'O', 'B', 'F', 'V'};
constexpr std::array<std::uint8_t, 4> kFeaturesMagic{'O', 'B', 'F', 'X'};
constexpr std::uint8_t kFormatVersion = 1;

class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    std::vector<std::uint8_t> take() && { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t remaining() const noexcept { return in_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(FormatErrc::truncated, std::string("stream ends inside ") + what);
        }
    }
    // Guards count*width against the remaining length before anything is allocated.
    void need_array(std::uint64_t count, std::size_t width, const char* what) const {
        if (count > remaining() / width) {
            throw FormatError(FormatErrc::truncated, std::string("stream ends inside ") + what);
        }
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    void magic(const std::array<std::uint8_t, 4>& expected) {
        const std::size_t n = std::min<std::size_t>(4, remaining());
        if (std::memcmp(in_.data() + pos_, expected.data(), n) != 0) {
            throw FormatError(FormatErrc::bad_magic, "unexpected file signature");
        }
        need(4, "magic");
        pos_ += 4;
        const std::uint8_t version = u8("version");
        if (version != kFormatVersion) {
            throw FormatError(FormatErrc::version_mismatch,
                              "version " + std::to_string(version) + ", supported " + std::to_string(kFormatVersion));
        }
    }

    void finish() const {
        if (remaining() != 0) {
            throw FormatError(FormatErrc::trailing_bytes, std::to_string(remaining()) + " unread bytes");
        }
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> ReadFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFile(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path);
}

}  // namespace

std::vector<std::uint8_t> serialize_forest(const ObliviousForest& forest) {
    require_valid(forest);
    ByteWriter w;
    w.bytes(kForestMagic);
    w.u8(kFormatVersion);
    w.u32(forest.num_float_features);
    w.u32(static_cast<std::uint32_t>(forest.feature_groups.size()));
    for (const auto& g : forest.feature_groups) {
        w.u32(g.float_feature_index);
        w.u32(g.threshold_count);
    }
    for (float t : forest.thresholds) w.f32(t);
    for (std::uint32_t c : forest.trees_per_height) w.u32(c);
    for (std::uint32_t c : forest.condition_indices) w.u32(c);
    for (std::uint32_t v : forest.leaf_answers) w.u32(v);
    w.f64(forest.scale);
    w.f64(forest.bias);
    return std::move(w).take();
}

ObliviousForest deserialize_forest(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic(kForestMagic);

    ObliviousForest forest;
    forest.num_float_features = r.u32("feature count");
    const std::uint32_t group_count = r.u32("group count");
    r.need_array(group_count, 8, "feature groups");
    forest.feature_groups.resize(group_count);
    std::uint64_t k = 0;
    for (auto& g : forest.feature_groups) {
        g.float_feature_index = r.u32("feature groups");
        g.threshold_count = r.u32("feature groups");
        k += g.threshold_count;
    }
    r.need_array(k, 4, "thresholds");
    forest.thresholds.resize(static_cast<std::size_t>(k));
    for (auto& t : forest.thresholds) t = r.f32("thresholds");
    for (auto& c : forest.trees_per_height) c = r.u32("trees per height");

    const std::uint64_t conditions = expected_condition_count(forest.trees_per_height);
    r.need_array(conditions, 4, "condition indices");
    forest.condition_indices.resize(static_cast<std::size_t>(conditions));
    for (auto& c : forest.condition_indices) c = r.u32("condition indices");

    const std::uint64_t leaves = expected_leaf_count(forest.trees_per_height);
    r.need_array(leaves, 4, "leaf answers");
    forest.leaf_answers.resize(static_cast<std::size_t>(leaves));
    for (auto& v : forest.leaf_answers) v = r.u32("leaf answers");

    forest.scale = r.f64("scale");
    forest.bias = r.f64("bias");
    r.finish();

    auto violations = validate_forest(forest);
    if (!violations.empty()) {
        throw FormatError(FormatErrc::invalid_content, ValidationError(std::move(violations)).what());
    }
    return forest;
}

std::vector<std::uint8_t> serialize_features(const FeatureMatrix& features) {
    ByteWriter w;
    w.bytes(kFeaturesMagic);
    w.u8(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(features.num_docs()));
    w.u32(static_cast<std::uint32_t>(features.num_features()));
    w.u8(static_cast<std::uint8_t>(features.orientation()));
    for (float v : features.values()) w.f32(v);
    return std::move(w).take();
}

FeatureMatrix deserialize_features(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.magic(kFeaturesMagic);
    const std::uint32_t docs = r.u32("document count");
    const std::uint32_t feats = r.u32("feature count");
    const std::uint8_t orientation = r.u8("orientation");
    if (orientation > 1) {
        throw FormatError(FormatErrc::invalid_content, "orientation byte " + std::to_string(orientation));
    }
    const std::uint64_t count = std::uint64_t{docs} * feats;
    r.need_array(count, 4, "feature values");
    std::vector<float> values(static_cast<std::size_t>(count));
    for (auto& v : values) v = r.f32("feature values");
    r.finish();
    try {
        return FeatureMatrix(docs, feats, std::move(values), static_cast<Orientation>(orientation));
    } catch (const Error& e) {
        throw FormatError(FormatErrc::invalid_content, e.what());
    }
}

void save_forest(const std::string& path, const ObliviousForest& forest) { WriteFile(path, serialize_forest(forest)); }
ObliviousForest load_forest(const std::string& path) { return deserialize_forest(ReadFile(path)); }
void save_features(const std::string& path, const FeatureMatrix& f) { WriteFile(path, serialize_features(f)); }
FeatureMatrix load_features(const std::string& path) { return deserialize_features(ReadFile(path)); }

}  // namespace obliv
