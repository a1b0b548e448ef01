#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "obliv/apply.hpp"
#include "obliv/error.hpp"
#include "oracle.hpp"

using namespace obliv;

namespace {

constexpr ApplyKind kGrouped[] = {ApplyKind::batch4, ApplyKind::per_tree, ApplyKind::gather, ApplyKind::permute};

std::vector<unsigned> WidthsFor(BitLayout layout) {
    if (layout == BitLayout::ordered) return {128, 256, 512};
    return {static_cast<unsigned>(layout_block_docs(layout))};
}

// One tree of height 3 over conditions 0,1,2 evaluated on a single value 0.5:
// 0.5 < 1 true, 0.5 < 0 false, 0.5 < 2 true.
std::pair<FeatureMatrix, ObliviousForest> IndexFiveExample() {
    ObliviousForest forest;
    forest.num_float_features = 1;
    forest.feature_groups = {{0, 3}};
    forest.thresholds = {1.0f, 0.0f, 2.0f};
    forest.trees_per_height[3] = 1;
    forest.condition_indices = {0, 1, 2};
    for (std::uint32_t i = 0; i < 8; ++i) forest.leaf_answers.push_back(100 + i);
    return {FeatureMatrix(1, 1, {0.5f}), forest};
}

}  // namespace

TEST_CASE("conditions (true, false, true) select leaf 5 in every strategy") {
    const auto [x, forest] = IndexFiveExample();
    for (const auto& kernel : all_binarize_kernels()) {
        const auto bits = binarize(kernel.pretransposed ? x.transposed() : x, forest, kernel);
        CHECK(apply_naive(canonicalize(bits), forest, 1) == std::vector<std::uint64_t>{105});
        for (auto kind : kGrouped) {
            for (unsigned w : WidthsFor(bits.layout())) {
                CAPTURE(kernel.id());
                CAPTURE(ToString(kind));
                CHECK(apply_grouped(bits, forest, kind, w) == std::vector<std::uint64_t>{105});
                CHECK(build_indices(bits, forest, 0, 0, w).indices == std::vector<std::uint8_t>{5});
            }
        }
    }
}

TEST_CASE("grouped strategies equal the direct oracle on mixed-height forests") {
    for (std::size_t docs : {1, 7, 16, 100, 127, 128, 129, 257, 1000}) {
        const auto forest = generate_forest(oracle::Spec(10, 150, 2, docs));
        const auto x = generate_features(docs, 10, docs + 1);
        const auto expected = oracle::Sums(x, forest);
        CHECK(apply_naive(binarize_naive(x, forest), forest, docs) == expected);
        for (auto bk : {BinarizeKind::naive, BinarizeKind::mx128, BinarizeKind::mx256, BinarizeKind::mx512,
                        BinarizeKind::ord32}) {
            const auto bits = binarize(x, forest, {bk, false});
            for (auto kind : kGrouped) {
                for (unsigned w : WidthsFor(bits.layout())) {
                    for (const auto& policy : {ExecPolicy{}, ExecPolicy::reference()}) {
                        CAPTURE(docs);
                        const std::string kernel_id = BinarizeKernel{bk, false}.id();
                        CAPTURE(kernel_id);
                        CAPTURE(ToString(kind));
                        CAPTURE(w);
                        CHECK(apply_grouped(bits, forest, kind, w, policy) == expected);
                    }
                }
            }
        }
    }
}

TEST_CASE("index building matches condition bits whatever kernel produced them") {
    const std::size_t docs = 300;
    const auto forest = generate_forest(oracle::Spec(4, 60, 1, 77));
    const auto x = generate_features(docs, 4, 78);
    const auto src = oracle::Sources(forest);
    const auto layout = tree_layout(forest);
    for (const auto& kernel : all_binarize_kernels()) {
        const auto bits = binarize(kernel.pretransposed ? x.transposed() : x, forest, kernel);
        for (unsigned w : WidthsFor(bits.layout())) {
            const std::size_t block_docs = apply_block_docs(bits.layout(), w);
            for (std::size_t tree = 0; tree < layout.size(); ++tree) {
                for (std::size_t block = 0; block * block_docs < docs; ++block) {
                    const auto got = build_indices(bits, forest, tree, block, w);
                    const auto ref = build_indices(bits, forest, tree, block, w, ExecPolicy::reference());
                    CHECK(got.indices == ref.indices);
                    for (std::size_t i = 0; i < got.indices.size(); ++i) {
                        const std::size_t d = block * block_docs + i;
                        unsigned want = 0;
                        for (unsigned j = 0; j < layout[tree].height; ++j) {
                            const auto c = forest.condition_indices[layout[tree].condition_base + j];
                            want |= static_cast<unsigned>(oracle::Bit(x, forest, src, c, d)) << j;
                        }
                        if (got.indices[i] != want) {
                            FAIL_CHECK("index mismatch " << kernel.id() << " w" << w << " tree " << tree << " doc "
                                                         << d);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("permute register blocks follow 2^h * 32 / 512") {
    const std::size_t expected[] = {1, 1, 1, 1, 1, 2, 4, 8, 16};
    for (unsigned h = 0; h <= 8; ++h) CHECK(permute_block_count(h) == expected[h]);
    CHECK(permute_block_count(6) == 4);
    CHECK(permute_block_count(8) == 16);
    CHECK_THROWS_AS(permute_block_count(9), DimensionError);
}

TEST_CASE("permute reports its blocks and routes tall trees to gather") {
    const auto forest = generate_forest(oracle::Spec(3, 50, 1, 4));
    const auto x = generate_features(40, 3, 4);
    const auto bits = binarize(x, forest, {BinarizeKind::mx512, false});
    const auto expected = oracle::Sums(x, forest);

    ApplyStats stats;
    CHECK(apply_grouped(bits, forest, ApplyKind::permute, 512, {}, 8, &stats) == expected);
    CHECK(stats.permute_trees == 9);
    CHECK(stats.gather_fallback_trees == 0);
    CHECK(stats.permute_blocks_by_height[6] == 4);
    CHECK(stats.permute_blocks_by_height[8] == 16);

    CHECK(apply_grouped(bits, forest, ApplyKind::permute, 512, {}, kDefaultPermuteHeightCap, &stats) == expected);
    CHECK(stats.permute_trees == 7);
    CHECK(stats.gather_fallback_trees == 2);
    CHECK(stats.permute_blocks_by_height[6] == 4);
    CHECK(stats.permute_blocks_by_height[8] == 0);
}

TEST_CASE("accumulators add leaf answers per slot") {
    std::vector<std::uint32_t> leaves(256);
    for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i] = static_cast<std::uint32_t>(4'000'000'000u - i * 7);
    std::vector<std::uint8_t> idx(37);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint8_t>(i * 53 % 256);
    auto expect = [&](int times) {
        std::vector<std::uint64_t> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = static_cast<std::uint64_t>(times) * leaves[idx[i]];
        return out;
    };
    for (unsigned w : {128u, 256u, 512u}) {
        for (const auto& policy : {ExecPolicy{}, ExecPolicy::reference()}) {
            std::vector<std::uint64_t> acc(idx.size(), 0);
            accumulate_per_tree(idx, leaves, acc, w, policy);
            accumulate_gather(idx, leaves, acc, w, policy);
            CHECK(acc == expect(2));
            const std::span<const std::uint8_t> is[] = {idx, idx, idx};
            const std::span<const std::uint32_t> ls[] = {leaves, leaves, leaves};
            accumulate_batch4(is, ls, acc, w, policy);
            CHECK(acc == expect(5));
            CHECK(accumulate_permute(idx, leaves, 8, acc, policy, 8) == 16);
            CHECK(acc == expect(6));
        }
    }
    std::vector<std::uint64_t> acc(idx.size(), 0);
    CHECK_THROWS_AS(accumulate_permute(idx, leaves, 8, acc), ConfigError);
    const std::vector<std::uint32_t> small(4, 1);
    CHECK_THROWS_AS(accumulate_per_tree(idx, small, acc, 128), DimensionError);
    CHECK_THROWS_AS(accumulate_gather(idx, leaves, std::span(acc).first(3), 128), DimensionError);
    CHECK_THROWS_AS(accumulate_per_tree(idx, leaves, acc, 64), ConfigError);
}

TEST_CASE("batch boundaries do not change sums") {
    std::vector<std::uint32_t> leaves(16);
    for (std::size_t i = 0; i < 16; ++i) leaves[i] = 0xFFFFFFF0u + static_cast<std::uint32_t>(i);
    std::vector<std::uint8_t> idx(32);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint8_t>(i % 16);
    std::vector<std::uint64_t> one(32, 0), grouped(32, 0);
    for (int t = 0; t < 7; ++t) accumulate_per_tree(idx, leaves, one, 256);
    const std::span<const std::uint8_t> four_i[] = {idx, idx, idx, idx};
    const std::span<const std::uint32_t> four_l[] = {leaves, leaves, leaves, leaves};
    accumulate_batch4(four_i, four_l, grouped, 256);
    accumulate_batch4(std::span(four_i).first(3), std::span(four_l).first(3), grouped, 256);
    CHECK(one == grouped);
}

TEST_CASE("layout and width mismatches are refused") {
    const auto forest = generate_forest(oracle::Spec(2, 10, 1, 2));
    const auto x = generate_features(20, 2, 2);
    const auto inter = binarize(x, forest, {BinarizeKind::mx256, false});
    CHECK_THROWS_WITH_AS(apply_naive(inter, forest, 20), doctest::Contains("layout mismatch"), DimensionError);
    CHECK_THROWS_AS(apply_grouped(inter, forest, ApplyKind::gather, 128), ConfigError);
    CHECK_THROWS_AS(apply_grouped(inter, forest, ApplyKind::naive, 256), ConfigError);
    const auto other = generate_forest(oracle::Spec(2, 11, 1, 2));
    CHECK_THROWS_AS(apply_grouped(inter, other, ApplyKind::gather, 256), DimensionError);
    CHECK_THROWS_AS(apply_grouped(inter, forest, ApplyKind::gather, 256, ExecPolicy{CapabilitySet::none(), false}),
                    CapabilityError);
    CHECK(parse_apply_kind("grouped-permute") == ApplyKind::permute);
    CHECK_THROWS_AS(parse_apply_kind("grouped"), ConfigError);
}

TEST_CASE("finalize subtracts 2^31 once and applies scale and bias") {
    ObliviousForest forest;
    forest.scale = 0.5;
    forest.bias = 1.0;
    const std::vector<std::uint64_t> sums = {2147483648ull + 10, 2147483648ull, 0, 1ull << 40};
    const auto s = finalize_scores(sums, forest);
    CHECK(s[0] == 6.0);
    CHECK(s[1] == 1.0);
    CHECK(s[2] == -1073741823.0);
    for (std::size_t i = 0; i < sums.size(); ++i) {
        for (std::size_t j = 0; j < sums.size(); ++j) {
            const double diff = s[i] - s[j];
            const double want = (static_cast<double>(sums[i]) - static_cast<double>(sums[j])) * forest.scale;
            CHECK(std::abs(diff - want) <= 1e-9 * (std::abs(want) + 1));
        }
    }
}
