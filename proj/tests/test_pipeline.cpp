#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "obliv/arena.hpp"
#include "obliv/error.hpp"
#include "obliv/pipeline.hpp"
#include "oracle.hpp"

using namespace obliv;

TEST_CASE("capability sets are nested and overridable") {
    const auto& hw = hardware_capabilities();
    CHECK(hw.consistent());
    if (hw.v512) CHECK((hw.v256 && hw.v128));
    CHECK(apply_override(hw, "scalar") == CapabilitySet::none());
    const auto c128 = apply_override(hw, "128");
    CHECK_FALSE(c128.v256);
    CHECK(c128.v128 == hw.v128);
    const auto forced = apply_override(CapabilitySet::none(), "512", true);
    CHECK((forced.v512 && forced.v256 && forced.v128 && forced.mask_compare && forced.gather));
    CHECK(apply_override(CapabilitySet::none(), "512", false) == CapabilitySet::none());
    CHECK_FALSE(tier_override("1024").has_value());
    CHECK_THROWS_AS(apply_override(hw, "avx"), ConfigError);
    CHECK_THROWS_AS(require_tier(CapabilitySet::none(), Tier::v128, "k"), CapabilityError);
    CHECK_FALSE(select_vector_path(ExecPolicy::reference(), Tier::v512, "k"));
    CHECK_FALSE(select_vector_path(ExecPolicy{}, Tier::scalar, "k"));
}

TEST_CASE("FORCE_TIER lowers detected capabilities") {
    ::setenv("FORCE_TIER", "scalar", 1);
    CHECK(detect_capabilities() == CapabilitySet::none());
    ::setenv("FORCE_TIER", "256", 1);
    CHECK_FALSE(detect_capabilities().v512);
    ::unsetenv("FORCE_TIER");
    CHECK(detect_capabilities() == hardware_capabilities());
}

TEST_CASE("a tier forced above the hardware fails at kernel launch") {
    const auto& hw = hardware_capabilities();
    if (hw.v512) {
        MESSAGE("host supports every tier; above-hardware launch not reachable here");
        return;
    }
    const auto forest = generate_forest(oracle::Spec(2, 10, 1, 1));
    const auto x = generate_features(16, 2, 1);
    const ExecPolicy forced{apply_override(hw, "512", true), false};
    CHECK_THROWS_AS(binarize(x, forest, {BinarizeKind::mx512, false}, forced), CapabilityError);
}

TEST_CASE("arena pads to the block with zeros on aligned rows") {
    const auto x = generate_features(129, 3, 1);
    const auto arena = pad_arena(x, 128);
    CHECK(arena.padded_docs() == 256);
    CHECK(arena.logical_docs() == 129);
    CHECK(reinterpret_cast<std::uintptr_t>(arena.data()) % 64 == 0);
    CHECK(arena.stride() * sizeof(float) % 64 == 0);
    for (std::size_t d = 0; d < 129; ++d) {
        for (std::size_t f = 0; f < 3; ++f) CHECK(arena.at(d, f) == x.at(d, f));
    }
    std::size_t nonzero = 0;
    for (std::size_t d = 129; d < 256; ++d) {
        for (std::size_t f = 0; f < arena.stride(); ++f) nonzero += arena.data()[d * arena.stride() + f] != 0.0f;
    }
    CHECK(nonzero == 0);

    const auto exact = pad_arena(generate_features(64, 2, 2), 64, Orientation::feature_major);
    CHECK(exact.padded_docs() == 64);
    CHECK(exact.stride() == 64);
    CHECK(pad_arena(generate_features(5, 2, 2), 16).padded_docs() == 16);
    CHECK_THROWS_AS(pad_arena(x, 100), DimensionError);
}

TEST_CASE("strategy ids parse, print and respect the compatibility matrix") {
    const auto c = StrategyConfig::parse("mx256:grouped-gather@256");
    CHECK(c.binarize == BinarizeKernel{BinarizeKind::mx256, false});
    CHECK(c.apply == ApplyKind::gather);
    CHECK(c.width == 256);
    CHECK(c.id() == "mx256:grouped-gather@256");
    CHECK(StrategyConfig::parse("ord16-t:grouped-permute@512/cap=8").permute_height_cap == 8);
    CHECK_THROWS_AS(StrategyConfig::parse("mx256:grouped-gather@128"), ConfigError);
    CHECK_THROWS_AS(StrategyConfig::parse("naive:naive@128"), ConfigError);
    CHECK_THROWS_AS(StrategyConfig::parse("naive"), ConfigError);
    CHECK_THROWS_AS(StrategyConfig::parse("naive:grouped-batch4@100"), ConfigError);
    CHECK(StrategyConfig::parse("mx512:grouped-pertree").resolved_width(hardware_capabilities()) == 512);
    CHECK(StrategyConfig::parse("ord32:grouped-pertree").resolved_width(CapabilitySet::none()) == 128);

    const auto configs = shipped_configs();
    CHECK(configs.size() == 6 * 5 + 8 * 13);
    for (const auto& cfg : configs) CHECK(StrategyConfig::parse(cfg.id()) == cfg);
}

TEST_CASE("key=value config files") {
    const auto c = StrategyConfig::parse_file_text("# comment\nbinarize = ord64\napply=grouped-permute\nwidth=512\n"
                                                   "permute_cap=8\n");
    CHECK(c.id() == "ord64:grouped-permute@512/cap=8");
    CHECK_THROWS_AS(StrategyConfig::parse_file_text("binarize=ord64\n"), ConfigError);
    CHECK_THROWS_AS(StrategyConfig::parse_file_text("binarize=ord64\napply=naive\ncolor=red\n"), ConfigError);
    const auto path = (std::filesystem::temp_directory_path() / "obliv_cfg_test.txt").string();
    std::ofstream(path) << "binarize=mx128\napply=grouped-batch4\n";
    CHECK(StrategyConfig::load_file(path).id() == "mx128:grouped-batch4");
    CHECK_THROWS_AS(StrategyConfig::load_file(path + ".missing"), ConfigError);
}

TEST_CASE("evaluate matches the oracle for every shipped config") {
    for (std::size_t docs : {1, 100, 257}) {
        auto forest = generate_forest(oracle::Spec(6, 90, 1, docs));
        forest.scale = 0.25;
        forest.bias = 3.0;
        const auto x = generate_features(docs, 6, docs * 5);
        const auto sums = oracle::Sums(x, forest);
        std::vector<double> scores(docs);
        for (std::size_t d = 0; d < docs; ++d) scores[d] = (static_cast<double>(sums[d]) - 2147483648.0) * 0.25 + 3.0;
        for (const auto& config : shipped_configs()) {
            CAPTURE(config.id());
            CHECK(evaluate_sums(x, forest, config) == sums);
            CHECK(evaluate(x, forest, config) == scores);
        }
    }
}

TEST_CASE("evaluate output does not depend on capabilities") {
    const auto forest = generate_forest(oracle::Spec(4, 70, 1, 3));
    const auto x = generate_features(140, 4, 3);
    const auto expected = oracle::Sums(x, forest);
    for (const char* tier : {"scalar", "128", "256", "512"}) {
        const ExecPolicy policy = ExecPolicy::fallback(apply_override(hardware_capabilities(), tier));
        for (const auto& config : shipped_configs()) {
            CAPTURE(tier);
            CAPTURE(config.id());
            CHECK(evaluate_sums(x, forest, config, policy) == expected);
        }
    }
}

TEST_CASE("scores of the first D documents ignore appended documents") {
    const auto forest = generate_forest(oracle::Spec(3, 30, 1, 9));
    const auto x = generate_features(300, 3, 9);
    const auto config = StrategyConfig::parse("mx512:grouped-permute@512");
    const auto all = evaluate_sums(x, forest, config);
    for (std::size_t d : {0, 1, 127, 128, 200}) {
        const auto part = evaluate_sums(x.prefix(d), forest, config);
        CHECK(part == std::vector<std::uint64_t>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(d)));
    }
    CHECK(evaluate(x.prefix(0), forest, config).empty());
}

TEST_CASE("missing tiers without fallback are refused") {
    const auto forest = generate_forest(oracle::Spec(2, 10, 1, 1));
    const auto x = generate_features(10, 2, 1);
    CHECK_THROWS_AS(evaluate_sums(x, forest, StrategyConfig::parse("naive:grouped-gather@256"),
                                  ExecPolicy{CapabilitySet::none(), false}),
                    CapabilityError);
    CHECK_THROWS_AS(evaluate_sums(generate_features(10, 3, 1), forest, StrategyConfig::parse("naive:naive")),
                    DimensionError);
}

TEST_CASE("verification passes on shipped configs and pinpoints injected faults") {
    const auto forest = generate_forest(oracle::Spec(5, 80, 1, 21));
    const auto x = generate_features(150, 5, 21);
    const auto configs = shipped_configs();
    const auto report = verify_equivalence(x, forest, configs);
    CHECK(report.passed());
    CHECK(report.configs == configs.size());

    CHECK(verify_equivalence(x, forest, {configs[3]}).passed());
    CHECK_THROWS_AS(verify_equivalence(x, forest, {}), ConfigError);

    // Corrupt one leaf that document 42 reaches in the first tree.
    auto broken = forest;
    const auto layout = tree_layout(forest);
    const auto src = oracle::Sources(forest);
    unsigned idx = 0;
    for (unsigned j = 0; j < layout[0].height; ++j) {
        idx |= static_cast<unsigned>(oracle::Bit(x, forest, src, forest.condition_indices[j], 42)) << j;
    }
    broken.leaf_answers[layout[0].leaf_base + idx] += 1;
    std::vector<ConfigResult> results = {run_config(x, forest, configs[0]), run_config(x, forest, configs[5]),
                                         run_config(x, broken, configs[7])};
    const auto faulty = compare_results(results);
    REQUIRE(faulty.divergences.size() == 2);
    for (const auto& d : faulty.divergences) {
        CHECK(d.kind == Divergence::Kind::sums);
        CHECK(d.b == configs[7].id());
        CHECK(d.value_b == d.value_a + 1);
        CHECK(d.describe().find("doc") != std::string::npos);
    }
    // The first differing document is the first one that reaches the corrupted leaf.
    std::size_t first = 0;
    while (first < 150) {
        unsigned i = 0;
        for (unsigned j = 0; j < layout[0].height; ++j) {
            i |= static_cast<unsigned>(oracle::Bit(x, forest, src, forest.condition_indices[j], first)) << j;
        }
        if (i == idx) break;
        ++first;
    }
    CHECK(faulty.divergences[0].doc == first);

    results[1].bits.row(3)[1] ^= 0x04;
    const auto bit_fault = compare_results(results);
    bool saw_bits = false;
    for (const auto& d : bit_fault.divergences) {
        if (d.kind != Divergence::Kind::bits) continue;
        saw_bits = true;
        CHECK(d.feature == 3);
        CHECK(d.doc == 10);
    }
    CHECK(saw_bits);
}
