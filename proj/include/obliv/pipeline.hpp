#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "obliv/apply.hpp"
#include "obliv/binarize.hpp"
#include "obliv/capabilities.hpp"
#include "obliv/model.hpp"

namespace obliv {

// One binarize kernel composed with one apply strategy.
//
// Text form: "<kernel>:<apply>[@<width>]", e.g. "mx256:grouped-gather@256",
// "ord32-t:grouped-permute@512", "naive:naive". A missing width means auto; a
// non-default permute cap is appended as "/cap=N".
struct StrategyConfig {
    BinarizeKernel binarize;
    ApplyKind apply = ApplyKind::naive;
    // 0 = auto: W for interleaved-W bits, otherwise the widest tier the policy allows.
    unsigned width = 0;
    unsigned permute_height_cap = kDefaultPermuteHeightCap;

    std::string id() const;
    static StrategyConfig parse(std::string_view id);
    // Lines of key=value (binarize, apply, width, permute_cap); '#' starts a comment.
    static StrategyConfig parse_file_text(std::string_view text);
    static StrategyConfig load_file(const std::string& path);

    // Width the grouped stage runs at under `caps` (0 for naive apply).
    unsigned resolved_width(const CapabilitySet& caps) const;
    // Throws ConfigError when the combination is outside the compatibility matrix.
    void check_compatible() const;

    bool operator==(const StrategyConfig&) const = default;
};

// Every supported combination: interleaved kernels with naive apply and the four
// grouped strategies at their own width; naive and ordered kernels with naive
// apply and the four grouped strategies at 128, 256 and 512.
std::vector<StrategyConfig> shipped_configs();

std::vector<std::uint64_t> evaluate_sums(const FeatureMatrix& features, const ObliviousForest& forest,
                                         const StrategyConfig& config, const ExecPolicy& policy = {},
                                         ApplyStats* stats = nullptr);
// The apply stage alone; interleaved bits are canonicalized first for naive apply.
std::vector<std::uint64_t> apply_config(const BitMatrix& bits, const ObliviousForest& forest,
                                        const StrategyConfig& config, const ExecPolicy& policy = {},
                                        ApplyStats* stats = nullptr);
std::vector<double> evaluate(const FeatureMatrix& features, const ObliviousForest& forest,
                             const StrategyConfig& config, const ExecPolicy& policy = {});

struct ConfigResult {
    std::string config;
    BitMatrix bits;  // canonical (ordered) layout
    std::vector<std::uint64_t> sums;
};

ConfigResult run_config(const FeatureMatrix& features, const ObliviousForest& forest, const StrategyConfig& config,
                        const ExecPolicy& policy = {});

struct Divergence {
    enum class Kind { bits, sums };
    std::string a;
    std::string b;
    Kind kind = Kind::sums;
    std::size_t feature = 0;  // bits only
    std::size_t doc = 0;
    std::uint64_t value_a = 0;
    std::uint64_t value_b = 0;

    std::string describe() const;
};

struct EquivalenceReport {
    std::size_t configs = 0;
    std::vector<Divergence> divergences;

    bool passed() const noexcept { return divergences.empty(); }
};

// First bit divergence and first sum divergence for every differing pair.
EquivalenceReport compare_results(const std::vector<ConfigResult>& results);

EquivalenceReport verify_equivalence(const FeatureMatrix& features, const ObliviousForest& forest,
                                     const std::vector<StrategyConfig>& configs, const ExecPolicy& policy = {});

}  // namespace obliv
