#include "obliv/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "obliv/error.hpp"

namespace obliv {

namespace {

std::string_view Trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

unsigned ParseUnsigned(std::string_view text, std::string_view what) {
    unsigned value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw ConfigError("bad " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

const FeatureMatrix& Oriented(const FeatureMatrix& features, Orientation want, FeatureMatrix& storage) {
    if (features.orientation() == want) return features;
    storage = features.transposed();
    return storage;
}

BitMatrix RunBinarize(const FeatureMatrix& features, const ObliviousForest& forest, const StrategyConfig& config,
                      const ExecPolicy& policy) {
    FeatureMatrix storage;
    const FeatureMatrix& input = Oriented(features, config.binarize.input_orientation(), storage);
    return binarize(input, forest, config.binarize, policy);
}

void CheckInputs(const FeatureMatrix& features, const ObliviousForest& forest) {
    if (features.num_features() != forest.num_float_features) {
        throw DimensionError("documents have " + std::to_string(features.num_features()) +
                             " float features, forest expects " + std::to_string(forest.num_float_features));
    }
}

}  // namespace

std::string StrategyConfig::id() const {
    std::string out = binarize.id() + ":" + ToString(apply);
    if (width != 0) out += "@" + std::to_string(width);
    if (permute_height_cap != kDefaultPermuteHeightCap) out += "/cap=" + std::to_string(permute_height_cap);
    return out;
}

StrategyConfig StrategyConfig::parse(std::string_view id) {
    id = Trim(id);
    StrategyConfig config;
    if (const auto comma = id.find("/cap="); comma != std::string_view::npos) {
        config.permute_height_cap = ParseUnsigned(id.substr(comma + 5), "permute height cap");
        id = id.substr(0, comma);
    }
    const auto colon = id.find(':');
    if (colon == std::string_view::npos) {
        throw ConfigError("config '" + std::string(id) + "' is not <kernel>:<apply>[@width]");
    }
    config.binarize = BinarizeKernel::parse(id.substr(0, colon));
    std::string_view apply = id.substr(colon + 1);
    if (const auto at = apply.find('@'); at != std::string_view::npos) {
        config.width = ParseUnsigned(apply.substr(at + 1), "vector width");
        apply = apply.substr(0, at);
    }
    config.apply = parse_apply_kind(apply);
    config.check_compatible();
    return config;
}

StrategyConfig StrategyConfig::parse_file_text(std::string_view text) {
    StrategyConfig config;
    bool have_binarize = false;
    bool have_apply = false;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = Trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        }
        const auto key = Trim(line.substr(0, eq));
        const auto value = Trim(line.substr(eq + 1));
        if (key == "binarize") {
            config.binarize = BinarizeKernel::parse(value);
            have_binarize = true;
        } else if (key == "apply") {
            config.apply = parse_apply_kind(value);
            have_apply = true;
        } else if (key == "width") {
            config.width = value == "auto" ? 0 : ParseUnsigned(value, "vector width");
        } else if (key == "permute_cap") {
            config.permute_height_cap = ParseUnsigned(value, "permute height cap");
        } else {
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        }
    }
    if (!have_binarize || !have_apply) throw ConfigError("config file needs both binarize= and apply=");
    config.check_compatible();
    return config;
}

StrategyConfig StrategyConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_file_text(buffer.str());
}

void StrategyConfig::check_compatible() const {
    if (width != 0 && width != 128 && width != 256 && width != 512) {
        throw ConfigError("vector width must be 128, 256 or 512, got " + std::to_string(width));
    }
    if (permute_height_cap > kMaxTreeHeight) {
        throw ConfigError("permute height cap above " + std::to_string(kMaxTreeHeight));
    }
    if (apply == ApplyKind::naive) {
        if (width != 0) throw ConfigError("naive apply takes no vector width");
        return;
    }
    const BitLayout layout = binarize.output_layout();
    if (layout != BitLayout::ordered && width != 0 && width != layout_block_docs(layout)) {
        throw ConfigError(binarize.id() + " output needs apply width " + std::to_string(layout_block_docs(layout)) +
                          ", got " + std::to_string(width));
    }
}

unsigned StrategyConfig::resolved_width(const CapabilitySet& caps) const {
    if (apply == ApplyKind::naive) return 0;
    if (width != 0) return width;
    const BitLayout layout = binarize.output_layout();
    if (layout != BitLayout::ordered) return static_cast<unsigned>(layout_block_docs(layout));
    if (caps.v512) return 512;
    if (caps.v256) return 256;
    return 128;
}

std::vector<StrategyConfig> shipped_configs() {
    std::vector<StrategyConfig> configs;
    const ApplyKind grouped[] = {ApplyKind::batch4, ApplyKind::per_tree, ApplyKind::gather, ApplyKind::permute};
    for (const auto& kernel : all_binarize_kernels()) {
        configs.push_back({kernel, ApplyKind::naive, 0});
        const BitLayout layout = kernel.output_layout();
        for (auto kind : grouped) {
            if (layout != BitLayout::ordered) {
                configs.push_back({kernel, kind, static_cast<unsigned>(layout_block_docs(layout))});
                continue;
            }
            for (unsigned w : {128u, 256u, 512u}) configs.push_back({kernel, kind, w});
        }
    }
    return configs;
}

std::vector<std::uint64_t> evaluate_sums(const FeatureMatrix& features, const ObliviousForest& forest,
                                         const StrategyConfig& config, const ExecPolicy& policy, ApplyStats* stats) {
    config.check_compatible();
    CheckInputs(features, forest);
    const BitMatrix bits = RunBinarize(features, forest, config, policy);
    return apply_config(bits, forest, config, policy, stats);
}

std::vector<std::uint64_t> apply_config(const BitMatrix& bits, const ObliviousForest& forest,
                                        const StrategyConfig& config, const ExecPolicy& policy, ApplyStats* stats) {
    config.check_compatible();
    if (config.apply == ApplyKind::naive) {
        if (bits.layout() == BitLayout::ordered) return apply_naive(bits, forest, bits.logical_docs());
        return apply_naive(canonicalize(bits), forest, bits.logical_docs());
    }
    return apply_grouped(bits, forest, config.apply, config.resolved_width(policy.caps), policy,
                         config.permute_height_cap, stats);
}

std::vector<double> evaluate(const FeatureMatrix& features, const ObliviousForest& forest,
                             const StrategyConfig& config, const ExecPolicy& policy) {
    return finalize_scores(evaluate_sums(features, forest, config, policy), forest);
}

ConfigResult run_config(const FeatureMatrix& features, const ObliviousForest& forest, const StrategyConfig& config,
                        const ExecPolicy& policy) {
    config.check_compatible();
    CheckInputs(features, forest);
    BitMatrix bits = RunBinarize(features, forest, config, policy);
    auto sums = apply_config(bits, forest, config, policy, nullptr);
    if (bits.layout() != BitLayout::ordered) bits = canonicalize(bits);
    return {config.id(), std::move(bits), std::move(sums)};
}

std::string Divergence::describe() const {
    std::ostringstream out;
    out << a << " vs " << b << ": ";
    if (kind == Kind::bits) {
        out << "bit of feature " << feature << " doc " << doc << " is " << value_a << " vs " << value_b;
    } else {
        out << "sum of doc " << doc << " is " << value_a << " vs " << value_b;
    }
    return out.str();
}

EquivalenceReport compare_results(const std::vector<ConfigResult>& results) {
    EquivalenceReport report;
    report.configs = results.size();

    // Equality is transitive, so results fall into classes; only pairs across
    // classes diverge, and each such pair is reported once per kind.
    auto bits_equal = [&](std::size_t i, std::size_t j) {
        return !first_bit_divergence(results[i].bits, results[j].bits).has_value();
    };
    auto sums_equal = [&](std::size_t i, std::size_t j) { return results[i].sums == results[j].sums; };

    auto classify = [&](auto equal) {
        std::vector<std::size_t> rep_of(results.size());
        std::vector<std::size_t> reps;
        for (std::size_t i = 0; i < results.size(); ++i) {
            std::size_t c = 0;
            while (c < reps.size() && !equal(reps[c], i)) ++c;
            if (c == reps.size()) reps.push_back(i);
            rep_of[i] = c;
        }
        return rep_of;
    };
    const auto bit_class = classify(bits_equal);
    const auto sum_class = classify(sums_equal);

    for (std::size_t i = 0; i < results.size(); ++i) {
        for (std::size_t j = i + 1; j < results.size(); ++j) {
            const auto& a = results[i];
            const auto& b = results[j];
            if (bit_class[i] != bit_class[j]) {
                Divergence d{a.config, b.config, Divergence::Kind::bits};
                if (auto first = first_bit_divergence(a.bits, b.bits)) {
                    d.feature = first->feature;
                    d.doc = first->doc;
                    d.value_a = static_cast<std::uint64_t>(first->expected);
                    d.value_b = static_cast<std::uint64_t>(first->actual);
                }
                report.divergences.push_back(d);
            }
            if (sum_class[i] != sum_class[j]) {
                Divergence d{a.config, b.config, Divergence::Kind::sums};
                const std::size_t n = std::min(a.sums.size(), b.sums.size());
                d.doc = n;
                for (std::size_t k = 0; k < n; ++k) {
                    if (a.sums[k] != b.sums[k]) {
                        d.doc = k;
                        d.value_a = a.sums[k];
                        d.value_b = b.sums[k];
                        break;
                    }
                }
                report.divergences.push_back(d);
            }
        }
    }
    return report;
}

EquivalenceReport verify_equivalence(const FeatureMatrix& features, const ObliviousForest& forest,
                                     const std::vector<StrategyConfig>& configs, const ExecPolicy& policy) {
    if (configs.empty()) throw ConfigError("verify_equivalence needs at least one config");
    std::vector<ConfigResult> results;
    results.reserve(configs.size());
    for (const auto& config : configs) results.push_back(run_config(features, forest, config, policy));
    return compare_results(results);
}

}  // namespace obliv
