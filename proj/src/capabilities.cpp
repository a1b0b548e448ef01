#include "obliv/capabilities.hpp"

#include <cstdlib>

#include "obliv/error.hpp"

namespace obliv {

const char* ToString(Tier tier) {
    switch (tier) {
        case Tier::scalar: return "scalar";
        case Tier::v128: return "128-bit";
        case Tier::v256: return "256-bit";
        case Tier::v512: return "512-bit";
        case Tier::mask_compare: return "mask-compare";
        case Tier::gather: return "gather";
    }
    return "unknown";
}

bool CapabilitySet::has(Tier tier) const noexcept {
    switch (tier) {
        case Tier::scalar: return true;
        case Tier::v128: return v128;
        case Tier::v256: return v256;
        case Tier::v512: return v512;
        case Tier::mask_compare: return mask_compare;
        case Tier::gather: return gather;
    }
    return false;
}

CapabilitySet CapabilitySet::capped(Tier tier) const noexcept {
    CapabilitySet out = *this;
    switch (tier) {
        case Tier::scalar:
            return {};
        case Tier::v128:
            out.v256 = out.v512 = out.mask_compare = out.gather = false;
            return out;
        case Tier::v256:
        case Tier::gather:
            out.v512 = out.mask_compare = false;
            return out;
        case Tier::v512:
        case Tier::mask_compare:
            return out;
    }
    return out;
}

std::string CapabilitySet::describe() const {
    std::string s;
    auto add = [&s](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += ",";
        s += name;
    };
    add(v128, "128");
    add(v256, "256");
    add(v512, "512");
    add(mask_compare, "mask");
    add(gather, "gather");
    return s.empty() ? "scalar" : s;
}

const CapabilitySet& hardware_capabilities() {
    static const CapabilitySet caps = [] {
        CapabilitySet c;
#if defined(__x86_64__) || defined(__i386__)
        __builtin_cpu_init();
        c.v128 = __builtin_cpu_supports("sse4.1") && __builtin_cpu_supports("ssse3");
        c.v256 = c.v128 && __builtin_cpu_supports("avx2");
        c.gather = c.v256;
        c.v512 = c.v256 && __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw") &&
                 __builtin_cpu_supports("avx512dq") && __builtin_cpu_supports("avx512vl");
        c.mask_compare = c.v512;
#endif
        return c;
    }();
    return caps;
}

std::optional<CapabilitySet> tier_override(std::string_view name) {
    CapabilitySet all{true, true, true, true, true};
    if (name == "scalar") return all.capped(Tier::scalar);
    if (name == "128") return all.capped(Tier::v128);
    if (name == "256") return all.capped(Tier::v256);
    if (name == "512") return all;
    return std::nullopt;
}

CapabilitySet apply_override(const CapabilitySet& hardware, std::string_view name, bool allow_above_hardware) {
    const auto forced = tier_override(name);
    if (!forced) throw ConfigError("unknown tier '" + std::string(name) + "' (expected scalar|128|256|512)");
    if (allow_above_hardware) return *forced;
    CapabilitySet out;
    out.v128 = hardware.v128 && forced->v128;
    out.v256 = hardware.v256 && forced->v256;
    out.v512 = hardware.v512 && forced->v512;
    out.mask_compare = hardware.mask_compare && forced->mask_compare;
    out.gather = hardware.gather && forced->gather;
    return out;
}

CapabilitySet detect_capabilities() {
    const char* env = std::getenv("FORCE_TIER");
    if (env == nullptr || *env == '\0') return hardware_capabilities();
    return apply_override(hardware_capabilities(), env, /*allow_above_hardware=*/true);
}

void require_tier(const CapabilitySet& caps, Tier tier, std::string_view kernel) {
    if (!caps.has(tier)) {
        throw CapabilityError(std::string(kernel) + ": " + ToString(tier) + " tier not available (" +
                              caps.describe() + ")");
    }
    if (!hardware_capabilities().has(tier)) {
        throw CapabilityError(std::string(kernel) + ": " + ToString(tier) +
                              " tier forced but not supported by this CPU (" + hardware_capabilities().describe() +
                              ")");
    }
}

bool select_vector_path(const ExecPolicy& policy, Tier tier, std::string_view kernel) {
    if (tier == Tier::scalar) return false;
    if (!policy.caps.has(tier) && policy.allow_fallback) return false;
    require_tier(policy.caps, tier, kernel);
    return true;
}

}  // namespace obliv
