#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace obliv {

// What a kernel needs from the host.
enum class Tier {
    scalar,
    v128,          // SSE4.1 + SSSE3 shuffles and packs
    v256,          // AVX2
    v512,          // AVX-512 F/BW/DQ/VL
    mask_compare,  // AVX-512 compares into mask registers at every width
    gather,        // AVX2 vpgatherdd
};

const char* ToString(Tier tier);

struct CapabilitySet {
    bool v128 = false;
    bool v256 = false;
    bool v512 = false;
    bool mask_compare = false;
    bool gather = false;

    bool has(Tier tier) const noexcept;
    bool consistent() const noexcept { return (!v512 || v256) && (!v256 || v128); }
    // Narrowest tier set that still contains `tier`'s width, intersected with this set.
    CapabilitySet capped(Tier tier) const noexcept;
    std::string describe() const;

    bool operator==(const CapabilitySet&) const = default;

    static CapabilitySet none() noexcept { return {}; }
};

// What the running CPU supports. Computed once.
const CapabilitySet& hardware_capabilities();

// Hardware capabilities, lowered by the FORCE_TIER environment variable when set
// (scalar|128|256|512). Raising above the hardware is allowed here; kernels then
// refuse to launch with CapabilityError.
CapabilitySet detect_capabilities();

// Parses scalar|128|256|512 into the tier set it permits on an unlimited host.
std::optional<CapabilitySet> tier_override(std::string_view name);

// Applies `name` on top of the hardware set: the result is hardware ∩ override,
// unless `allow_above_hardware` in which case it is the override verbatim.
CapabilitySet apply_override(const CapabilitySet& hardware, std::string_view name, bool allow_above_hardware = false);

// How a kernel call chooses between its vector path and its scalar reference path.
struct ExecPolicy {
    CapabilitySet caps = detect_capabilities();
    // When the tier is missing: true runs the reference path, false throws CapabilityError.
    bool allow_fallback = false;

    static ExecPolicy reference() { return {CapabilitySet::none(), true}; }
    static ExecPolicy fallback(CapabilitySet caps) { return {caps, true}; }
};

// True when the vector path should run. Throws when the tier is missing and
// fallback is off, or when `caps` claims a tier the CPU lacks.
bool select_vector_path(const ExecPolicy& policy, Tier tier, std::string_view kernel);

// Throws CapabilityError unless `caps` lists `tier` and the hardware really provides it.
void require_tier(const CapabilitySet& caps, Tier tier, std::string_view kernel);

}  // namespace obliv
