#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace obliv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structural invariant violations. Carries every violation found, not only the first.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(Join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string Join(const std::vector<std::string>& v) {
        std::string out = "validation failed";
        for (const auto& s : v) {
            out += "; ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

// Shapes of inputs disagree (feature counts, orientation, out-of-range ordinals).
class DimensionError : public Error {
public:
    using Error::Error;
};

// A kernel was asked to run on a vector tier the host (or the override) does not provide.
class CapabilityError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class FormatErrc {
    bad_magic,
    version_mismatch,
    truncated,
    invalid_content,
    trailing_bytes,
};

inline const char* ToString(FormatErrc c) {
    switch (c) {
        case FormatErrc::bad_magic: return "bad magic";
        case FormatErrc::version_mismatch: return "version mismatch";
        case FormatErrc::truncated: return "truncated stream";
        case FormatErrc::invalid_content: return "invariant violation after load";
        case FormatErrc::trailing_bytes: return "trailing bytes";
    }
    return "unknown";
}

class FormatError : public Error {
public:
    FormatError(FormatErrc code, const std::string& what)
        : Error(std::string(ToString(code)) + ": " + what), code_(code) {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

}  // namespace obliv
