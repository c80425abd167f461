#pragma once

#include <stdexcept>
#include <string>

namespace nemc {

// Configuration errors: the caller asked for something inconsistent
// (bad shapes, unknown names, out-of-range options).  CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Integrity errors: persisted artifacts are damaged or inconsistent
// (tampered manifests, missing tensors, shape mismatches on load).
// CLI exit code 3.  `code` carries a stable machine-readable slug so
// callers can distinguish failure kinds without parsing prose.
class IntegrityError : public std::runtime_error {
public:
    IntegrityError(std::string code, const std::string& msg)
        : std::runtime_error(msg), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace nemc
