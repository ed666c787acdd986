#pragma once

#include <stdexcept>
#include <string>

namespace coe {

enum class ErrorCategory {
    io,           // file missing, unreadable, unwritable
    format,       // malformed file contents
    validation,   // invariant violated on otherwise well-formed input
    dimension,    // vector/matrix shape mismatch
    infeasible,   // no solution under the given constraints
    upstream,     // a remote endpoint failed
};

const char* to_string(ErrorCategory category);

/// Exit code used by the CLI for a given category (0 is reserved for success).
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string message)
        : std::runtime_error(std::move(message)), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
    throw Error(category, message);
}

}  // namespace coe
