#pragma once

#include <stdexcept>
#include <string>

namespace hilnas {

// Error categories map one-to-one onto service response classes.
enum class ErrorKind {
    Validation,  // malformed input or violated precondition
    Conflict,    // operation not allowed in the current phase
    StaleState,  // template version or embedding digest mismatch
    NotFound,
    Evaluation,  // evaluator failure (non-finite loss, ...)
    Corrupt,     // unreadable archive or run log
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string field = {})
        : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

    ErrorKind kind() const noexcept { return kind_; }
    // JSON-path-like location of the offending field, empty if not applicable.
    const std::string& field() const noexcept { return field_; }

private:
    ErrorKind kind_;
    std::string field_;
};

const char* error_kind_name(ErrorKind kind) noexcept;

[[noreturn]] inline void fail_validation(const std::string& message, std::string field = {}) {
    throw Error(ErrorKind::Validation, message, std::move(field));
}

} // namespace hilnas
