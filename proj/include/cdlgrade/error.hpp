#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdlgrade {

// Stable machine-readable error codes. The string forms are part of the HTTP
// and CLI contract; do not rename.
enum class ErrorCode {
    InvalidInput,
    Validation,
    Format,
    Truncation,
    Parse,
    Io,
    Config,
    DegenerateWhitepoint,
    DegenerateText,
    InsufficientData,
    EmptyStore,
    StaleEmbedding,
    Load,
    Backend,
    FixtureExhausted,
    SemanticFailure,
    SearchFailure,
    ReflectionParse,
    State,
    AlreadyGraded,
    NotFound,
    Internal,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace cdlgrade
