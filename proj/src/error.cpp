#include "cdlgrade/error.hpp"

namespace cdlgrade {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidInput: return "invalid_input";
    case ErrorCode::Validation: return "validation_error";
    case ErrorCode::Format: return "format_error";
    case ErrorCode::Truncation: return "truncation_error";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::Config: return "config_error";
    case ErrorCode::DegenerateWhitepoint: return "degenerate_whitepoint";
    case ErrorCode::DegenerateText: return "degenerate_text";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::EmptyStore: return "empty_store";
    case ErrorCode::StaleEmbedding: return "stale_embedding";
    case ErrorCode::Load: return "load_error";
    case ErrorCode::Backend: return "backend_error";
    case ErrorCode::FixtureExhausted: return "fixture_exhausted";
    case ErrorCode::SemanticFailure: return "semantic_failure";
    case ErrorCode::SearchFailure: return "search_failure";
    case ErrorCode::ReflectionParse: return "reflection_parse_failure";
    case ErrorCode::State: return "state_error";
    case ErrorCode::AlreadyGraded: return "already_graded";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Internal: return "internal_error";
    }
    return "internal_error";
}

} // namespace cdlgrade
