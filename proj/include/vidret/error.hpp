#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vidret {

enum class ErrorCode {
    DegenerateInput,
    EmptyInput,
    InvalidArgument,
    DimensionMismatch,
    DuplicateId,
    ZeroVector,
    IoError,
    FormatError,
    UnknownColorTerm,
    MixedSpaces,
    ProviderUnavailable,
    ManifestError,
    InvalidQuery,
    NotFound,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DegenerateInput: return "degenerate_input";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::ZeroVector: return "zero_vector";
    case ErrorCode::IoError: return "io_error";
    case ErrorCode::FormatError: return "format_error";
    case ErrorCode::UnknownColorTerm: return "unknown_color_term";
    case ErrorCode::MixedSpaces: return "mixed_spaces";
    case ErrorCode::ProviderUnavailable: return "provider_unavailable";
    case ErrorCode::ManifestError: return "manifest_error";
    case ErrorCode::InvalidQuery: return "invalid_query";
    case ErrorCode::NotFound: return "not_found";
    }
    return "unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI and the HTTP layer can map it to exit codes / status codes.
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

} // namespace vidret
