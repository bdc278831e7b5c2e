#pragma once

#include <stdexcept>
#include <string>

namespace tinysv {

// Error taxonomy. Each category maps to a distinct CLI exit code (the enum
// value) so callers and scripts can dispatch without parsing messages.
enum class ErrorCode {
    io_error = 10,
    unsupported_format = 11,
    signal_too_short = 12,
    unsupported_mode = 13,
    shape_error = 14,
    missing_tensor = 15,
    bad_magic = 16,
    crc_mismatch = 17,
    version_unsupported = 18,
    bad_container = 19,
    validation_error = 20,
    push_after_flush = 21,
    double_flush = 22,
    empty_utterance = 23,
    zero_vector = 24,
    empty_enrollment = 25,
    bad_index = 26,
    malformed_line = 27,
    one_class_only = 28,
    missing_audio = 29,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::io_error: return "IoError";
        case ErrorCode::unsupported_format: return "UnsupportedFormat";
        case ErrorCode::signal_too_short: return "SignalTooShort";
        case ErrorCode::unsupported_mode: return "UnsupportedMode";
        case ErrorCode::shape_error: return "ShapeError";
        case ErrorCode::missing_tensor: return "MissingTensor";
        case ErrorCode::bad_magic: return "BadMagic";
        case ErrorCode::crc_mismatch: return "CrcMismatch";
        case ErrorCode::version_unsupported: return "VersionUnsupported";
        case ErrorCode::bad_container: return "BadContainer";
        case ErrorCode::validation_error: return "ValidationError";
        case ErrorCode::push_after_flush: return "PushAfterFlush";
        case ErrorCode::double_flush: return "DoubleFlush";
        case ErrorCode::empty_utterance: return "EmptyUtterance";
        case ErrorCode::zero_vector: return "ZeroVector";
        case ErrorCode::empty_enrollment: return "EmptyEnrollment";
        case ErrorCode::bad_index: return "BadIndex";
        case ErrorCode::malformed_line: return "MalformedLine";
        case ErrorCode::one_class_only: return "OneClassOnly";
        case ErrorCode::missing_audio: return "MissingAudio";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(code_); }
    const char* code_name() const noexcept { return error_code_name(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool ok, ErrorCode code, const std::string& message) {
    if (!ok) fail(code, message);
}

} // namespace tinysv
