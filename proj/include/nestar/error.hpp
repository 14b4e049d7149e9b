#pragma once

#include <stdexcept>
#include <string>

namespace nestar {

// Machine-parseable error classes. The CLI prints them as
// "error: <class>: <detail>" and maps every class to exit code 1.
enum class ErrorKind {
    invalid_parameter,
    dimension_mismatch,
    out_of_range,
    overflow,
    io,
    file_not_found,
    format,
    crc_mismatch,
    version_unsupported,
    structural_mismatch,
    config,
    divergence,
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_parameter: return "invalid-parameter";
        case ErrorKind::dimension_mismatch: return "dimension-mismatch";
        case ErrorKind::out_of_range: return "out-of-range";
        case ErrorKind::overflow: return "overflow";
        case ErrorKind::io: return "io-error";
        case ErrorKind::file_not_found: return "file-not-found";
        case ErrorKind::format: return "format-error";
        case ErrorKind::crc_mismatch: return "crc-mismatch";
        case ErrorKind::version_unsupported: return "version-unsupported";
        case ErrorKind::structural_mismatch: return "structural-mismatch";
        case ErrorKind::config: return "config-error";
        case ErrorKind::divergence: return "divergence";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + detail),
          kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) {
    throw Error(kind, detail);
}

inline void require(bool cond, ErrorKind kind, const std::string& detail) {
    if (!cond) fail(kind, detail);
}

}  // namespace nestar
