#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mcusum {

// Failure categories shared by the C++ core, the C API and the CLI. The
// names are what the CLI prints, so keep them stable.
enum class ErrorCategory {
    MissingColumn,
    NonNumericCell,
    TooShort,
    NonFinite,
    DomainError,
    BandwidthTooLarge,
    DegenerateSpectrum,
    DimensionMismatch,
    MissingCriticalValue,
    NotPositiveDefinite,
    ParseError,
    IoError,
    Internal,
};

std::string_view category_name(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

}  // namespace mcusum
