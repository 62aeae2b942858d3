#include "mcusum/error.hpp"

namespace mcusum {

std::string_view category_name(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::MissingColumn: return "MissingColumn";
        case ErrorCategory::NonNumericCell: return "NonNumericCell";
        case ErrorCategory::TooShort: return "TooShort";
        case ErrorCategory::NonFinite: return "NonFinite";
        case ErrorCategory::DomainError: return "DomainError";
        case ErrorCategory::BandwidthTooLarge: return "BandwidthTooLarge";
        case ErrorCategory::DegenerateSpectrum: return "DegenerateSpectrum";
        case ErrorCategory::DimensionMismatch: return "DimensionMismatch";
        case ErrorCategory::MissingCriticalValue: return "MissingCriticalValue";
        case ErrorCategory::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCategory::ParseError: return "ParseError";
        case ErrorCategory::IoError: return "IoError";
        case ErrorCategory::Internal: return "Internal";
    }
    return "Internal";
}

}  // namespace mcusum
