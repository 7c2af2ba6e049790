#include "vecfold/error.hpp"

#include <utility>

namespace vecfold {

std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::FileNotReadable: return "FileNotReadable";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ImageUnreadable: return "ImageUnreadable";
    case Errc::PartialWriteDetected: return "PartialWriteDetected";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::RaggedSequence: return "RaggedSequence";
    case Errc::DiskFull: return "DiskFull";
    case Errc::HandleClosed: return "HandleClosed";
    case Errc::FormatMismatch: return "FormatMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::ZeroRow: return "ZeroRow";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::NonFiniteData: return "NonFiniteData";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::UnknownCluster: return "UnknownCluster";
    case Errc::RunMismatch: return "RunMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnwritablePath: return "UnwritablePath";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigError: return "ConfigError";
    case Errc::Locked: return "Locked";
    }
    return "Unknown";
}

Error::Error(Errc code, std::string message) : code_(code), message_(std::move(message)) {}

void Error::add_context(std::string_view context) {
    message_ = std::string(context) + ": " + message_;
}

SchemaViolation::SchemaViolation(std::size_t line, std::string field, std::string reason) :
    Error(Errc::SchemaViolation,
          "line " + std::to_string(line) + ": field '" + field + "': " + reason),
    line_(line), field_(std::move(field)), reason_(std::move(reason)) {}

DuplicateId::DuplicateId(std::string id, std::size_t first_line, std::size_t second_line) :
    Error(Errc::DuplicateId,
          "duplicate id '" + id + "' at lines " + std::to_string(first_line) + " and " +
              std::to_string(second_line)),
    id_(std::move(id)), first_line_(first_line), second_line_(second_line) {}

ImageUnreadable::ImageUnreadable(std::string ref) :
    Error(Errc::ImageUnreadable, "image unreadable: " + ref), ref_(std::move(ref)) {}

ZeroRow::ZeroRow(std::size_t index) :
    Error(Errc::ZeroRow, "row " + std::to_string(index) + " has zero norm"), index_(index) {}

} // namespace vecfold
