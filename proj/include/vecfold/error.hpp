#ifndef VECFOLD_ERROR_HPP
#define VECFOLD_ERROR_HPP

#include <cstddef>
#include <exception>
#include <string>
#include <string_view>

/**
 * @file error.hpp
 *
 * @brief Exception types shared by every vecfold module.
 */

namespace vecfold {

/**
 * Machine-readable error categories. Every exception thrown by the library
 * carries one of these so callers (and the CLI exit-code mapping) can branch
 * without parsing messages.
 */
enum class Errc {
    FileNotReadable,
    SchemaViolation,
    DuplicateId,
    ProviderUnavailable,
    DimensionMismatch,
    ImageUnreadable,
    PartialWriteDetected,
    EmptySequence,
    RaggedSequence,
    DiskFull,
    HandleClosed,
    FormatMismatch,
    IndexOutOfRange,
    TruncatedFile,
    ZeroRow,
    TooFewRows,
    NonFiniteData,
    RankDeficient,
    NonFiniteGradient,
    UnknownCluster,
    RunMismatch,
    LengthMismatch,
    UnwritablePath,
    InvalidArgument,
    ConfigError,
    Locked,
};

std::string_view errc_name(Errc code);

class Error : public std::exception {
public:
    Error(Errc code, std::string message);

    Errc code() const noexcept { return code_; }
    const char* what() const noexcept override { return message_.c_str(); }

    /// Prefix the message with caller context, e.g. the post or stage being processed.
    void add_context(std::string_view context);

private:
    Errc code_;
    std::string message_;
};

class SchemaViolation : public Error {
public:
    SchemaViolation(std::size_t line, std::string field, std::string reason);

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string field_;
    std::string reason_;
};

class DuplicateId : public Error {
public:
    DuplicateId(std::string id, std::size_t first_line, std::size_t second_line);

    const std::string& id() const noexcept { return id_; }
    std::size_t first_line() const noexcept { return first_line_; }
    std::size_t second_line() const noexcept { return second_line_; }

private:
    std::string id_;
    std::size_t first_line_;
    std::size_t second_line_;
};

class ImageUnreadable : public Error {
public:
    explicit ImageUnreadable(std::string ref);

    const std::string& ref() const noexcept { return ref_; }

private:
    std::string ref_;
};

class ZeroRow : public Error {
public:
    explicit ZeroRow(std::size_t index);

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

} // namespace vecfold

#endif
