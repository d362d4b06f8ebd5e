#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dimel {

/// Root of every error raised by the library. `kind()` is a stable,
/// machine-readable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define DIMEL_DEFINE_ERROR(Name, tag)                                        \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(tag, message) {}   \
    }

DIMEL_DEFINE_ERROR(DimensionError, "dimension");
DIMEL_DEFINE_ERROR(DomainError, "domain");
DIMEL_DEFINE_ERROR(ContractError, "contract");
DIMEL_DEFINE_ERROR(ConfigError, "config");
DIMEL_DEFINE_ERROR(TrainingError, "training");
DIMEL_DEFINE_ERROR(DegenerateBatchError, "degenerate_batch");
DIMEL_DEFINE_ERROR(EvaluationError, "evaluation");
DIMEL_DEFINE_ERROR(FormatError, "format");
DIMEL_DEFINE_ERROR(CheckpointError, "checkpoint");
DIMEL_DEFINE_ERROR(ReferenceError, "reference");
DIMEL_DEFINE_ERROR(InputError, "input");
DIMEL_DEFINE_ERROR(ProviderError, "provider");
DIMEL_DEFINE_ERROR(ProtocolError, "protocol");
DIMEL_DEFINE_ERROR(IoError, "io");

#undef DIMEL_DEFINE_ERROR

/// Data error tied to a position in a line-oriented input file.
class DataError : public Error {
public:
    DataError(const std::string& message, std::size_t line = 0)
        : Error("data", line ? message + " (line " + std::to_string(line) + ")" : message),
          detail_(message), line_(line) {}
    std::size_t line() const noexcept { return line_; }
    /// Same error with `prefix` (typically a file path) put in front.
    DataError prefixed(const std::string& prefix) const { return DataError(prefix + detail_, line_); }

private:
    std::string detail_;
    std::size_t line_;
};

} // namespace dimel
