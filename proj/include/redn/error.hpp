#pragma once

#include <stdexcept>
#include <string>

namespace redn {

enum class ErrorKind {
    OutOfBounds,
    OverlapViolation,
    AccessDenied,
    InvalidCapacity,
    QueueFull,
    FieldOverflow,
    NoPostedRecv,
    DeadHost,
    AlreadyDead,
    InvalidArgument,
    InsufficientCapacity,
    ScatterOverflow,
    ParseError,
};

const char* error_kind_name(ErrorKind kind);

/// Thrown for API misuse and setup-time failures. Execution-time faults
/// (key mismatch on a posted WR, missing RECV, ...) are recorded in the
/// trace instead of unwinding the simulation.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace redn
