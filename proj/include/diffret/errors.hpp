#pragma once

#include <stdexcept>
#include <string>

namespace diffret {

// Exit codes used by the CLI. Library code throws, tools/main.cpp maps.
enum class ExitCode : int {
    Ok = 0,
    Generic = 1,
    Config = 2,
    Format = 3,
    Numeric = 4,
    Io = 5,
    Contract = 6,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ExitCode code() const { return code_; }

private:
    ExitCode code_;
};

// Bad user-supplied configuration (ranges, unknown keys, missing fields).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ExitCode::Config, msg) {}
};

// Malformed files: bad magic, version mismatch, truncation, shape mismatch.
class FormatError : public Error {
public:
    enum class Kind { BadMagic, BadVersion, Truncated, BadShape, BadValue };
    FormatError(Kind kind, const std::string& msg) : Error(ExitCode::Format, msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// NaN/Inf reached a tensor, division by zero norm, degenerate schedule step.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ExitCode::Numeric, msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ExitCode::Io, msg) {}
};

// Violated internal precondition (caller bug, not user input).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(ExitCode::Contract, msg) {}
};

}  // namespace diffret
