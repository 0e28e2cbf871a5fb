#pragma once

#include <stdexcept>
#include <string>

namespace morphlab {

// Base error carrying a short machine-parsable category used by the CLI
// ("error: <category>: <message>", exit 1).
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

// Tensor shapes not conformable for the requested kernel.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape_error", message) {}
};

// Non-finite values, out-of-domain scalars, malformed arguments.
class ValueError : public Error {
public:
    explicit ValueError(const std::string& message) : Error("value_error", message) {}
};

// Bad configuration file or inconsistent configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config_error", message) {}
};

// File format / filesystem problems.
class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io_error", message) {}
};

// Metric asked to operate on an empty score list.
class NoDataError : public Error {
public:
    explicit NoDataError(const std::string& message) : Error("no_data", message) {}
};

// Optimization produced a non-finite loss; carries the failing step index.
class NumericError : public Error {
public:
    NumericError(const std::string& message, std::size_t step)
        : Error("numeric_error", message), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_ = 0;
};

// Internal runtime contract violated (attention row sums, bound checks).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& message) : Error("contract_error", message) {}
};

} // namespace morphlab
