#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace capmeter {

/// Base of every error the library throws. `kind()` is a stable machine
/// readable tag that the HTTP layer and the CLI surface verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("input_shape", message) {}
};

class DivergenceError : public Error {
public:
    DivergenceError(std::uint64_t step, const std::string& message)
        : Error("divergence", message), step_(step) {}

    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

class EmptyDatasetError : public Error {
public:
    explicit EmptyDatasetError(const std::string& message) : Error("empty_dataset", message) {}
};

class UndefinedCapacityError : public Error {
public:
    explicit UndefinedCapacityError(const std::string& message)
        : Error("undefined_capacity", message) {}
};

/// CSV ingestion failure. `row()` is the 1-based line number in the file
/// (the header is line 1), or 0 when the problem is not tied to a line.
class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& message)
        : Error("parse", row ? "line " + std::to_string(row) + ": " + message : message),
          row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& message) : Error("schema", message) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& message) : Error("conflict", message) {}
};

class CapacityExceededError : public Error {
public:
    explicit CapacityExceededError(const std::string& message)
        : Error("capacity_exceeded", message) {}
};

}  // namespace capmeter
