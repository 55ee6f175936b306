#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sdagrin {

// Base of every error raised by the library. `kind()` is a short machine-readable tag.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
   public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape"; }
};

// Violated precondition of an operation (bad argument, non-scalar loss, ...).
class ContractError : public Error {
   public:
    using Error::Error;
    const char* kind() const noexcept override { return "contract"; }
};

// Bad invocation or configuration (unknown keys, malformed values).
class UsageError : public Error {
   public:
    using Error::Error;
    const char* kind() const noexcept override { return "usage"; }
};

// Problems with user data: parse failures, infeasible masks, degenerate graphs.
class DataError : public Error {
   public:
    using Error::Error;
    const char* kind() const noexcept override { return "data"; }
};

class ParseError : public DataError {
   public:
    ParseError(const std::string& file, std::size_t line, std::size_t column, const std::string& what)
        : DataError(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
          line_(line),
          column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const char* kind() const noexcept override { return "parse"; }

   private:
    std::size_t line_;
    std::size_t column_;
};

class EmptySelectionError : public ContractError {
   public:
    EmptySelectionError() : ContractError("empty selection: mean over zero entries is undefined") {}
    const char* kind() const noexcept override { return "empty-selection"; }
};

// Non-finite values appeared while running the model.
class DivergenceError : public Error {
   public:
    DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}
    long step() const noexcept { return step_; }
    const char* kind() const noexcept override { return "divergence"; }

   private:
    long step_;
};

}  // namespace sdagrin
