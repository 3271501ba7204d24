#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace icdn {

// Base for every error raised by the library. CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateKeyError : public Error {
public:
    explicit DuplicateKeyError(std::string key)
        : Error("duplicate (store, week, upc) key: " + key), key_(std::move(key)) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class UnitParseError : public Error {
public:
    explicit UnitParseError(std::string raw)
        : Error("unrecognized pack size '" + raw + "'"), raw_(std::move(raw)) {}
    [[nodiscard]] const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class QuadratureError : public Error {
public:
    QuadratureError(double previous, double last)
        : Error("line integral did not converge (last estimates " + std::to_string(previous) +
                ", " + std::to_string(last) + ")"),
          previous_(previous), last_(last) {}
    [[nodiscard]] double previous() const noexcept { return previous_; }
    [[nodiscard]] double last() const noexcept { return last_; }

private:
    double previous_;
    double last_;
};

class GraphError : public Error {
public:
    using Error::Error;
};

class NanGuardError : public Error {
public:
    explicit NanGuardError(std::string block)
        : Error("non-finite gradient in parameter block '" + block + "'"), block_(std::move(block)) {}
    [[nodiscard]] const std::string& block() const noexcept { return block_; }

private:
    std::string block_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace icdn
