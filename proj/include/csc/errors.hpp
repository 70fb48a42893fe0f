#pragma once

#include <stdexcept>
#include <string>

namespace csc {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& msg) : Error(msg) {}
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

class RankDeficient : public Error {
public:
    explicit RankDeficient(const std::string& msg) : Error(msg) {}
};

class NotSymmetric : public Error {
public:
    explicit NotSymmetric(const std::string& msg) : Error(msg) {}
};

class DegenerateProjection : public Error {
public:
    explicit DegenerateProjection(const std::string& msg) : Error(msg) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

// Parse failure in a text file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line = 0)
        : Error(line ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace csc
