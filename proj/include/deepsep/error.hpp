#pragma once

#include <stdexcept>
#include <string>

namespace deepsep {

// Base for every error raised by the library. Subclasses name the category;
// the message carries the detail.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class OptimizerError : public Error { using Error::Error; };
class SolverError : public Error { using Error::Error; };
class DegenerateError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };

class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace deepsep
