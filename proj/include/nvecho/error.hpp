#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nvecho {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (negative duration, invalid quantum number, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The caller combined features that cannot work together, e.g. the closed-form
/// backend with a nonlinear response model.
class UsageError : public Error {
public:
    using Error::Error;
};

/// A fit could not be carried out on the supplied data.
class FitError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    CalibrationError(const std::string& what, double residual)
        : Error(what + " (relative residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Text input error carrying a 1-based line/column position.
class ParseError : public Error {
public:
    ParseError(const std::string& message, int line, int column)
        : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

/// Every problem found while validating a configuration, reported together.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> issues) : Error(join(issues)), issues_(std::move(issues)) {}

    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    static std::string join(const std::vector<std::string>& issues) {
        std::string out = std::to_string(issues.size()) + " configuration error" + (issues.size() == 1 ? "" : "s") + ":";
        for (const auto& i : issues) out += "\n  " + i;
        return out;
    }

    std::vector<std::string> issues_;
};

} // namespace nvecho
