#pragma once

#include <stdexcept>
#include <string>

namespace spinflow {

// Error taxonomy shared by all modules. The CLI maps these onto process
// exit codes: InvalidArgumentError/IoError -> 2, SizeLimitError -> 3,
// NumericalError -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgumentError : public Error {
public:
    explicit InvalidArgumentError(const std::string& msg) : Error(msg) {}
};

// Enumeration bounds (2^n state spaces) exceeded.
class SizeLimitError : public Error {
public:
    explicit SizeLimitError(const std::string& msg) : Error(msg) {}
};

// Singular matrices, vanishing densities, failed factorizations.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace spinflow
