#pragma once

#include <stdexcept>
#include <string>

namespace amgnn {

/** Base class for all errors thrown by this library. */
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/** Shape or size disagreement between operands. */
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/** Structurally invalid input: out-of-range index, malformed sparsity pattern, bad splitting. */
class StructureError : public Error {
public:
    explicit StructureError(const std::string& msg) : Error(msg) {}
};

/** Numerical breakdown: zero pivot, zero diagonal, singular interpolation weight. */
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/** File-format and filesystem failures. */
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/** Invalid user-supplied configuration. */
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace amgnn
