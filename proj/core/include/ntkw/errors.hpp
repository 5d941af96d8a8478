#pragma once

#include <stdexcept>
#include <string>

namespace ntkw {

// Error hierarchy mirrors the CLI exit-code contract:
//   ArgumentError -> 2, DataError -> 3, NumericError -> 4.
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ntkw
