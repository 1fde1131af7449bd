#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace clknn {

using Vec = std::vector<double>;

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind { config, dimension, io, contract };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* error_kind_name(ErrorKind kind);

} // namespace clknn
