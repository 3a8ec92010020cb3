#pragma once

#include <stdexcept>
#include <string>

namespace pcv {

// Structured error for all precondition / format violations.
class Error : public std::runtime_error {
public:
    explicit Error(std::string msg) : std::runtime_error(std::move(msg)) {}
};

} // namespace pcv
