#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ktraj {

/// Invalid user input: bad configuration, precondition violation, bad arguments.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed trajectory/density file. Carries the byte offset where parsing failed.
class FormatError : public InputError {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : InputError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Numerical failure during a run (divergence guard, non-finite values).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ktraj
