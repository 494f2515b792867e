#pragma once

#include <stdexcept>
#include <string>

namespace spgan {

// Shapes, dimensions or config values that cannot describe a valid network.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// A call that is well-formed but used outside its contract (non-scalar loss, too few samples).
class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Non-finite values, non-PSD covariances and similar numeric failures.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace spgan
