#pragma once

#include <stdexcept>
#include <string>

namespace vlmt {

/// Shape or dimension disagreement between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Out-of-range id (class id, token id, coordinate index).
class IndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated call contract: bad precondition, tape misuse, config nonsense.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file, config or data record.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced, or a numeric verification failed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vlmt
